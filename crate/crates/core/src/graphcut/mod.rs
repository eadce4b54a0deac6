//! Region/boundary flow network over a probability volume and its exact min-cut.
//!
//! Voxel `a` gets a source link of capacity `Q(-ln p0(a))` and a sink link of
//! capacity `Q(-ln p1(a))`. After the cut, source-side voxels are labeled object,
//! so an object voxel pays its sink link and a background voxel pays its source
//! link. Face neighbours `a, b` are joined by `Q(lambda * -ln max(pe(a), pe(b)))`,
//! paid when their labels differ. Probabilities are clamped to `[epsilon, 1]`
//! before the logarithm and `Q` rounds to fixed point with saturation at
//! [`CAP_MAX`].

mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{fill_chunks, map_range};
use crate::volume::{
    same_dims, validate_probability, Dims, LabelVolume, ProbabilityVolume, Spacing, VolumeError,
};

/// Saturation bound for every capacity and every accumulated energy term.
pub const CAP_MAX: u64 = 1 << 62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphCutError {
    #[error("invalid segmentation parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("capacity {value} exceeds the saturation bound")]
    CapacityTooLarge { value: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Weight of the boundary term.
    pub lambda: f64,
    /// Probability floor applied before taking logarithms.
    pub epsilon: f64,
    /// Fixed-point scale of the integer capacities.
    pub capacity_scale: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            lambda: 1.0,
            epsilon: 1e-6,
            capacity_scale: 1 << 16,
        }
    }
}

impl SegmentParams {
    pub fn with_lambda(lambda: f64) -> Self {
        SegmentParams {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), GraphCutError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(GraphCutError::Params(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.01) {
            return Err(GraphCutError::Params(format!(
                "epsilon must lie in (0, 0.01], got {}",
                self.epsilon
            )));
        }
        if self.capacity_scale == 0 {
            return Err(GraphCutError::Params("capacity_scale must be >= 1".into()));
        }
        Ok(())
    }

    /// Negative log of `p` clamped to `[epsilon, 1]`.
    #[inline]
    pub fn cost(&self, p: f32) -> f64 {
        let p = f64::from(p).clamp(self.epsilon, 1.0);
        -p.ln()
    }

    /// Fixed-point quantization with saturation.
    #[inline]
    pub fn quantize(&self, x: f64) -> u64 {
        let v = (x * self.capacity_scale as f64).round();
        if v <= 0.0 {
            0
        } else if v >= CAP_MAX as f64 {
            CAP_MAX
        } else {
            v as u64
        }
    }
}

/// 6-connected flow network with integer capacities.
///
/// Neighbour capacities are stored once per undirected face, indexed by the
/// lower voxel, so `cap(a, b) = cap(b, a)` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    dims: Dims,
    spacing: Spacing,
    capacity_scale: u64,
    source: Vec<u64>,
    sink: Vec<u64>,
    neighbor: [Vec<u64>; 3],
}

impl GridGraph {
    /// Assembles a graph from raw capacities. Entries of `neighbor[axis]` whose
    /// `+axis` neighbour falls outside the volume must be zero.
    pub fn from_parts(
        dims: Dims,
        spacing: Spacing,
        capacity_scale: u64,
        source: Vec<u64>,
        sink: Vec<u64>,
        neighbor: [Vec<u64>; 3],
    ) -> Result<Self, GraphCutError> {
        let n = dims.len();
        let channels = [
            ("source", &source),
            ("sink", &sink),
            ("neighbor_x", &neighbor[0]),
            ("neighbor_y", &neighbor[1]),
            ("neighbor_z", &neighbor[2]),
        ];
        for (channel, c) in channels {
            if c.len() != n {
                return Err(VolumeError::ChannelShape {
                    channel,
                    expected: n,
                    actual: c.len(),
                }
                .into());
            }
            if let Some(&value) = c.iter().find(|&&v| v > CAP_MAX) {
                return Err(GraphCutError::CapacityTooLarge { value });
            }
        }
        for (axis, caps) in neighbor.iter().enumerate() {
            let border = caps.iter().enumerate().any(|(i, &c)| {
                let (x, y, z) = dims.coords(i);
                c != 0 && [x + 1 == dims.nx, y + 1 == dims.ny, z + 1 == dims.nz][axis]
            });
            if border {
                return Err(GraphCutError::Params(format!(
                    "neighbor capacities along axis {axis} extend past the volume border"
                )));
            }
        }
        Ok(GridGraph {
            dims,
            spacing,
            capacity_scale,
            source,
            sink,
            neighbor,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn capacity_scale(&self) -> u64 {
        self.capacity_scale
    }

    /// Cost of labeling each voxel background.
    pub fn source_caps(&self) -> &[u64] {
        &self.source
    }

    /// Cost of labeling each voxel object.
    pub fn sink_caps(&self) -> &[u64] {
        &self.sink
    }

    /// Capacity between each voxel and its `+axis` neighbour (0 at the far border).
    pub fn neighbor_caps(&self, axis: usize) -> &[u64] {
        &self.neighbor[axis]
    }

    /// Capacity between two face-adjacent voxels, in either order.
    pub fn neighbor_cap(&self, a: usize, b: usize) -> Option<u64> {
        let (lo, hi) = (a.min(b), a.max(b));
        let step = [1, self.dims.nx, self.dims.slice_len()];
        let (x, y, z) = self.dims.coords(lo);
        let room = [
            x + 1 < self.dims.nx,
            y + 1 < self.dims.ny,
            z + 1 < self.dims.nz,
        ];
        (0..3)
            .find(|&ax| room[ax] && lo + step[ax] == hi)
            .map(|ax| self.neighbor[ax][lo])
    }

    /// Approximate heap footprint of the solver working set for this graph.
    pub fn solver_bytes(&self) -> usize {
        // residuals, terminal residual, tree/parent/valid/queued, ts/dist, queues
        self.dims.len() * (6 * 8 + 8 + 4 + 16 + 8)
    }
}

/// Output of a min-cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub labels: LabelVolume,
    /// Quantized energy of `labels`; equals `max_flow` for a minimum cut.
    pub energy: u64,
    /// Unquantized energy. Recomputed from the probabilities by [`segment`];
    /// `energy / capacity_scale` when only the graph is known.
    pub energy_real: f64,
    pub max_flow: u64,
}

/// Turns a validated probability volume into a flow network.
pub fn build_graph(
    v: &ProbabilityVolume,
    params: &SegmentParams,
) -> Result<GridGraph, GraphCutError> {
    params.validate()?;
    validate_probability(v)?;
    let d = v.dims();
    let n = d.len();
    let sl = d.slice_len();

    let mut source = vec![0u64; n];
    let mut sink = vec![0u64; n];
    fill_chunks(&mut source, sl, |z, out| {
        for (k, c) in out.iter_mut().enumerate() {
            *c = params.quantize(params.cost(v.background()[z * sl + k]));
        }
    });
    fill_chunks(&mut sink, sl, |z, out| {
        for (k, c) in out.iter_mut().enumerate() {
            *c = params.quantize(params.cost(v.object()[z * sl + k]));
        }
    });

    let pe = v.edge();
    let boundary = |a: usize, b: usize| {
        let p = pe[a].max(pe[b]);
        params.quantize(params.lambda * params.cost(p))
    };
    let step = [1, d.nx, sl];
    let neighbor = [0usize, 1, 2].map(|axis| {
        let mut caps = vec![0u64; n];
        fill_chunks(&mut caps, sl, |z, out| {
            for y in 0..d.ny {
                for x in 0..d.nx {
                    let inside = [x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz][axis];
                    if inside {
                        let a = d.index(x, y, z);
                        out[x + d.nx * y] = boundary(a, a + step[axis]);
                    }
                }
            }
        });
        caps
    });

    Ok(GridGraph {
        dims: d,
        spacing: v.spacing(),
        capacity_scale: params.capacity_scale,
        source,
        sink,
        neighbor,
    })
}

/// Terminal plus cut-neighbour cost of an arbitrary labeling.
pub fn labeling_energy(g: &GridGraph, l: &LabelVolume) -> Result<u64, GraphCutError> {
    same_dims(g.dims, l.dims())?;
    let d = g.dims;
    let sl = d.slice_len();
    let labels = l.as_slice();
    let step = [1, d.nx, sl];
    let per_slice = map_range(d.nz, d.slice_len(), |z| {
        let mut e = 0u64;
        for i in z * sl..(z + 1) * sl {
            let obj = labels[i] != 0;
            e = e.saturating_add(if obj { g.sink[i] } else { g.source[i] });
            for (axis, &st) in step.iter().enumerate() {
                let c = g.neighbor[axis][i];
                if c != 0 && (labels[i + st] != 0) != obj {
                    e = e.saturating_add(c);
                }
            }
        }
        e
    });
    Ok(per_slice.into_iter().fold(0u64, u64::saturating_add))
}

/// Exact minimum s-t cut; object labels are the voxels still reachable from the
/// source in the final residual graph.
pub fn max_flow_min_cut(g: &GridGraph) -> CutResult {
    let sol = solver::solve(g);
    let labels = LabelVolume::new(g.dims, g.spacing, sol.source_side)
        .expect("solver returns one binary label per voxel");
    let energy = labeling_energy(g, &labels).expect("labels share the graph dims");
    CutResult {
        energy_real: energy as f64 / g.capacity_scale as f64,
        labels,
        energy,
        max_flow: sol.flow,
    }
}

/// Unquantized energy of `l` under the probabilities of `v`.
pub fn real_energy(
    v: &ProbabilityVolume,
    l: &LabelVolume,
    params: &SegmentParams,
) -> Result<f64, GraphCutError> {
    same_dims(v.dims(), l.dims())?;
    let d = v.dims();
    let sl = d.slice_len();
    let labels = l.as_slice();
    let pe = v.edge();
    let per_slice = map_range(d.nz, d.slice_len(), |z| {
        let mut region = 0.0f64;
        let mut boundary = 0.0f64;
        for y in 0..d.ny {
            for x in 0..d.nx {
                let i = d.index(x, y, z);
                let obj = labels[i] != 0;
                region += if obj {
                    params.cost(v.object()[i])
                } else {
                    params.cost(v.background()[i])
                };
                let nbrs = [
                    (x + 1 < d.nx, i + 1),
                    (y + 1 < d.ny, i + d.nx),
                    (z + 1 < d.nz, i + sl),
                ];
                for (inside, j) in nbrs {
                    if inside && (labels[j] != 0) != obj {
                        boundary += params.cost(pe[i].max(pe[j]));
                    }
                }
            }
        }
        region + params.lambda * boundary
    });
    Ok(per_slice.into_iter().sum())
}

/// Probability volume in, binary segmentation out.
pub fn segment(v: &ProbabilityVolume, params: &SegmentParams) -> Result<CutResult, GraphCutError> {
    let g = build_graph(v, params)?;
    let mut cut = max_flow_min_cut(&g);
    cut.energy_real = real_energy(v, &cut.labels, params)?;
    Ok(cut)
}

/// Number of face-adjacent voxel pairs with differing labels.
pub fn boundary_size(l: &LabelVolume) -> usize {
    let d = l.dims();
    let sl = d.slice_len();
    let s = l.as_slice();
    map_range(d.nz, d.slice_len(), |z| {
        let mut c = 0usize;
        for y in 0..d.ny {
            for x in 0..d.nx {
                let i = d.index(x, y, z);
                c += usize::from(x + 1 < d.nx && s[i] != s[i + 1]);
                c += usize::from(y + 1 < d.ny && s[i] != s[i + d.nx]);
                c += usize::from(z + 1 < d.nz && s[i] != s[i + sl]);
            }
        }
        c
    })
    .into_iter()
    .sum()
}
