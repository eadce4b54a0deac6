//! Overlap and surface-distance metrics, and the three-channel Dice loss.
//!
//! Surfaces are sets of voxel faces ("surfels") separating object voxels from
//! background or from the volume border. Surface distances are measured between
//! surfel centres, so the nearest-point error against a true mesh is bounded by
//! half a face diagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{map_range, map_slice};
use crate::volume::{edge_map, same_dims, LabelVolume, ProbabilityVolume, Spacing, VolumeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("spacing differs between inputs: {left:?} vs {right:?}")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },
    #[error("mean surface distance is undefined for an empty surface")]
    EmptySurface,
    #[error("tolerance must be finite and > 0, got {0}")]
    BadTolerance(f64),
}

/// Voxel confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Area-weighted surface confusion counts (mm²).
///
/// `tp` is the mean of the within-tolerance areas of both surfaces, `fn_` the
/// predicted area beyond tolerance and `fp` the ground-truth area beyond it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCounts {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

fn dice(tp: f64, fp: f64, fn_: f64) -> f64 {
    2.0 * tp / (2.0 * tp + fp + fn_)
}

impl VoxelCounts {
    /// `2TP / (2TP + FP + FN)`, with 1 when both masks are empty.
    pub fn dice(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            1.0
        } else {
            dice(self.tp as f64, self.fp as f64, self.fn_ as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surfel {
    /// Face centroid in mm.
    pub center: [f64; 3],
    /// Face area in mm².
    pub area: f64,
    /// Outward normal direction: `2 * axis` is `+axis`, `2 * axis + 1` is `-axis`.
    pub direction: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCellSet {
    spacing: Spacing,
    surfels: Vec<Surfel>,
}

impl SurfaceCellSet {
    /// Wraps an explicit list of surfels, e.g. from an external mesh sampler.
    pub fn from_surfels(spacing: Spacing, surfels: Vec<Surfel>) -> Self {
        SurfaceCellSet { spacing, surfels }
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn surfels(&self) -> &[Surfel] {
        &self.surfels
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.surfels.iter().map(|s| s.area).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub tolerance_mm: f64,
}

impl MetricParams {
    pub fn new(tolerance_mm: f64) -> Result<Self, MetricError> {
        if tolerance_mm.is_finite() && tolerance_mm > 0.0 {
            Ok(MetricParams { tolerance_mm })
        } else {
            Err(MetricError::BadTolerance(tolerance_mm))
        }
    }

    /// Tolerance of one voxel: the largest spacing component.
    pub fn voxel_size(spacing: Spacing) -> Self {
        MetricParams {
            tolerance_mm: spacing.max_component(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub vdc: f64,
    pub sdc: f64,
    /// `None` when either surface is empty; `error` then says why.
    pub msd_mm: Option<f64>,
    pub error: Option<String>,
    pub counts: VoxelCounts,
    pub surface_counts: SurfaceCounts,
    pub tolerance_mm: f64,
    pub spacing_mm: [f64; 3],
}

pub fn volumetric_dice(
    pred: &LabelVolume,
    gt: &LabelVolume,
) -> Result<(VoxelCounts, f64), MetricError> {
    same_dims(pred.dims(), gt.dims())?;
    let (p, g) = (pred.as_slice(), gt.as_slice());
    let mut c = VoxelCounts::default();
    for (&a, &b) in p.iter().zip(g) {
        match (a != 0, b != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok((c, c.dice()))
}

/// One surfel per object-voxel face whose neighbour is background or outside.
pub fn extract_surface(l: &LabelVolume) -> SurfaceCellSet {
    let d = l.dims();
    let s = l.spacing();
    let data = l.as_slice();
    let area = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
    let per_slice = map_range(d.nz, d.slice_len(), |z| {
        let mut out = Vec::new();
        for y in 0..d.ny {
            for x in 0..d.nx {
                let i = d.index(x, y, z);
                if data[i] == 0 {
                    continue;
                }
                let c = [
                    (x as f64 + 0.5) * s[0],
                    (y as f64 + 0.5) * s[1],
                    (z as f64 + 0.5) * s[2],
                ];
                let open = [
                    x + 1 == d.nx || data[i + 1] == 0,
                    x == 0 || data[i - 1] == 0,
                    y + 1 == d.ny || data[i + d.nx] == 0,
                    y == 0 || data[i - d.nx] == 0,
                    z + 1 == d.nz || data[i + d.slice_len()] == 0,
                    z == 0 || data[i - d.slice_len()] == 0,
                ];
                for (dir, _) in open.iter().enumerate().filter(|(_, &o)| o) {
                    let axis = dir / 2;
                    let sign = if dir % 2 == 0 { 0.5 } else { -0.5 };
                    let mut center = c;
                    center[axis] += sign * s[axis];
                    out.push(Surfel {
                        center,
                        area: area[axis],
                        direction: dir as u8,
                    });
                }
            }
        }
        out
    });
    SurfaceCellSet {
        spacing: s,
        surfels: per_slice.into_iter().flatten().collect(),
    }
}

/// Uniform bucket grid over a point set for exact nearest-neighbour queries.
struct PointIndex {
    cell: f64,
    origin: [f64; 3],
    n: [i64; 3],
    starts: Vec<usize>,
    points: Vec<[f64; 3]>,
}

impl PointIndex {
    fn new(points: &[[f64; 3]], cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let n = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / cell).floor() as i64 + 1);
        let mut idx = PointIndex {
            cell,
            origin: lo,
            n,
            starts: Vec::new(),
            points: Vec::with_capacity(points.len()),
        };
        let cells = (n[0] * n[1] * n[2]) as usize;
        let key: Vec<usize> = points.iter().map(|p| idx.flat(idx.cell_of(p))).collect();
        let mut counts = vec![0usize; cells + 1];
        for &k in &key {
            counts[k + 1] += 1;
        }
        for c in 0..cells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        idx.points = vec![[0.0; 3]; points.len()];
        for (p, &k) in points.iter().zip(&key) {
            idx.points[fill[k]] = *p;
            fill[k] += 1;
        }
        idx.starts = counts;
        idx
    }

    fn cell_of(&self, p: &[f64; 3]) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64)
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        (c[0] + self.n[0] * (c[1] + self.n[1] * c[2])) as usize
    }

    fn scan_cell(&self, c: [i64; 3], q: &[f64; 3], best: &mut f64) {
        let f = self.flat(c);
        for p in &self.points[self.starts[f]..self.starts[f + 1]] {
            let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
            let d2 = dx * dx + dy * dy + dz * dz;
            if d2 < *best {
                *best = d2;
            }
        }
    }

    /// Exact Euclidean distance from `q` to the closest indexed point.
    fn nearest(&self, q: &[f64; 3]) -> f64 {
        let qc = self.cell_of(q);
        let outside = |k: usize| (-qc[k]).max(qc[k] - (self.n[k] - 1)).max(0);
        let reach = |k: usize| qc[k].abs().max((qc[k] - (self.n[k] - 1)).abs());
        let r0 = (0..3).map(outside).max().unwrap_or(0);
        let r_max = (0..3).map(reach).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in r0..=r_max {
            let lo = [0, 1, 2].map(|k| (qc[k] - r).max(0));
            let hi = [0, 1, 2].map(|k| (qc[k] + r).min(self.n[k] - 1));
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    let shell = (x - qc[0]).abs() == r || (y - qc[1]).abs() == r;
                    if shell {
                        for z in lo[2]..=hi[2] {
                            self.scan_cell([x, y, z], q, &mut best);
                        }
                    } else {
                        // r > 0 here: at r = 0 every cell is on the shell.
                        for z in [qc[2] - r, qc[2] + r] {
                            if (lo[2]..=hi[2]).contains(&z) {
                                self.scan_cell([x, y, z], q, &mut best);
                            }
                        }
                    }
                }
            }
            // Anything in ring r + 1 or beyond is at least r cells away.
            let bound = r as f64 * self.cell;
            if best <= bound * bound {
                break;
            }
        }
        best.sqrt()
    }
}

/// Distance from each surfel centre of `from` to the nearest surfel centre of `to`.
///
/// Returns an empty vector when `from` is empty and infinities when `to` is.
pub fn nearest_distances(from: &SurfaceCellSet, to: &SurfaceCellSet) -> Vec<f64> {
    if to.is_empty() {
        return vec![f64::INFINITY; from.len()];
    }
    let pts: Vec<[f64; 3]> = to.surfels.iter().map(|s| s.center).collect();
    let index = PointIndex::new(&pts, 2.0 * to.spacing.max_component());
    map_slice(&from.surfels, |s| index.nearest(&s.center))
}

fn check_spacing(a: &SurfaceCellSet, b: &SurfaceCellSet) -> Result<(), MetricError> {
    if a.spacing != b.spacing {
        return Err(MetricError::SpacingMismatch {
            left: a.spacing.as_array(),
            right: b.spacing.as_array(),
        });
    }
    Ok(())
}

fn weighted(set: &SurfaceCellSet, dist: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    set.surfels
        .iter()
        .zip(dist)
        .filter(|(_, &d)| keep(d))
        .map(|(s, _)| s.area)
        .sum()
}

/// Area-weighted surface Dice at tolerance `t` (inclusive).
pub fn surface_dice(
    pred_s: &SurfaceCellSet,
    gt_s: &SurfaceCellSet,
    params: &MetricParams,
) -> Result<(SurfaceCounts, f64), MetricError> {
    check_spacing(pred_s, gt_s)?;
    let t = params.tolerance_mm;
    if !(t.is_finite() && t > 0.0) {
        return Err(MetricError::BadTolerance(t));
    }
    match (pred_s.is_empty(), gt_s.is_empty()) {
        (true, true) => return Ok((SurfaceCounts::default(), 1.0)),
        (true, false) => {
            let c = SurfaceCounts {
                fp: gt_s.total_area(),
                ..Default::default()
            };
            return Ok((c, 0.0));
        }
        (false, true) => {
            let c = SurfaceCounts {
                fn_: pred_s.total_area(),
                ..Default::default()
            };
            return Ok((c, 0.0));
        }
        _ => {}
    }
    let d_pred = nearest_distances(pred_s, gt_s);
    let d_gt = nearest_distances(gt_s, pred_s);
    let within_pred = weighted(pred_s, &d_pred, |d| d <= t);
    let within_gt = weighted(gt_s, &d_gt, |d| d <= t);
    let counts = SurfaceCounts {
        tp: 0.5 * (within_pred + within_gt),
        fp: weighted(gt_s, &d_gt, |d| d > t),
        fn_: weighted(pred_s, &d_pred, |d| d > t),
    };
    let sdc = (within_pred + within_gt) / (pred_s.total_area() + gt_s.total_area());
    Ok((counts, sdc))
}

/// Symmetric mean of the two directed area-weighted mean surface distances (mm).
pub fn mean_surface_distance(
    pred_s: &SurfaceCellSet,
    gt_s: &SurfaceCellSet,
) -> Result<f64, MetricError> {
    check_spacing(pred_s, gt_s)?;
    if pred_s.is_empty() || gt_s.is_empty() {
        return Err(MetricError::EmptySurface);
    }
    let directed = |from: &SurfaceCellSet, to: &SurfaceCellSet| {
        let d = nearest_distances(from, to);
        let num: f64 = from.surfels.iter().zip(&d).map(|(s, d)| s.area * d).sum();
        num / from.total_area()
    };
    Ok(0.5 * (directed(pred_s, gt_s) + directed(gt_s, pred_s)))
}

/// Forward value of the three-channel Dice loss against `gt` and its edge map.
pub fn dice_loss_3class(v: &ProbabilityVolume, gt: &LabelVolume) -> Result<f64, MetricError> {
    same_dims(v.dims(), gt.dims())?;
    let edges = edge_map(gt);
    let (g1, ge) = (gt.as_slice(), edges.as_labels().as_slice());
    let d = v.dims();
    let sl = d.slice_len();
    let parts = map_range(d.nz, d.slice_len(), |z| {
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in z * sl..(z + 1) * sl {
            let (p0, p1, pe) = v.at(i);
            let (p0, p1, pe) = (f64::from(p0), f64::from(p1), f64::from(pe));
            let g1 = f64::from(g1[i]);
            let g0 = 1.0 - g1;
            let ge = f64::from(ge[i]);
            num += p0 * g0 + p1 * g1 + pe * ge;
            den += p0 + g0 + p1 + g1 + pe + ge;
        }
        (num, den)
    });
    let (num, den) = parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok(1.0 - 2.0 * num / den)
}

/// Volumetric Dice, surface Dice and mean surface distance in one report.
pub fn evaluate(
    pred: &LabelVolume,
    gt: &LabelVolume,
    params: &MetricParams,
) -> Result<MetricsReport, MetricError> {
    same_dims(pred.dims(), gt.dims())?;
    if pred.spacing() != gt.spacing() {
        return Err(MetricError::SpacingMismatch {
            left: pred.spacing().as_array(),
            right: gt.spacing().as_array(),
        });
    }
    let (counts, vdc) = volumetric_dice(pred, gt)?;
    let (ps, gs) = (extract_surface(pred), extract_surface(gt));
    let (surface_counts, sdc) = surface_dice(&ps, &gs, params)?;
    let (msd_mm, error) = match mean_surface_distance(&ps, &gs) {
        Ok(m) => (Some(m), None),
        Err(e @ MetricError::EmptySurface) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        vdc,
        sdc,
        msd_mm,
        error,
        counts,
        surface_counts,
        tolerance_mm: params.tolerance_mm,
        spacing_mm: pred.spacing().as_array(),
    })
}
