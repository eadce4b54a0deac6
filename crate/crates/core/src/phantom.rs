//! Synthetic skull-like phantoms with simulated network outputs.
//!
//! A phantom is a spherical shell with an optional spherical-cap defect, plus an
//! optional distractor sphere placed just outside the shell. The simulated
//! probability maps put object mass on the shell, mark the shell boundary in the
//! edge channel and add seeded Gaussian noise.
//!
//! Noise is drawn from ChaCha8 with one stream per z-slice (stream = z), two
//! normal draws per voxel in x-fastest order (object channel, then edge channel).
//! Output is therefore identical for any thread count and on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::map_range;
use crate::volume::{
    dilate6, edge_map, Dims, LabelVolume, ProbabilityVolume, Spacing, VolumeError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("distractor touches or overlaps the shell ({voxels} voxels in contact)")]
    DistractorOverlap { voxels: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Spherical-cap hole through the shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    /// Axis of the cap, from the volume centre.
    pub direction: [f64; 3],
    pub angular_radius_deg: f64,
}

/// External object with skull-like density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorSpec {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    /// Added to the object probability inside the distractor.
    pub bias: f64,
    /// Edge level on the distractor's own rim; 0 leaves it at the edge floor.
    #[serde(default)]
    pub rim_edge_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// Voxels per axis.
    pub size: usize,
    pub spacing_mm: f64,
    pub outer_radius_mm: f64,
    pub inner_radius_mm: f64,
    pub defect: Option<DefectSpec>,
    pub distractor: Option<DistractorSpec>,
    /// Noise-free object probability on the shell.
    pub object_prob: f64,
    /// Noise-free object probability elsewhere.
    pub background_prob: f64,
    /// Noise-free edge probability on the shell's edge map.
    pub edge_prob: f64,
    /// Noise-free edge probability elsewhere.
    pub edge_floor: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::scaled(64)
    }
}

impl PhantomSpec {
    /// The default layout (64 voxels, radii 20/24 mm at 1 mm) scaled to `size` voxels.
    pub fn scaled(size: usize) -> Self {
        let k = size as f64 / 64.0;
        let c = 32.0 * k;
        // Distractor 3 mm outside the shell, off-axis in the x-y plane.
        let r_d = 3.0 * k;
        let off = (24.0 * k + 3.0 * k + r_d) / std::f64::consts::SQRT_2;
        PhantomSpec {
            size,
            spacing_mm: 1.0,
            outer_radius_mm: 24.0 * k,
            inner_radius_mm: 20.0 * k,
            defect: Some(DefectSpec {
                direction: [0.0, 0.0, 1.0],
                angular_radius_deg: 30.0,
            }),
            distractor: Some(DistractorSpec {
                center_mm: [c + off, c + off, c],
                radius_mm: r_d,
                bias: 0.3,
                rim_edge_prob: 0.0,
            }),
            object_prob: 0.8,
            background_prob: 0.2,
            edge_prob: 0.9,
            edge_floor: 0.02,
            noise_sigma: 0.15,
            seed: 0,
        }
    }

    /// Shell only: no defect, no distractor, no noise.
    pub fn clean(size: usize) -> Self {
        PhantomSpec {
            defect: None,
            distractor: None,
            noise_sigma: 0.0,
            ..Self::scaled(size)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        if self.size == 0 {
            return bad("size must be positive".into());
        }
        if !(self.spacing_mm.is_finite() && self.spacing_mm > 0.0) {
            return bad(format!("spacing_mm must be > 0, got {}", self.spacing_mm));
        }
        let half = self.size as f64 * self.spacing_mm / 2.0;
        let (ri, ro) = (self.inner_radius_mm, self.outer_radius_mm);
        if !(0.0 < ri && ri < ro && ro < half) {
            return bad(format!(
                "radii must satisfy 0 < inner ({ri}) < outer ({ro}) < half extent ({half})"
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        for (name, p) in [
            ("object_prob", self.object_prob),
            ("background_prob", self.background_prob),
            ("edge_prob", self.edge_prob),
            ("edge_floor", self.edge_floor),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if let Some(d) = &self.defect {
            let norm = d.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return bad("defect direction must be non-zero".into());
            }
            if !(0.0..=180.0).contains(&d.angular_radius_deg) {
                return bad("defect angular radius must lie in [0, 180] degrees".into());
            }
        }
        if let Some(d) = &self.distractor {
            if !(d.radius_mm.is_finite() && d.radius_mm > 0.0) {
                return bad("distractor radius must be > 0".into());
            }
            if !(0.0..=1.0).contains(&d.bias) || !(0.0..=1.0).contains(&d.rim_edge_prob) {
                return bad("distractor bias and rim_edge_prob must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    fn dims(&self) -> Dims {
        Dims {
            nx: self.size,
            ny: self.size,
            nz: self.size,
        }
    }

    fn spacing(&self) -> Result<Spacing, PhantomError> {
        Ok(Spacing::isotropic(self.spacing_mm)?)
    }

    fn voxel_center(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [x, y, z].map(|i| (i as f64 + 0.5) * self.spacing_mm)
    }
}

/// A phantom with its simulated probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub spec: PhantomSpec,
    pub gt: LabelVolume,
    pub probs: ProbabilityVolume,
    pub distractor_mask: LabelVolume,
}

fn shell_mask(spec: &PhantomSpec, spacing: Spacing) -> LabelVolume {
    let c = spec.size as f64 * spec.spacing_mm / 2.0;
    let defect = spec.defect.map(|d| {
        let n = d.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        (
            d.direction.map(|v| v / n),
            d.angular_radius_deg.to_radians().cos(),
        )
    });
    LabelVolume::from_fn(spec.dims(), spacing, |x, y, z| {
        let p = spec.voxel_center(x, y, z);
        let v = [p[0] - c, p[1] - c, p[2] - c];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r < spec.inner_radius_mm || r > spec.outer_radius_mm {
            return false;
        }
        match defect {
            Some((dir, cos_max)) => v[0] * dir[0] + v[1] * dir[1] + v[2] * dir[2] < r * cos_max,
            None => true,
        }
    })
}

fn sphere_mask(spec: &PhantomSpec, spacing: Spacing, center: [f64; 3], radius: f64) -> LabelVolume {
    LabelVolume::from_fn(spec.dims(), spacing, |x, y, z| {
        let p = spec.voxel_center(x, y, z);
        let d2: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
        d2 <= radius * radius
    })
}

/// Builds a phantom deterministically from its spec.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomCase, PhantomError> {
    spec.validate()?;
    let spacing = spec.spacing()?;
    let dims = spec.dims();
    let gt = shell_mask(spec, spacing);

    let distractor_mask = match &spec.distractor {
        Some(d) => {
            let m = sphere_mask(spec, spacing, d.center_mm, d.radius_mm);
            if m.count_object() == 0 {
                return Err(PhantomError::InvalidSpec(
                    "distractor does not cover any voxel".into(),
                ));
            }
            let contact = dilate6(&gt).intersect(&m)?.count_object();
            if contact > 0 {
                return Err(PhantomError::DistractorOverlap { voxels: contact });
            }
            m
        }
        None => LabelVolume::empty(dims, spacing),
    };
    let (bias, rim_level) = spec
        .distractor
        .map_or((0.0, 0.0), |d| (d.bias, d.rim_edge_prob));

    let shell_edges = edge_map(&gt);
    let rim = edge_map(&distractor_mask);
    let (g, dm) = (gt.as_slice(), distractor_mask.as_slice());
    let (se, re) = (
        shell_edges.as_labels().as_slice(),
        rim.as_labels().as_slice(),
    );
    let sl = dims.slice_len();
    let sigma = spec.noise_sigma;

    let slices = map_range(dims.nz, dims.slice_len(), |z| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(z as u64);
        let mut p1 = Vec::with_capacity(sl);
        let mut pe = Vec::with_capacity(sl);
        for i in z * sl..(z + 1) * sl {
            let n1: f64 = StandardNormal.sample(&mut rng);
            let ne: f64 = StandardNormal.sample(&mut rng);
            let base = if g[i] != 0 {
                spec.object_prob
            } else {
                spec.background_prob
            };
            let obj = base + bias * f64::from(dm[i]) + sigma * n1;
            p1.push(obj.clamp(0.0, 1.0) as f32);
            let mut level = spec.edge_floor;
            if se[i] != 0 {
                level = spec.edge_prob;
            } else if re[i] != 0 {
                level = level.max(rim_level);
            }
            pe.push((level + sigma * ne).clamp(0.0, 1.0) as f32);
        }
        (p1, pe)
    });
    let (mut p1, mut pe) = (
        Vec::with_capacity(dims.len()),
        Vec::with_capacity(dims.len()),
    );
    for (a, b) in slices {
        p1.extend(a);
        pe.extend(b);
    }
    let probs = ProbabilityVolume::from_object_edge(dims, spacing, p1, pe)?;
    Ok(PhantomCase {
        spec: spec.clone(),
        gt,
        probs,
        distractor_mask,
    })
}

/// Raises the object probability inside the distractor to at least
/// `artifact_bias`, leaving the edge channel untouched.
pub fn corrupt_probabilities(
    case: &PhantomCase,
    artifact_bias: f64,
) -> Result<PhantomCase, PhantomError> {
    if !(0.0..=1.0).contains(&artifact_bias) {
        return Err(PhantomError::InvalidSpec(format!(
            "artifact_bias must lie in [0, 1], got {artifact_bias}"
        )));
    }
    let target = artifact_bias as f32;
    let mask = case.distractor_mask.as_slice();
    let (p0, p1, pe) = case.probs.clone().into_channels();
    let (p0, p1): (Vec<f32>, Vec<f32>) = p0
        .into_iter()
        .zip(p1)
        .zip(mask)
        .map(|((q0, q1), &m)| {
            if m != 0 && q1 < target {
                (1.0 - target, target)
            } else {
                (q0, q1)
            }
        })
        .unzip();
    let probs = ProbabilityVolume::new(case.probs.dims(), case.probs.spacing(), p0, p1, pe)?;
    Ok(PhantomCase {
        probs,
        ..case.clone()
    })
}
