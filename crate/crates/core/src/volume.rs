//! Voxel-grid containers, probability validation, morphology and resampling.
//!
//! All volumes store their samples in x-fastest linear order (x, then y, then z),
//! and every module in the crate relies on that order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{fill_chunks, map_range};

/// Tolerance on `p0 + p1 = 1` for a voxel of a probability volume.
pub const SOFTMAX_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("volume dimensions must be positive, got {0}")]
    ZeroDim(Dims),
    #[error("spacing components must be finite and positive, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("data length {actual} does not match dims {dims} (expected {expected})")]
    LengthMismatch {
        dims: Dims,
        expected: usize,
        actual: usize,
    },
    #[error("channel {channel} has {actual} samples, expected {expected}")]
    ChannelShape {
        channel: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("label value {value} at voxel {index} is not 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
    #[error("probability invariant violated at voxel {index}: {violation}")]
    Probability {
        index: usize,
        violation: ProbabilityViolation,
    },
    #[error("volume shapes differ: {left} vs {right}")]
    DimsMismatch { left: Dims, right: Dims },
    #[error("label volumes only support nearest-neighbour resampling")]
    LinearOnLabels,
}

/// Which probability invariant a voxel broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityViolation {
    NotFinite,
    NegativeClass,
    SoftmaxSum,
    EdgeRange,
}

impl fmt::Display for ProbabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProbabilityViolation::NotFinite => "non-finite probability",
            ProbabilityViolation::NegativeClass => "negative class probability",
            ProbabilityViolation::SoftmaxSum => "p0 + p1 differs from 1",
            ProbabilityViolation::EdgeRange => "edge probability outside [0, 1]",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, VolumeError> {
        let d = Dims { nx, ny, nz };
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::ZeroDim(d));
        }
        Ok(d)
    }

    pub fn cube(n: usize) -> Result<Self, VolumeError> {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of voxels in one z-slice.
    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let r = i / self.nx;
        (x, r % self.ny, r / self.ny)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Physical voxel size in millimetres along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing([f64; 3]);

impl Spacing {
    pub fn new(s: [f64; 3]) -> Result<Self, VolumeError> {
        if s.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(Spacing(s))
        } else {
            Err(VolumeError::BadSpacing(s))
        }
    }

    pub fn isotropic(s: f64) -> Result<Self, VolumeError> {
        Self::new([s; 3])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn max_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::MIN, f64::max)
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing([1.0; 3])
    }
}

impl std::ops::Index<usize> for Spacing {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A dense 3D grid of samples with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

/// Real-valued volume (raw data or a single probability channel).
pub type ScalarVolume = Volume<f32>;

impl<T> Volume<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self, VolumeError> {
        check_len(dims, data.len())?;
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.dims.index(x, y, z)]
    }
}

impl<T: Copy + Send + Sync> Volume<T> {
    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Self {
        Volume {
            dims,
            spacing,
            data: vec![value; dims.len()],
        }
    }
}

fn check_len(dims: Dims, actual: usize) -> Result<(), VolumeError> {
    if dims.is_empty() {
        return Err(VolumeError::ZeroDim(dims));
    }
    if actual != dims.len() {
        return Err(VolumeError::LengthMismatch {
            dims,
            expected: dims.len(),
            actual,
        });
    }
    Ok(())
}

/// Binary volume: 1 = object, 0 = background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self, VolumeError> {
        check_len(dims, data.len())?;
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(VolumeError::InvalidLabel { index, value });
        }
        Ok(LabelVolume {
            dims,
            spacing,
            data,
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        LabelVolume {
            dims,
            spacing,
            data: vec![0; dims.len()],
        }
    }

    /// Builds a label volume from a predicate on voxel coordinates.
    pub fn from_fn<F>(dims: Dims, spacing: Spacing, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> bool + Sync + Send,
    {
        let mut data = vec![0u8; dims.len()];
        fill_chunks(&mut data, dims.slice_len(), |z, slice| {
            for (k, v) in slice.iter_mut().enumerate() {
                let (x, y) = (k % dims.nx, k / dims.nx);
                *v = u8::from(f(x, y, z));
            }
        });
        LabelVolume {
            dims,
            spacing,
            data,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn is_object(&self, i: usize) -> bool {
        self.data[i] != 0
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.is_object(self.dims.index(x, y, z))
    }

    pub fn count_object(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Same geometry, new spacing metadata.
    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    /// Voxel-wise `self AND other`.
    pub fn intersect(&self, other: &LabelVolume) -> Result<LabelVolume, VolumeError> {
        self.zip_with(other, |a, b| a & b)
    }

    /// Voxel-wise `self OR other`.
    pub fn union(&self, other: &LabelVolume) -> Result<LabelVolume, VolumeError> {
        self.zip_with(other, |a, b| a | b)
    }

    fn zip_with(
        &self,
        other: &LabelVolume,
        f: impl Fn(u8, u8) -> u8,
    ) -> Result<LabelVolume, VolumeError> {
        same_dims(self.dims, other.dims)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(LabelVolume {
            dims: self.dims,
            spacing: self.spacing,
            data,
        })
    }
}

pub(crate) fn same_dims(left: Dims, right: Dims) -> Result<(), VolumeError> {
    if left == right {
        Ok(())
    } else {
        Err(VolumeError::DimsMismatch { left, right })
    }
}

/// Edge ground truth: background voxels face-adjacent to the object.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap(LabelVolume);

impl EdgeMap {
    pub fn as_labels(&self) -> &LabelVolume {
        &self.0
    }

    pub fn into_labels(self) -> LabelVolume {
        self.0
    }

    pub fn count(&self) -> usize {
        self.0.count_object()
    }
}

/// Three-channel network output: background `p0`, object `p1` and edge `pe`.
///
/// `p0` and `p1` form a softmax pair; `pe` is an independent sigmoid channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    dims: Dims,
    spacing: Spacing,
    p0: Vec<f32>,
    p1: Vec<f32>,
    pe: Vec<f32>,
}

impl ProbabilityVolume {
    /// Checks channel shapes only; see [`validate_probability`] for the value invariants.
    pub fn new(
        dims: Dims,
        spacing: Spacing,
        p0: Vec<f32>,
        p1: Vec<f32>,
        pe: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        if dims.is_empty() {
            return Err(VolumeError::ZeroDim(dims));
        }
        for (channel, c) in [("p0", &p0), ("p1", &p1), ("pe", &pe)] {
            if c.len() != dims.len() {
                return Err(VolumeError::ChannelShape {
                    channel,
                    expected: dims.len(),
                    actual: c.len(),
                });
            }
        }
        Ok(ProbabilityVolume {
            dims,
            spacing,
            p0,
            p1,
            pe,
        })
    }

    /// Builds from object and edge probabilities, with `p0 = 1 - p1`.
    pub fn from_object_edge(
        dims: Dims,
        spacing: Spacing,
        p1: Vec<f32>,
        pe: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        let p0 = p1.iter().map(|&p| 1.0 - p).collect();
        Self::new(dims, spacing, p0, p1, pe)
    }

    /// Every voxel set to the same `(p0, p1, pe)` triple.
    pub fn uniform(dims: Dims, spacing: Spacing, p0: f32, p1: f32, pe: f32) -> Self {
        let n = dims.len();
        ProbabilityVolume {
            dims,
            spacing,
            p0: vec![p0; n],
            p1: vec![p1; n],
            pe: vec![pe; n],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn background(&self) -> &[f32] {
        &self.p0
    }

    pub fn object(&self) -> &[f32] {
        &self.p1
    }

    pub fn edge(&self) -> &[f32] {
        &self.pe
    }

    /// `(p0, p1, pe)` at linear index `i`.
    #[inline]
    pub fn at(&self, i: usize) -> (f32, f32, f32) {
        (self.p0[i], self.p1[i], self.pe[i])
    }

    pub fn into_channels(self) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        (self.p0, self.p1, self.pe)
    }
}

fn check_voxel(p0: f32, p1: f32, pe: f32) -> Option<ProbabilityViolation> {
    if !(p0.is_finite() && p1.is_finite() && pe.is_finite()) {
        return Some(ProbabilityViolation::NotFinite);
    }
    if p0 < 0.0 || p1 < 0.0 {
        return Some(ProbabilityViolation::NegativeClass);
    }
    if (f64::from(p0) + f64::from(p1) - 1.0).abs() > SOFTMAX_TOLERANCE {
        return Some(ProbabilityViolation::SoftmaxSum);
    }
    if !(0.0..=1.0).contains(&pe) {
        return Some(ProbabilityViolation::EdgeRange);
    }
    None
}

/// Checks every voxel of `v`; reports the lowest offending index.
pub fn validate_probability(v: &ProbabilityVolume) -> Result<(), VolumeError> {
    let n = v.dims.len();
    for (channel, c) in [("p0", &v.p0), ("p1", &v.p1), ("pe", &v.pe)] {
        if c.len() != n {
            return Err(VolumeError::ChannelShape {
                channel,
                expected: n,
                actual: c.len(),
            });
        }
    }
    let sl = v.dims.slice_len();
    let first = map_range(v.dims.nz, v.dims.slice_len(), |z| {
        (z * sl..(z + 1) * sl).find_map(|i| {
            let (p0, p1, pe) = v.at(i);
            check_voxel(p0, p1, pe).map(|violation| (i, violation))
        })
    })
    .into_iter()
    .flatten()
    .next();
    match first {
        Some((index, violation)) => Err(VolumeError::Probability { index, violation }),
        None => Ok(()),
    }
}

/// Baseline labeling: object where `p1 > p0`, ties go to background.
pub fn argmax_labels(v: &ProbabilityVolume) -> LabelVolume {
    let mut data = vec![0u8; v.dims.len()];
    let sl = v.dims.slice_len();
    fill_chunks(&mut data, sl, |z, out| {
        let base = z * sl;
        for (k, o) in out.iter_mut().enumerate() {
            *o = u8::from(v.p1[base + k] > v.p0[base + k]);
        }
    });
    LabelVolume {
        dims: v.dims,
        spacing: v.spacing,
        data,
    }
}

/// Binary dilation with the 6-connected cross, clipped at the volume bounds.
pub fn dilate6(l: &LabelVolume) -> LabelVolume {
    let d = l.dims;
    let sl = d.slice_len();
    let src = &l.data;
    let mut data = vec![0u8; d.len()];
    fill_chunks(&mut data, sl, |z, out| {
        for y in 0..d.ny {
            for x in 0..d.nx {
                let i = d.index(x, y, z);
                let hit = src[i] != 0
                    || (x > 0 && src[i - 1] != 0)
                    || (x + 1 < d.nx && src[i + 1] != 0)
                    || (y > 0 && src[i - d.nx] != 0)
                    || (y + 1 < d.ny && src[i + d.nx] != 0)
                    || (z > 0 && src[i - sl] != 0)
                    || (z + 1 < d.nz && src[i + sl] != 0);
                out[x + d.nx * y] = u8::from(hit);
            }
        }
    });
    LabelVolume {
        dims: d,
        spacing: l.spacing,
        data,
    }
}

/// `dilate6(l) AND NOT l`: a one-voxel shell on the background side of the object.
pub fn edge_map(l: &LabelVolume) -> EdgeMap {
    let mut grown = dilate6(l);
    for (g, &o) in grown.data.iter_mut().zip(&l.data) {
        *g &= 1 - o;
    }
    EdgeMap(grown)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Linear,
}

impl std::str::FromStr for Interpolation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nearest" => Ok(Interpolation::Nearest),
            "linear" => Ok(Interpolation::Linear),
            other => Err(format!(
                "unknown interpolation '{other}' (expected nearest|linear)"
            )),
        }
    }
}

/// Per-axis sampling positions: output voxel centres mapped into input index space.
struct AxisPlan {
    /// Nearest input index for each output index.
    nearest: Vec<usize>,
    /// Lower input index and weight of the upper neighbour for linear sampling.
    linear: Vec<(usize, usize, f64)>,
}

impl AxisPlan {
    fn new(n_in: usize, s_in: f64, s_out: f64) -> (usize, AxisPlan) {
        let n_out = ((n_in as f64 * s_in / s_out).round() as usize).max(1);
        let ratio = s_out / s_in;
        let last = (n_in - 1) as f64;
        let mut nearest = Vec::with_capacity(n_out);
        let mut linear = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let pos = (i as f64 + 0.5) * ratio - 0.5;
            nearest.push((pos + 0.5).floor().clamp(0.0, last) as usize);
            let c = pos.clamp(0.0, last);
            let lo = c.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            linear.push((lo, hi, c - lo as f64));
        }
        (n_out, AxisPlan { nearest, linear })
    }
}

fn plan(dims: Dims, from: Spacing, to: Spacing) -> (Dims, [AxisPlan; 3]) {
    let (nx, px) = AxisPlan::new(dims.nx, from[0], to[0]);
    let (ny, py) = AxisPlan::new(dims.ny, from[1], to[1]);
    let (nz, pz) = AxisPlan::new(dims.nz, from[2], to[2]);
    (Dims { nx, ny, nz }, [px, py, pz])
}

fn sample_nearest<T: Copy + Send + Sync + Default>(
    src: &[T],
    dims: Dims,
    out_dims: Dims,
    p: &[AxisPlan; 3],
) -> Vec<T> {
    let mut out = vec![T::default(); out_dims.len()];
    fill_chunks(&mut out, out_dims.slice_len(), |z, slice| {
        let sz = p[2].nearest[z];
        for y in 0..out_dims.ny {
            let sy = p[1].nearest[y];
            for x in 0..out_dims.nx {
                slice[x + out_dims.nx * y] = src[dims.index(p[0].nearest[x], sy, sz)];
            }
        }
    });
    out
}

fn sample_linear(src: &[f32], dims: Dims, out_dims: Dims, p: &[AxisPlan; 3]) -> Vec<f32> {
    let mut out = vec![0f32; out_dims.len()];
    fill_chunks(&mut out, out_dims.slice_len(), |z, slice| {
        let (z0, z1, wz) = p[2].linear[z];
        for y in 0..out_dims.ny {
            let (y0, y1, wy) = p[1].linear[y];
            for x in 0..out_dims.nx {
                let (x0, x1, wx) = p[0].linear[x];
                let at = |x, y, z| f64::from(src[dims.index(x, y, z)]);
                let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
                let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), wx);
                let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), wx);
                let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), wx);
                let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), wx);
                let c0 = lerp(c00, c10, wy);
                let c1 = lerp(c01, c11, wy);
                slice[x + out_dims.nx * y] = lerp(c0, c1, wz) as f32;
            }
        }
    });
    out
}

/// Volumes that can be resampled onto a new voxel spacing.
///
/// Output dims are `round(dims * spacing / target)` (at least 1 per axis). Each
/// output voxel centre is mapped into input space; positions beyond the first or
/// last input centre clamp to the border voxel. Nearest sampling rounds half-way
/// positions up.
pub trait Resample: Sized {
    fn resample(&self, target: Spacing, mode: Interpolation) -> Result<Self, VolumeError>;
}

impl Resample for ScalarVolume {
    fn resample(&self, target: Spacing, mode: Interpolation) -> Result<Self, VolumeError> {
        let (out_dims, p) = plan(self.dims, self.spacing, target);
        let data = match mode {
            Interpolation::Nearest => sample_nearest(&self.data, self.dims, out_dims, &p),
            Interpolation::Linear => sample_linear(&self.data, self.dims, out_dims, &p),
        };
        Volume::new(out_dims, target, data)
    }
}

impl Resample for LabelVolume {
    fn resample(&self, target: Spacing, mode: Interpolation) -> Result<Self, VolumeError> {
        if mode == Interpolation::Linear {
            return Err(VolumeError::LinearOnLabels);
        }
        let (out_dims, p) = plan(self.dims, self.spacing, target);
        let data = sample_nearest(&self.data, self.dims, out_dims, &p);
        Ok(LabelVolume {
            dims: out_dims,
            spacing: target,
            data,
        })
    }
}

impl Resample for ProbabilityVolume {
    /// Channels are resampled independently; linear weights are convex, so the
    /// softmax pair keeps summing to one up to rounding.
    fn resample(&self, target: Spacing, mode: Interpolation) -> Result<Self, VolumeError> {
        let (out_dims, p) = plan(self.dims, self.spacing, target);
        let run = |c: &[f32]| match mode {
            Interpolation::Nearest => sample_nearest(c, self.dims, out_dims, &p),
            Interpolation::Linear => sample_linear(c, self.dims, out_dims, &p),
        };
        ProbabilityVolume::new(
            out_dims,
            target,
            run(&self.p0),
            run(&self.p1),
            run(&self.pe),
        )
    }
}

/// Free-function form of [`Resample::resample`].
pub fn resample<V: Resample>(
    v: &V,
    target: Spacing,
    mode: Interpolation,
) -> Result<V, VolumeError> {
    v.resample(target, mode)
}
