//! MetaImage-style volume files and JSON metric reports.
//!
//! A volume is a text header (`.mhd`) next to a raw payload (`.raw`): samples are
//! little-endian, x-fastest, with channels interleaved per voxel. Label volumes
//! are `MET_UCHAR` with one channel; scalar volumes are `MET_FLOAT` with one
//! channel; probability volumes are `MET_FLOAT` with three channels in the order
//! `(p0, p1, pe)`.
//!
//! Every write goes to a temporary file in the destination directory and is then
//! renamed into place, so a failed run never leaves a partial file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::volume::{
    Dims, LabelVolume, ProbabilityVolume, ScalarVolume, Spacing, Volume, VolumeError,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: unsupported element layout: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("{path}: data file holds {actual} bytes, header implies {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: label value {value} at voxel {index} is not 0 or 1")]
    InvalidLabel {
        path: PathBuf,
        index: usize,
        value: u8,
    },
    #[error("{path}: non-finite sample at element {index}")]
    NonFinite { path: PathBuf, index: usize },
    #[error("{path}: expected a {expected} volume, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    F32,
}

impl ElementType {
    fn tag(self) -> &'static str {
        match self {
            ElementType::U8 => "MET_UCHAR",
            ElementType::F32 => "MET_FLOAT",
        }
    }

    fn size(self) -> u64 {
        match self {
            ElementType::U8 => 1,
            ElementType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub element: ElementType,
    pub channels: usize,
    /// Payload path, relative to the header's directory.
    pub data_file: String,
}

impl VolumeHeader {
    pub fn payload_bytes(&self) -> u64 {
        self.dims.len() as u64 * self.channels as u64 * self.element.size()
    }

    fn render(&self) -> String {
        let d = self.dims;
        let s = self.spacing.as_array();
        let mut out = String::new();
        let _ = writeln!(out, "ObjectType = Image");
        let _ = writeln!(out, "NDims = 3");
        let _ = writeln!(out, "BinaryData = True");
        let _ = writeln!(out, "BinaryDataByteOrderMSB = False");
        let _ = writeln!(out, "CompressedData = False");
        let _ = writeln!(out, "DimSize = {} {} {}", d.nx, d.ny, d.nz);
        let _ = writeln!(out, "ElementSpacing = {} {} {}", s[0], s[1], s[2]);
        let _ = writeln!(out, "ElementNumberOfChannels = {}", self.channels);
        let _ = writeln!(out, "ElementType = {}", self.element.tag());
        let _ = writeln!(out, "ElementDataFile = {}", self.data_file);
        out
    }

    fn parse(path: &Path, text: &str) -> Result<Self, IoError> {
        let bad = |reason: String| IoError::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        };
        let mut dims = None;
        let mut spacing = None;
        let mut element = None;
        let mut channels = 1usize;
        let mut data_file = None;
        let mut ndims = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("line {}: expected 'Key = Value'", n + 1)))?;
            match key {
                "NDims" => ndims = Some(value.to_string()),
                "DimSize" => {
                    let v = parse_triple::<usize>(value)
                        .ok_or_else(|| bad(format!("DimSize '{value}'")))?;
                    dims = Some(Dims::new(v[0], v[1], v[2])?);
                }
                "ElementSpacing" => {
                    let v = parse_triple::<f64>(value)
                        .ok_or_else(|| bad(format!("ElementSpacing '{value}'")))?;
                    spacing = Some(Spacing::new(v)?);
                }
                "ElementType" => {
                    element = Some(match value {
                        "MET_UCHAR" => ElementType::U8,
                        "MET_FLOAT" => ElementType::F32,
                        other => {
                            return Err(IoError::Unsupported {
                                path: path.to_path_buf(),
                                reason: format!("element type {other}"),
                            })
                        }
                    })
                }
                "ElementNumberOfChannels" => {
                    channels = value
                        .parse()
                        .map_err(|_| bad(format!("ElementNumberOfChannels '{value}'")))?
                }
                "ElementDataFile" => data_file = Some(value.to_string()),
                "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" if value != "False" => {
                    return Err(IoError::Unsupported {
                        path: path.to_path_buf(),
                        reason: "big-endian payloads".into(),
                    })
                }
                "CompressedData" if value != "False" => {
                    return Err(IoError::Unsupported {
                        path: path.to_path_buf(),
                        reason: "compressed payloads".into(),
                    })
                }
                _ => {}
            }
        }
        match ndims.as_deref() {
            Some("3") => {}
            Some(other) => return Err(bad(format!("NDims = {other}, only 3 is supported"))),
            None => return Err(bad("missing NDims".into())),
        }
        let data_file = data_file.ok_or_else(|| bad("missing ElementDataFile".into()))?;
        if data_file == "LOCAL" {
            return Err(IoError::Unsupported {
                path: path.to_path_buf(),
                reason: "inline (LOCAL) payloads".into(),
            });
        }
        let element = element.ok_or_else(|| bad("missing ElementType".into()))?;
        let header = VolumeHeader {
            dims: dims.ok_or_else(|| bad("missing DimSize".into()))?,
            spacing: spacing.ok_or_else(|| bad("missing ElementSpacing".into()))?,
            element,
            channels,
            data_file,
        };
        match (element, channels) {
            (ElementType::U8, 1) | (ElementType::F32, 1) | (ElementType::F32, 3) => Ok(header),
            (e, c) => Err(IoError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("{} with {c} channels", e.tag()),
            }),
        }
    }
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Option<[T; 3]> {
    let mut it = s.split_whitespace().map(|t| t.parse::<T>());
    let v = [it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?];
    it.next().is_none().then_some(v)
}

/// Any volume this format can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Scalar(ScalarVolume),
    Labels(LabelVolume),
    Probabilities(ProbabilityVolume),
}

impl AnyVolume {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyVolume::Scalar(_) => "scalar",
            AnyVolume::Labels(_) => "label",
            AnyVolume::Probabilities(_) => "probability",
        }
    }
}

impl From<ScalarVolume> for AnyVolume {
    fn from(v: ScalarVolume) -> Self {
        AnyVolume::Scalar(v)
    }
}

impl From<LabelVolume> for AnyVolume {
    fn from(v: LabelVolume) -> Self {
        AnyVolume::Labels(v)
    }
}

impl From<ProbabilityVolume> for AnyVolume {
    fn from(v: ProbabilityVolume) -> Self {
        AnyVolume::Probabilities(v)
    }
}

/// Path of the payload written next to `header`.
pub fn data_path_for(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn read_header(path: &Path) -> Result<VolumeHeader, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    VolumeHeader::parse(path, &text)
}

pub fn read_volume(path: &Path) -> Result<AnyVolume, IoError> {
    let header = read_header(path)?;
    let data_path = path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(io_err(&data_path))?;
    let expected = header.payload_bytes();
    if bytes.len() as u64 != expected {
        return Err(IoError::SizeMismatch {
            path: data_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let (dims, spacing) = (header.dims, header.spacing);
    match (header.element, header.channels) {
        (ElementType::U8, _) => {
            if let Some((index, &value)) = bytes.iter().enumerate().find(|(_, &b)| b > 1) {
                return Err(IoError::InvalidLabel {
                    path: data_path,
                    index,
                    value,
                });
            }
            Ok(LabelVolume::new(dims, spacing, bytes)?.into())
        }
        (ElementType::F32, channels) => {
            let samples: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
                return Err(IoError::NonFinite {
                    path: data_path,
                    index,
                });
            }
            if channels == 1 {
                return Ok(Volume::new(dims, spacing, samples)?.into());
            }
            let n = dims.len();
            let (mut p0, mut p1, mut pe) = (
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
            );
            for v in samples.chunks_exact(3) {
                p0.push(v[0]);
                p1.push(v[1]);
                pe.push(v[2]);
            }
            Ok(ProbabilityVolume::new(dims, spacing, p0, p1, pe)?.into())
        }
    }
}

fn wrong_kind(path: &Path, expected: &'static str, found: &AnyVolume) -> IoError {
    IoError::WrongKind {
        path: path.to_path_buf(),
        expected,
        found: found.kind(),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelVolume, IoError> {
    match read_volume(path)? {
        AnyVolume::Labels(l) => Ok(l),
        other => Err(wrong_kind(path, "label", &other)),
    }
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilityVolume, IoError> {
    match read_volume(path)? {
        AnyVolume::Probabilities(p) => Ok(p),
        other => Err(wrong_kind(path, "probability", &other)),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn encode(v: &AnyVolume) -> (VolumeHeader, Vec<u8>) {
    let header = |dims, spacing, element, channels| VolumeHeader {
        dims,
        spacing,
        element,
        channels,
        data_file: String::new(),
    };
    match v {
        AnyVolume::Labels(l) => (
            header(l.dims(), l.spacing(), ElementType::U8, 1),
            l.as_slice().to_vec(),
        ),
        AnyVolume::Scalar(s) => (
            header(s.dims(), s.spacing(), ElementType::F32, 1),
            s.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        AnyVolume::Probabilities(p) => {
            let mut bytes = Vec::with_capacity(p.dims().len() * 12);
            for i in 0..p.dims().len() {
                let (a, b, c) = p.at(i);
                bytes.extend(a.to_le_bytes());
                bytes.extend(b.to_le_bytes());
                bytes.extend(c.to_le_bytes());
            }
            (header(p.dims(), p.spacing(), ElementType::F32, 3), bytes)
        }
    }
}

/// Writes `header` plus its `.raw` payload. The payload lands first, so a
/// header never points at a missing file.
pub fn write_volume(v: &AnyVolume, header_path: &Path) -> Result<(), IoError> {
    let (mut header, payload) = encode(v);
    let data_path = data_path_for(header_path);
    header.data_file = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| IoError::MalformedHeader {
            path: header_path.to_path_buf(),
            reason: "output path has no file name".into(),
        })?;
    write_atomic(&data_path, &payload)?;
    write_atomic(header_path, header.render().as_bytes())
}

/// Rounds to 6 significant digits.
fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

#[derive(Serialize)]
struct ReportJson<'a> {
    vdc: f64,
    sdc: f64,
    msd_mm: Option<f64>,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tolerance_mm: f64,
    spacing_mm: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Fixed-key JSON rendering of a report, numbers at 6 significant digits.
pub fn report_json(r: &MetricsReport) -> String {
    let j = ReportJson {
        vdc: sig6(r.vdc),
        sdc: sig6(r.sdc),
        msd_mm: r.msd_mm.map(sig6),
        tp: r.counts.tp,
        fp: r.counts.fp,
        fn_: r.counts.fn_,
        tolerance_mm: sig6(r.tolerance_mm),
        spacing_mm: r.spacing_mm.map(sig6),
        error: r.error.as_deref(),
    };
    let mut s = serde_json::to_string_pretty(&j).expect("report fields are finite");
    s.push('\n');
    s
}

pub fn write_report(r: &MetricsReport, path: &Path) -> Result<(), IoError> {
    write_atomic(path, report_json(r).as_bytes())
}
