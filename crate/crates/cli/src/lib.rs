//! Batch entry points for the cutseg pipeline.
//!
//! Flags are parsed by [`Cli`], merged with an optional JSON config file (the
//! command line wins) and resolved into a [`CommandConfig`] whose parameters are
//! all validated before any input is read or output written. [`run`] executes a
//! resolved config; [`main_with_args`] wraps both steps and maps failures to a
//! JSON error on stderr plus a per-category exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cutseg::io::{self as vio, AnyVolume, IoError};
use cutseg::volume::Resample;
use cutseg::{
    argmax_labels, corrupt_probabilities, dice_loss_3class, edge_map, evaluate, generate_phantom,
    segment, GraphCutError, Interpolation, MetricError, MetricParams, PhantomError, PhantomSpec,
    SegmentParams, Spacing, VolumeError,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

const LONG_ABOUT: &str = "\
Graph-cut segmentation of volumetric probability maps.

The per-voxel background/object/edge probabilities that a segmentation network
would produce are read from a file instead: this tool performs no network
inference. `segment` turns such a 3-channel volume into a globally optimal binary
labeling by min-cut; the other subcommands derive edge targets, evaluate results,
resample volumes and generate synthetic phantoms for testing.

Volumes are MetaImage-style `.mhd` headers with a little-endian `.raw` payload.";

#[derive(Debug, Parser)]
#[command(name = "cutseg", version, about = "Graph-cut segmentation of volumetric probability maps", long_about = LONG_ABOUT)]
pub struct Cli {
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CutFlags {
    /// Boundary term weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Probability floor applied before taking logarithms.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fixed-point scale for integer capacities.
    #[arg(long)]
    pub capacity_scale: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Min-cut segmentation of a 3-channel probability volume (p0, p1, pe).
    ///
    /// INPUT stands in for network inference: it holds precomputed background,
    /// object and edge probabilities per voxel.
    Segment {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        cut: CutFlags,
    },
    /// Per-voxel argmax of a probability volume, without the graph cut.
    Argmax { input: PathBuf, output: PathBuf },
    /// Single-voxel-thick edge map around the object of a label volume.
    Edges { input: PathBuf, output: PathBuf },
    /// Volumetric Dice, surface Dice and mean surface distance as a JSON report.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        report: PathBuf,
        /// Surface Dice tolerance (default: largest voxel spacing).
        #[arg(long)]
        tolerance_mm: Option<f64>,
    },
    /// Three-channel Dice loss of a probability volume against ground truth.
    Loss { probs: PathBuf, gt: PathBuf },
    /// Synthetic skull-like shell phantom with ground truth.
    ///
    /// Writes gt.mhd, probs.mhd, distractor.mhd and a spec.json that reproduces
    /// the case when passed back through --config.
    Phantom {
        out_dir: PathBuf,
        /// Grid size per axis; radii scale with it unless --config supplies a spec.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Isotropic voxel spacing in mm.
        #[arg(long, value_parser = parse_spacing)]
        spacing: Option<[f64; 3]>,
        /// Raise the object probability inside the distractor to this value.
        #[arg(long)]
        artifact_bias: Option<f64>,
    },
    /// Resample any volume to a target spacing.
    Resample {
        input: PathBuf,
        output: PathBuf,
        /// Target spacing: one value, or three comma-separated values.
        #[arg(long, value_parser = parse_spacing)]
        spacing: Option<[f64; 3]>,
        /// nearest | linear (default: nearest for labels, linear otherwise).
        #[arg(long)]
        interp: Option<Interpolation>,
    },
}

fn parse_spacing(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [v] => Ok([v; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!("expected 1 or 3 values, got {}", parts.len())),
    }
}

/// Config file contents. Every field is optional and loses to the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_scale: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interp: Option<Interpolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    GraphCut(#[from] GraphCutError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(IoError::Io { .. }) => "io",
            CliError::Io(IoError::Volume(_)) | CliError::Volume(_) => "volume",
            CliError::Io(_) => "format",
            CliError::GraphCut(GraphCutError::Volume(_)) => "volume",
            CliError::GraphCut(_) => "graphcut",
            CliError::Metric(MetricError::Volume(_)) => "volume",
            CliError::Metric(_) => "metrics",
            CliError::Phantom(PhantomError::Volume(_)) => "volume",
            CliError::Phantom(_) => "phantom",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "usage" => 2,
            "config" => 3,
            "io" => 4,
            "format" => 5,
            "volume" => 6,
            "graphcut" => 7,
            "metrics" => 8,
            _ => 9,
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "category": self.category(),
                "code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

/// A subcommand with every parameter resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Segment {
        input: PathBuf,
        output: PathBuf,
        params: SegmentParams,
    },
    Argmax {
        input: PathBuf,
        output: PathBuf,
    },
    Edges {
        input: PathBuf,
        output: PathBuf,
    },
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        report: PathBuf,
        tolerance_mm: Option<f64>,
    },
    Loss {
        probs: PathBuf,
        gt: PathBuf,
    },
    Phantom {
        out_dir: PathBuf,
        spec: PhantomSpec,
        artifact_bias: Option<f64>,
    },
    Resample {
        input: PathBuf,
        output: PathBuf,
        target: Spacing,
        interp: Option<Interpolation>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandConfig {
    pub threads: Option<usize>,
    pub job: Job,
}

fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl CommandConfig {
    /// Merges the config file under the command line and validates the result.
    pub fn resolve(cli: Cli) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(p) => load_config(p)?,
            None => FileConfig::default(),
        };
        let threads = cli.threads.or(file.threads);
        if threads == Some(0) {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        let job = match cli.command {
            Command::Segment { input, output, cut } => {
                let d = SegmentParams::default();
                let params = SegmentParams {
                    lambda: cut.lambda.or(file.lambda).unwrap_or(d.lambda),
                    epsilon: cut.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
                    capacity_scale: cut
                        .capacity_scale
                        .or(file.capacity_scale)
                        .unwrap_or(d.capacity_scale),
                };
                params.validate().map_err(config_err)?;
                Job::Segment {
                    input,
                    output,
                    params,
                }
            }
            Command::Argmax { input, output } => Job::Argmax { input, output },
            Command::Edges { input, output } => Job::Edges { input, output },
            Command::Eval {
                pred,
                gt,
                report,
                tolerance_mm,
            } => {
                let tolerance_mm = tolerance_mm.or(file.tolerance_mm);
                if let Some(t) = tolerance_mm {
                    MetricParams::new(t).map_err(config_err)?;
                }
                Job::Eval {
                    pred,
                    gt,
                    report,
                    tolerance_mm,
                }
            }
            Command::Loss { probs, gt } => Job::Loss { probs, gt },
            Command::Phantom {
                out_dir,
                size,
                seed,
                spacing,
                artifact_bias,
            } => {
                let size = size.or(file.size);
                let mut spec = match (file.phantom, size) {
                    (Some(mut s), Some(n)) => {
                        s.size = n;
                        s
                    }
                    (Some(s), None) => s,
                    (None, n) => PhantomSpec::scaled(n.unwrap_or(64)),
                };
                if let Some(seed) = seed.or(file.seed) {
                    spec.seed = seed;
                }
                if let Some(s) = spacing.or(file.spacing) {
                    if s[0] != s[1] || s[1] != s[2] {
                        return Err(CliError::Config("phantom spacing must be isotropic".into()));
                    }
                    spec.spacing_mm = s[0];
                }
                spec.validate().map_err(config_err)?;
                let artifact_bias = artifact_bias.or(file.artifact_bias);
                if let Some(b) = artifact_bias {
                    if !(0.0..=1.0).contains(&b) {
                        return Err(CliError::Config(format!(
                            "artifact_bias must lie in [0, 1], got {b}"
                        )));
                    }
                }
                Job::Phantom {
                    out_dir,
                    spec,
                    artifact_bias,
                }
            }
            Command::Resample {
                input,
                output,
                spacing,
                interp,
            } => {
                let s = spacing
                    .or(file.spacing)
                    .ok_or_else(|| CliError::Config("resample needs --spacing".into()))?;
                Job::Resample {
                    input,
                    output,
                    target: Spacing::new(s).map_err(config_err)?,
                    interp: interp.or(file.interp),
                }
            }
        };
        Ok(CommandConfig { threads, job })
    }
}

fn print_json(out: &mut dyn Write, v: serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{v}").map_err(|e| {
        CliError::Io(IoError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
    })
}

fn execute(job: &Job, out: &mut dyn Write) -> Result<(), CliError> {
    match job {
        Job::Segment {
            input,
            output,
            params,
        } => {
            let probs = vio::read_probabilities(input)?;
            let cut = segment(&probs, params)?;
            vio::write_volume(&cut.labels.clone().into(), output)?;
            let object = cut.labels.count_object();
            print_json(
                out,
                json!({
                    "energy": cut.energy,
                    "energy_real": cut.energy_real,
                    "max_flow": cut.max_flow,
                    "object_voxels": object,
                    "background_voxels": cut.labels.dims().len() - object,
                }),
            )
        }
        Job::Argmax { input, output } => {
            let probs = vio::read_probabilities(input)?;
            cutseg::validate_probability(&probs)?;
            let labels = argmax_labels(&probs);
            let object = labels.count_object();
            vio::write_volume(&labels.clone().into(), output)?;
            print_json(
                out,
                json!({
                    "object_voxels": object,
                    "background_voxels": labels.dims().len() - object,
                }),
            )
        }
        Job::Edges { input, output } => {
            let labels = vio::read_labels(input)?;
            let edges = edge_map(&labels);
            let n = edges.count();
            vio::write_volume(&edges.into_labels().into(), output)?;
            print_json(out, json!({ "edge_voxels": n }))
        }
        Job::Eval {
            pred,
            gt,
            report,
            tolerance_mm,
        } => {
            let pred = vio::read_labels(pred)?;
            let gt = vio::read_labels(gt)?;
            let params = match tolerance_mm {
                Some(t) => MetricParams::new(*t)?,
                None => MetricParams::voxel_size(gt.spacing()),
            };
            let r = evaluate(&pred, &gt, &params)?;
            vio::write_report(&r, report)?;
            out.write_all(vio::report_json(&r).as_bytes()).map_err(|e| {
                CliError::Io(IoError::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
            })
        }
        Job::Loss { probs, gt } => {
            let probs = vio::read_probabilities(probs)?;
            let gt = vio::read_labels(gt)?;
            let loss = dice_loss_3class(&probs, &gt)?;
            print_json(out, json!({ "loss": loss }))
        }
        Job::Phantom {
            out_dir,
            spec,
            artifact_bias,
        } => {
            let mut case = generate_phantom(spec)?;
            if let Some(b) = artifact_bias {
                case = corrupt_probabilities(&case, *b)?;
            }
            fs::create_dir_all(out_dir).map_err(|e| IoError::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            let echo = FileConfig {
                artifact_bias: *artifact_bias,
                phantom: Some(case.spec.clone()),
                ..Default::default()
            };
            let mut echo = serde_json::to_string_pretty(&echo).map_err(config_err)?;
            echo.push('\n');
            let (gt_n, dm_n) = (case.gt.count_object(), case.distractor_mask.count_object());
            vio::write_volume(&case.probs.into(), &out_dir.join("probs.mhd"))?;
            vio::write_volume(&case.gt.into(), &out_dir.join("gt.mhd"))?;
            vio::write_volume(
                &case.distractor_mask.into(),
                &out_dir.join("distractor.mhd"),
            )?;
            vio::write_atomic(&out_dir.join("spec.json"), echo.as_bytes())?;
            print_json(out, json!({ "gt_voxels": gt_n, "distractor_voxels": dm_n }))
        }
        Job::Resample {
            input,
            output,
            target,
            interp,
        } => {
            let v = vio::read_volume(input)?;
            let resampled: AnyVolume = match v {
                AnyVolume::Labels(l) => l
                    .resample(*target, interp.unwrap_or(Interpolation::Nearest))?
                    .into(),
                AnyVolume::Scalar(s) => s
                    .resample(*target, interp.unwrap_or(Interpolation::Linear))?
                    .into(),
                AnyVolume::Probabilities(p) => p
                    .resample(*target, interp.unwrap_or(Interpolation::Linear))?
                    .into(),
            };
            let d = match &resampled {
                AnyVolume::Labels(l) => l.dims(),
                AnyVolume::Scalar(s) => s.dims(),
                AnyVolume::Probabilities(p) => p.dims(),
            };
            vio::write_volume(&resampled, output)?;
            print_json(
                out,
                json!({ "kind": resampled.kind(), "dims": d.as_array() }),
            )
        }
    }
}

/// Executes a resolved config, inside a dedicated thread pool when `threads` is set.
pub fn run(config: &CommandConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(config_err)?;
            let mut buf = Vec::new();
            let result = pool.install(|| execute(&config.job, &mut buf));
            out.write_all(&buf).map_err(|e| IoError::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?;
            result
        }
        None => execute(&config.job, out),
    }
}

/// Parses, resolves and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let e = CliError::Usage(e.to_string().trim_end().to_string());
            let _ = writeln!(err, "{}", e.to_json());
            return e.exit_code();
        }
    };
    match CommandConfig::resolve(cli).and_then(|c| run(&c, out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}
