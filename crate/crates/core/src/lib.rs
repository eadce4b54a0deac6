//! Volumetric binary segmentation by min-cut over 6-connected voxel grids.
//!
//! The pipeline takes per-voxel background/object/edge probabilities (as produced
//! by a segmentation network), turns them into region and boundary capacities of a
//! flow network, and solves max-flow exactly to recover a globally optimal binary
//! labeling. Supporting modules cover edge ground-truth derivation, resampling,
//! evaluation metrics, synthetic phantoms and a MetaImage-style file format.
//!
//! With the default `parallel` feature, per-voxel and per-surfel loops run on
//! rayon. Every parallel loop collects results in index order, so outputs are
//! bitwise independent of the thread count. The max-flow solve itself is always
//! sequential.

pub mod graphcut;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod volume;

mod parallel;

pub use graphcut::{
    build_graph, labeling_energy, max_flow_min_cut, segment, CutResult, GraphCutError, GridGraph,
    SegmentParams, CAP_MAX,
};
pub use io::{
    read_labels, read_probabilities, read_volume, report_json, write_report, write_volume,
    AnyVolume, IoError,
};
pub use metrics::{
    dice_loss_3class, evaluate, extract_surface, mean_surface_distance, surface_dice,
    volumetric_dice, MetricError, MetricParams, MetricsReport, SurfaceCellSet, SurfaceCounts,
    Surfel, VoxelCounts,
};
pub use phantom::{
    corrupt_probabilities, generate_phantom, DefectSpec, DistractorSpec, PhantomCase, PhantomError,
    PhantomSpec,
};
pub use volume::{
    argmax_labels, dilate6, edge_map, validate_probability, Dims, EdgeMap, Interpolation,
    LabelVolume, ProbabilityVolume, ScalarVolume, Spacing, Volume, VolumeError,
};
