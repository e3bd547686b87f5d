//! Datasets, comparisons, scaling fits and run manifests.

mod compare;
mod datasets;
mod manifest;
mod report;
mod scaling;

pub use compare::{compare, ComparisonReport, RunSummary};
pub use datasets::{
    generate, DatasetKind, DatasetSpec, CLUSTER_EDGE, CLUSTER_RADIUS, CLUSTER_SIZE,
};
pub use manifest::{sha256_file, OutputFile, RunManifest, MANIFEST_FILE};
pub use report::{load_summary, ClassicalReport};
pub use scaling::{
    default_scaling_dataset, fit_exponent, run_scaling, Axis, ScalingPoint, ScalingRecord,
    FITTED_STAGES,
};
