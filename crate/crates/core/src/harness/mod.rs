//! Evaluation harness: synthetic cohorts, subject-level Monte Carlo
//! cross-validation, metrics, the parameter-matched baseline and exports.

mod config;
mod cv;
mod dataset;
mod export;
mod metrics;
mod split;
mod synthetic;

use thiserror::Error;

pub use config::RunConfig;
pub use cv::{
    cam_localization, monte_carlo_cv, run_trial, CamOutcome, CvOptions, CvReport, TrialOutput, TrialResult,
};
pub use dataset::{node_features, Dataset, DatasetManifest, StructureInfo, SubjectRecord};
pub use export::{cam_csv, write_cam_csv, write_cam_ply, write_trials_csv};
pub use metrics::{auc, binary_metrics, summarize, Metrics, Summary};
pub use split::{audit_cv, audit_split, subject_level_split, CvAudit, Split, SplitAudit, SplitSpec};
pub use synthetic::{generate, SyntheticCohort, SyntheticSpec};

use crate::explain::ExplainError;
use crate::mesh::MeshError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("subject {0} has scans with different labels")]
    InconsistentLabels(String),
    #[error("class {class} has {n} subjects; a split needs at least 3 per class")]
    TooFewSubjects { class: u8, n: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}
