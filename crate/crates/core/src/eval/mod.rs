//! Instance segmentation scores and feature-space dataset distances.

pub mod distance;
pub mod features;
pub mod instance;
pub mod linalg;
pub mod matching;

use thiserror::Error;

use crate::annotate::{AnnotateError, RleError};

pub use distance::{fid, kid, mean_and_covariance, KidConfig, KidResult};
pub use features::{load_features, parse_features, FeatureSet};
pub use instance::{evaluate, load_predictions, parse_predictions, EvalConfig, EvalReport, Prediction, ThresholdResult};
pub use linalg::{symmetric_eigen, SymmetricEigen};
pub use matching::{greedy_match, mask_iou, match_instances, Matching};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("subset size {subset} exceeds available rows {available}")]
    SubsetTooLarge { subset: usize, available: usize },
    #[error(transparent)]
    Rle(#[from] RleError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
