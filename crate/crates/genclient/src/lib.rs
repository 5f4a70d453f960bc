//! Generation jobs for depth-conditioned image synthesis, batch manifests,
//! HTTP submission and pairing of generated images with annotations.

pub mod client;
pub mod job;
pub mod manifest;
pub mod mock;
pub mod pairing;

pub use client::{artifact_name, submit, submit_blocking, SubmitOptions, SubmitSummary, ENDPOINT_ENV};
pub use job::{
    build_ablation_batch, build_job, AblationConfig, Components, DepthRef, GenerationDefaults, GenerationJob,
    GenerationRequest, LoraSpec, DEFAULT_PROMPT,
};
pub use manifest::{JobManifest, JobStatus, ManifestEntry};
pub use mock::{MockConfig, MockServer};
pub use pairing::{pair_outputs, PairEntry, PairedIndex};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("http: {0}")]
    Http(String),
    #[error("pairing: {0}")]
    Pairing(String),
    #[error(transparent)]
    Annotate(#[from] shroomgen_core::annotate::AnnotateError),
}
