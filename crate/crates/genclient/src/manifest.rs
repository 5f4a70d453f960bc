use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use shroomgen_core::fsutil::write_atomic;

use crate::job::GenerationJob;
use crate::GenError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Submitted,
    Done,
    Failed { reason: String },
}

impl JobStatus {
    /// Allowed moves: pending -> submitted -> done | failed, plus
    /// failed -> submitted for a resubmission.
    pub fn can_become(&self, next: &JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, next),
            (Pending, Submitted) | (Submitted, Done) | (Submitted, Failed { .. }) | (Failed { .. }, Submitted)
        )
    }

    pub fn is_done(&self) -> bool {
        matches!(self, JobStatus::Done)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub job: GenerationJob,
    pub status: JobStatus,
    #[serde(default)]
    pub attempts: u32,
    /// Artifact file name relative to the artifacts directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobManifest {
    pub version: u32,
    pub batch_id: String,
    pub endpoint: String,
    /// RFC 3339.
    pub created_at: String,
    pub entries: Vec<ManifestEntry>,
}

impl JobManifest {
    pub fn new(batch_id: impl Into<String>, endpoint: impl Into<String>, jobs: Vec<GenerationJob>) -> Result<Self, GenError> {
        Self::with_timestamp(batch_id, endpoint, jobs, chrono::Utc::now().to_rfc3339())
    }

    /// As [`JobManifest::new`] with a fixed creation time, for reproducible
    /// manifests.
    pub fn with_timestamp(
        batch_id: impl Into<String>,
        endpoint: impl Into<String>,
        jobs: Vec<GenerationJob>,
        created_at: String,
    ) -> Result<Self, GenError> {
        let m = Self {
            version: MANIFEST_VERSION,
            batch_id: batch_id.into(),
            endpoint: endpoint.into(),
            created_at,
            entries: jobs
                .into_iter()
                .map(|job| ManifestEntry {
                    job,
                    status: JobStatus::Pending,
                    attempts: 0,
                    artifact: None,
                })
                .collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.version != MANIFEST_VERSION {
            return Err(GenError::Validation(format!("unsupported manifest version {}", self.version)));
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.job.job_id.as_str()) {
                return Err(GenError::Validation(format!("duplicate job id {}", e.job.job_id)));
            }
            e.job.validate()?;
        }
        Ok(())
    }

    pub fn find(&self, job_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.job.job_id == job_id)
    }

    /// Moves entry `index` to `next`, rejecting non-monotone transitions.
    pub fn transition(&mut self, index: usize, next: JobStatus) -> Result<(), GenError> {
        let e = &mut self.entries[index];
        if !e.status.can_become(&next) {
            return Err(GenError::Validation(format!(
                "job {}: cannot go from {:?} to {:?}",
                e.job.job_id, e.status, next
            )));
        }
        e.status = next;
        Ok(())
    }

    pub fn count(&self, pred: impl Fn(&JobStatus) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(&e.status)).count()
    }

    pub fn to_json(&self) -> Result<String, GenError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GenError> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        write_atomic(path, self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
