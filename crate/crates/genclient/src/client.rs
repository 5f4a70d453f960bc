//! Batch submission over HTTP.
//!
//! Each job is posted as `multipart/form-data` to `{endpoint}/generate` with
//! a `job` part holding `{"job_id", "request"}` as JSON, a `control` part with
//! the depth PNG when the job uses depth control, and `ip_ref_<k>` parts with
//! the image-prompt references. The service answers with the generated PNG.
//!
//! Mapping onto a node-graph service means loading the `job` fields into the
//! corresponding graph inputs (prompt, seed, sampler steps, control strength,
//! adapter weights) and uploading the attachments as input images.

use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use log::{debug, info, warn};
use reqwest::multipart::{Form, Part};
use reqwest::StatusCode;
use serde::Serialize;
use shroomgen_core::fsutil::write_atomic;

use crate::job::{GenerationJob, GenerationRequest, STYLE_REFERENCE_PNGS};
use crate::manifest::{JobManifest, JobStatus};
use crate::GenError;

/// Environment variable overriding the service endpoint.
pub const ENDPOINT_ENV: &str = "SHROOMGEN_ENDPOINT";
pub const GENERATE_PATH: &str = "/generate";
pub const PNG_MAGIC: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone)]
pub struct SubmitOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Attempts per job, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further one.
    pub initial_backoff: Duration,
    pub request_timeout: Duration,
    pub artifacts_dir: PathBuf,
    /// Relative file references in jobs are resolved against this directory.
    pub base_dir: PathBuf,
    /// Rewritten after every status change when set.
    pub manifest_path: Option<PathBuf>,
}

impl SubmitOptions {
    pub fn new(artifacts_dir: impl Into<PathBuf>) -> Self {
        Self {
            concurrency: 4,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            request_timeout: Duration::from_secs(600),
            artifacts_dir: artifacts_dir.into(),
            base_dir: PathBuf::from("."),
            manifest_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SubmitSummary {
    /// Jobs sent in this run.
    pub posted: usize,
    pub done: usize,
    pub failed: usize,
    /// Jobs already done before this run.
    pub skipped: usize,
}

#[derive(Serialize)]
struct WireJob<'a> {
    job_id: &'a str,
    request: &'a GenerationRequest,
}

pub fn artifact_name(job_id: &str) -> String {
    format!("{job_id}.png")
}

struct Attachments {
    json: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Attachments {
    fn form(&self) -> Result<Form, reqwest::Error> {
        let mut form = Form::new().part("job", Part::text(self.json.clone()).mime_str("application/json")?);
        for (name, bytes) in &self.files {
            form = form.part(
                name.clone(),
                Part::bytes(bytes.clone()).file_name(format!("{name}.png")).mime_str("image/png")?,
            );
        }
        Ok(form)
    }
}

fn read_reference(base: &Path, name: &str) -> Result<Vec<u8>, String> {
    let path = base.join(name);
    match std::fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) => STYLE_REFERENCE_PNGS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b.to_vec())
            .ok_or_else(|| format!("input: {}: {e}", path.display())),
    }
}

fn attachments(job: &GenerationJob, base: &Path) -> Result<Attachments, String> {
    let json = serde_json::to_string(&WireJob {
        job_id: &job.job_id,
        request: &job.request,
    })
    .map_err(|e| format!("input: {e}"))?;
    let mut files = Vec::new();
    if let Some(ctl) = &job.request.control {
        let path = base.join(&ctl.image);
        let bytes = std::fs::read(&path).map_err(|e| format!("input: {}: {e}", path.display()))?;
        files.push(("control".to_string(), bytes));
    }
    if let Some(ip) = &job.request.ip_adapter {
        for (k, r) in ip.reference_images.iter().enumerate() {
            files.push((format!("ip_ref_{k}"), read_reference(base, r)?));
        }
    }
    Ok(Attachments { json, files })
}

/// The error and its sources, outermost first.
fn chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        s.push_str(": ");
        s.push_str(&c.to_string());
        cur = c.source();
    }
    s
}

enum Outcome {
    Image(Vec<u8>),
    /// Worth another attempt.
    Transient(String),
    Fatal(String),
}

async fn post_once(client: &reqwest::Client, url: &str, att: &Attachments) -> Outcome {
    let form = match att.form() {
        Ok(f) => f,
        Err(e) => return Outcome::Fatal(format!("input: {e}")),
    };
    let resp = match client.post(url).multipart(form).send().await {
        Ok(r) => r,
        Err(e) => return Outcome::Transient(format!("connection: {}", chain(&e))),
    };
    let status = resp.status();
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Outcome::Transient(format!("http {status}"));
    }
    if !status.is_success() {
        return Outcome::Fatal(format!("http {status}"));
    }
    match resp.bytes().await {
        Ok(b) if b.starts_with(PNG_MAGIC) => Outcome::Image(b.to_vec()),
        Ok(_) => Outcome::Fatal("protocol: response is not a PNG".into()),
        Err(e) => Outcome::Transient(format!("connection: {}", chain(&e))),
    }
}

/// Posts one job with exponential backoff. Returns attempts made and the
/// image or a failure reason.
async fn post_with_retries(
    client: &reqwest::Client,
    url: &str,
    job: &GenerationJob,
    opts: &SubmitOptions,
) -> (u32, Result<Vec<u8>, String>) {
    let att = match attachments(job, &opts.base_dir) {
        Ok(a) => a,
        Err(e) => return (0, Err(e)),
    };
    let mut delay = opts.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=opts.max_attempts.max(1) {
        match post_once(client, url, &att).await {
            Outcome::Image(b) => return (attempt, Ok(b)),
            Outcome::Fatal(e) => return (attempt, Err(e)),
            Outcome::Transient(e) => {
                debug!("job {} attempt {attempt}: {e}", job.job_id);
                last = e;
                if attempt < opts.max_attempts {
                    tokio::time::sleep(delay).await;
                    delay *= 2;
                }
            }
        }
    }
    (opts.max_attempts.max(1), Err(last))
}

fn persist(manifest: &JobManifest, opts: &SubmitOptions) -> Result<(), GenError> {
    if let Some(p) = &opts.manifest_path {
        manifest.save(p)?;
    }
    Ok(())
}

/// Posts every job that is not done yet and records the outcome of each in
/// the manifest. Individual failures never abort the batch.
pub async fn submit(manifest: &mut JobManifest, opts: &SubmitOptions) -> Result<SubmitSummary, GenError> {
    manifest.validate()?;
    let client = reqwest::Client::builder()
        .pool_max_idle_per_host(0)
        .timeout(opts.request_timeout)
        .no_proxy()
        .build()
        .map_err(|e| GenError::Http(e.to_string()))?;
    let url = format!("{}{GENERATE_PATH}", manifest.endpoint.trim_end_matches('/'));

    let todo: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| !manifest.entries[i].status.is_done())
        .collect();
    let mut summary = SubmitSummary {
        skipped: manifest.entries.len() - todo.len(),
        ..SubmitSummary::default()
    };
    for &i in &todo {
        // Entries left in `submitted` by an interrupted run are posted again as is.
        if manifest.entries[i].status != JobStatus::Submitted {
            manifest.transition(i, JobStatus::Submitted)?;
        }
    }
    persist(manifest, opts)?;
    info!("submitting {} jobs to {url} ({} already done)", todo.len(), summary.skipped);

    let jobs: Vec<(usize, GenerationJob)> = todo.iter().map(|&i| (i, manifest.entries[i].job.clone())).collect();
    let mut results = stream::iter(jobs)
        .map(|(i, job)| {
            let (client, url) = (&client, &url);
            async move { (i, post_with_retries(client, url, &job, opts).await) }
        })
        .buffer_unordered(opts.concurrency.max(1));

    // The manifest has a single writer: this loop.
    while let Some((i, (attempts, result))) = results.next().await {
        summary.posted += 1;
        let id = manifest.entries[i].job.job_id.clone();
        manifest.entries[i].attempts += attempts;
        let result = result.and_then(|bytes| {
            let name = artifact_name(&id);
            write_atomic(&opts.artifacts_dir.join(&name), &bytes)
                .map(|_| name)
                .map_err(|e| format!("io: {e}"))
        });
        match result {
            Ok(name) => {
                manifest.entries[i].artifact = Some(name);
                manifest.transition(i, JobStatus::Done)?;
                summary.done += 1;
            }
            Err(reason) => {
                warn!("job {id} failed: {reason}");
                manifest.transition(i, JobStatus::Failed { reason })?;
                summary.failed += 1;
            }
        }
        persist(manifest, opts)?;
    }
    Ok(summary)
}

/// [`submit`] on a private multi-threaded runtime.
pub fn submit_blocking(manifest: &mut JobManifest, opts: &SubmitOptions) -> Result<SubmitSummary, GenError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(submit(manifest, opts))
}
