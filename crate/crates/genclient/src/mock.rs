//! A stand-in generation service for tests and offline runs.
//!
//! It accepts the same multipart requests as a real service and answers with
//! the control image unchanged, or with a placeholder PNG for text-only jobs.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Multipart, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use log::{debug, info};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::Notify;
use tokio::task::JoinHandle;

use crate::client::GENERATE_PATH;
use crate::job::STYLE_REFERENCE_PNGS;
use crate::GenError;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockConfig {
    /// Serve this many jobs, then answer 503 and shut down.
    pub shutdown_after: Option<usize>,
    /// Answer the first this-many requests with 500.
    pub fail_first: usize,
}

#[derive(Default)]
struct Ledger {
    requests: usize,
    served: Vec<String>,
}

struct Shared {
    config: MockConfig,
    ledger: Mutex<Ledger>,
    stop: Notify,
}

#[derive(Deserialize)]
struct WireJobId {
    job_id: String,
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    task: JoinHandle<std::io::Result<()>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and serves on the current
    /// tokio runtime.
    pub async fn start(addr: SocketAddr, config: MockConfig) -> Result<Self, GenError> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            config,
            ledger: Mutex::new(Ledger::default()),
            stop: Notify::new(),
        });
        let app = Router::new()
            .route(GENERATE_PATH, post(generate))
            .with_state(shared.clone());
        let stop = shared.clone();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move { stop.stop.notified().await })
                .await
        });
        info!("mock generation service on http://{addr}");
        Ok(Self { addr, shared, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Job ids answered with an image, in arrival order.
    pub fn served_job_ids(&self) -> Vec<String> {
        self.shared.ledger.lock().unwrap().served.clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.ledger.lock().unwrap().requests
    }

    pub fn shutdown(&self) {
        self.shared.stop.notify_one();
    }

    /// Waits until the server has stopped.
    pub async fn wait(self) -> Result<(), GenError> {
        self.task.await.map_err(|e| GenError::Http(e.to_string()))??;
        Ok(())
    }
}

fn reply(status: StatusCode, msg: &str) -> Response {
    (status, msg.to_string()).into_response()
}

async fn generate(State(shared): State<Arc<Shared>>, mut form: Multipart) -> Response {
    let mut job_id = None;
    let mut control: Option<Bytes> = None;
    loop {
        match form.next_field().await {
            Ok(Some(field)) => {
                let name = field.name().unwrap_or_default().to_string();
                let data = match field.bytes().await {
                    Ok(d) => d,
                    Err(e) => return reply(StatusCode::BAD_REQUEST, &e.to_string()),
                };
                match name.as_str() {
                    "job" => match serde_json::from_slice::<WireJobId>(&data) {
                        Ok(j) => job_id = Some(j.job_id),
                        Err(e) => return reply(StatusCode::BAD_REQUEST, &format!("job: {e}")),
                    },
                    "control" => control = Some(data),
                    _ => {}
                }
            }
            Ok(None) => break,
            Err(e) => return reply(StatusCode::BAD_REQUEST, &e.to_string()),
        }
    }
    let Some(job_id) = job_id else {
        return reply(StatusCode::BAD_REQUEST, "missing job part");
    };

    let limit_hit = {
        let mut l = shared.ledger.lock().unwrap();
        l.requests += 1;
        if l.requests <= shared.config.fail_first {
            return reply(StatusCode::INTERNAL_SERVER_ERROR, "injected failure");
        }
        match shared.config.shutdown_after {
            Some(n) if l.served.len() >= n => return reply(StatusCode::SERVICE_UNAVAILABLE, "shutting down"),
            Some(n) => {
                l.served.push(job_id.clone());
                l.served.len() == n
            }
            None => {
                l.served.push(job_id.clone());
                false
            }
        }
    };
    if limit_hit {
        shared.stop.notify_one();
    }
    debug!("mock served {job_id}");
    let body = control.unwrap_or_else(|| Bytes::from_static(STYLE_REFERENCE_PNGS[0].1));
    ([(header::CONTENT_TYPE, "image/png")], body).into_response()
}
