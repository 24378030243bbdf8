//! Mock embedding service: a synthetic oracle behind the `/embed` protocol.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use blobvert_core::oracle::{Oracle, ProjectionOracle};
use serde::Serialize;
use thiserror::Error;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::spec::OracleSpec;
use crate::wire::{decode_wire_image, EmbedRequest, EmbedResponse, ErrorResponse, LedgerResponse};

pub const DEFAULT_MAX_BATCH: usize = 256;

/// Request bodies above this size are refused unread.
const MAX_BODY_BYTES: usize = 512 << 20;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// `host:port`; port 0 picks a free one.
    pub bind: String,
    pub spec: OracleSpec,
    pub max_batch: usize,
    /// Sleep before answering each `/embed` request.
    pub latency: Option<Duration>,
    pub workers: usize,
}

impl ServerConfig {
    pub fn new(bind: impl Into<String>, spec: OracleSpec) -> Self {
        Self {
            bind: bind.into(),
            spec,
            max_batch: DEFAULT_MAX_BATCH,
            latency: None,
            workers: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
}

struct State {
    oracle: ProjectionOracle,
    max_batch: usize,
    latency: Option<Duration>,
    images_sent: AtomicU64,
}

/// A running server. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    state: Arc<State>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Images in all successful `/embed` responses so far.
    pub fn images_sent(&self) -> u64 {
        self.state.images_sent.load(Ordering::SeqCst)
    }

    /// Stops accepting requests and waits for the workers.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server is shut down from elsewhere.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    /// A cloneable trigger that stops the server from another thread.
    pub fn stopper(&self) -> Stopper {
        Stopper {
            server: Arc::clone(&self.server),
            workers: self.workers.len(),
        }
    }

    fn stop(&mut self) {
        self.stopper().stop();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

#[derive(Clone)]
pub struct Stopper {
    server: Arc<Server>,
    workers: usize,
}

impl Stopper {
    pub fn stop(&self) {
        for _ in 0..self.workers {
            self.server.unblock();
        }
    }
}

pub fn serve(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    if config.max_batch == 0 {
        return Err(ServerError::Config("max batch must be at least 1".into()));
    }
    if config.workers == 0 {
        return Err(ServerError::Config("workers must be at least 1".into()));
    }
    let oracle = config
        .spec
        .build_synthetic()
        .map_err(|e| ServerError::Config(e.to_string()))?;
    let server = Server::http(&config.bind).map_err(|e| ServerError::Bind {
        addr: config.bind.clone(),
        message: e.to_string(),
    })?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServerError::Config("unix sockets are not supported".into()))?;
    let server = Arc::new(server);
    let state = Arc::new(State {
        oracle,
        max_batch: config.max_batch,
        latency: config.latency,
        images_sent: AtomicU64::new(0),
    });
    let workers = (0..config.workers)
        .map(|_| {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(&state, request);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        state,
        workers,
    })
}

fn json_response<T: Serialize>(status: u16, body: &T) -> Response<std::io::Cursor<Vec<u8>>> {
    let bytes = serde_json::to_vec(body).expect("serializable body");
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_data(bytes)
        .with_status_code(status)
        .with_header(header)
}

fn error(status: u16, message: impl Into<String>) -> Response<std::io::Cursor<Vec<u8>>> {
    json_response(
        status,
        &ErrorResponse {
            error: message.into(),
        },
    )
}

fn handle(state: &State, mut request: Request) {
    let response = match (request.method(), request.url()) {
        (Method::Post, "/embed") => embed(state, &mut request),
        (Method::Get, "/ledger") => json_response(
            200,
            &LedgerResponse {
                images_sent: state.images_sent.load(Ordering::SeqCst),
            },
        ),
        (_, "/embed") | (_, "/ledger") => error(405, "method not allowed"),
        _ => error(404, "not found"),
    };
    let _ = request.respond(response);
}

fn embed(state: &State, request: &mut Request) -> Response<std::io::Cursor<Vec<u8>>> {
    if let Some(latency) = state.latency {
        std::thread::sleep(latency);
    }
    if request.body_length().is_some_and(|n| n > MAX_BODY_BYTES) {
        return error(413, "request body too large");
    }
    let mut body = Vec::new();
    if let Err(e) = request
        .as_reader()
        .take(MAX_BODY_BYTES as u64 + 1)
        .read_to_end(&mut body)
    {
        return error(400, format!("cannot read body: {e}"));
    }
    if body.len() > MAX_BODY_BYTES {
        return error(413, "request body too large");
    }
    let parsed: EmbedRequest = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return error(400, format!("malformed request: {e}")),
    };
    if parsed.images.is_empty() {
        return error(400, "empty batch");
    }
    if parsed.images.len() > state.max_batch {
        return error(
            400,
            format!(
                "batch of {} exceeds the limit of {}",
                parsed.images.len(),
                state.max_batch
            ),
        );
    }
    let mut images = Vec::with_capacity(parsed.images.len());
    for (i, text) in parsed.images.iter().enumerate() {
        match decode_wire_image(text) {
            Ok(img) => images.push(img),
            Err(e) => return error(400, format!("image {i}: {e}")),
        }
    }
    match state.oracle.embed_batch(&images) {
        Ok(embeddings) => {
            state
                .images_sent
                .fetch_add(images.len() as u64, Ordering::SeqCst);
            json_response(
                200,
                &EmbedResponse {
                    dim: state.oracle.dim(),
                    embeddings: embeddings.into_iter().map(|e| e.into_values()).collect(),
                },
            )
        }
        Err(e) => error(400, e.to_string()),
    }
}
