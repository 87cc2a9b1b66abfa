//! Expose any [`ScoringBackend`] over `POST /v1/score`.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use tiny_http::{Header, Method, Request, Response, Server};

use super::protocol::{ErrorResponse, LogprobsResponse, ProbsResponse, ScoreRequest, VectorResponse, SCORE_PATH};
use super::ScoringBackend;
use crate::error::{BackendError, Error, Result};

/// Status used for requests the wrapped backend cannot serve.
pub const UNSUPPORTED_STATUS: u16 = 422;

pub struct ScoringServer {
    server: Arc<Server>,
    url: String,
    workers: Vec<JoinHandle<()>>,
}

impl ScoringServer {
    /// Bind `addr` (e.g. `127.0.0.1:0` for an ephemeral port) and serve with
    /// `threads` workers until dropped or [`ScoringServer::shutdown`].
    pub fn start(backend: Arc<dyn ScoringBackend>, addr: &str, threads: usize) -> Result<Self> {
        let server = Server::http(addr)
            .map_err(|e| Error::io(format!("binding {addr}"), std::io::Error::other(e.to_string())))?;
        let ip = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::validation("addr", "not an IP listen address"))?;
        let server = Arc::new(server);
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let backend = Arc::clone(&backend);
                thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle(backend.as_ref(), req);
                    }
                })
            })
            .collect();
        Ok(ScoringServer {
            server,
            url: format!("http://{ip}"),
            workers,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Block the calling thread until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ScoringServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn error_body(message: String) -> String {
    serde_json::to_string(&ErrorResponse { error: message }).expect("serializable")
}

fn dispatch(backend: &dyn ScoringBackend, req: ScoreRequest) -> Result<String> {
    let body = match req {
        ScoreRequest::CausalLogprobs { text } => {
            let out = backend.conditional_logprobs(&text)?;
            serde_json::to_string(&LogprobsResponse {
                tokens: out.tokens,
                logprobs: out.logprobs,
            })
        }
        ScoreRequest::MaskCandidates { text, candidates } => {
            let refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
            let probs = backend.mask_candidate_probs(&text, &refs)?;
            serde_json::to_string(&ProbsResponse { probs })
        }
        ScoreRequest::Embed { text } => {
            let vector = backend.embed(&text)?;
            serde_json::to_string(&VectorResponse { vector })
        }
    };
    Ok(body.expect("serializable"))
}

fn handle(backend: &dyn ScoringBackend, mut req: Request) {
    let (status, body) = if req.url() != SCORE_PATH {
        (404, error_body(format!("no route for {}", req.url())))
    } else if *req.method() != Method::Post {
        (405, error_body("use POST".into()))
    } else {
        let mut raw = String::new();
        match req.as_reader().read_to_string(&mut raw) {
            Err(e) => (400, error_body(format!("unreadable body: {e}"))),
            Ok(_) => match serde_json::from_str::<ScoreRequest>(&raw) {
                Err(e) => (400, error_body(format!("invalid request: {e}"))),
                Ok(parsed) => match dispatch(backend, parsed) {
                    Ok(body) => (200, body),
                    Err(e @ Error::Capability(_)) => (UNSUPPORTED_STATUS, error_body(e.to_string())),
                    Err(e @ Error::Backend(BackendError::MissingEntry { .. })) => (404, error_body(e.to_string())),
                    Err(e) if e.is_usage() => (400, error_body(e.to_string())),
                    Err(e) => (500, error_body(e.to_string())),
                },
            },
        }
    };
    if let Err(e) = req.respond(json_response(status, body)) {
        log::warn!("failed to send response: {e}");
    }
}
