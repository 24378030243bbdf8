//! Client for a remote embedding service.

use std::sync::Mutex;
use std::time::Duration;

use blobvert_core::canvas::GrayCanvas;
use blobvert_core::oracle::{check_batch, Embedding, Oracle, OracleError, QueryLedger};

use crate::wire::{encode_wire_image, EmbedRequest, EmbedResponse, ErrorResponse, LedgerResponse};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub input_size: (usize, usize),
    pub timeout: Duration,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    pub max_batch: usize,
    pub parallelism: usize,
}

/// Embeds over HTTP. Images travel as 8-bit PGM, so the service sees the
/// quantized candidate.
///
/// Batches larger than `max_batch` are split into chunks. The ledger grows
/// by each chunk's size once the service has answered it with 200; a call
/// that fails still leaves earlier chunks counted, as the service counted
/// them too. Transport failures are retried; 4xx answers are not.
#[derive(Debug)]
pub struct RemoteOracle {
    config: RemoteConfig,
    agent: ureq::Agent,
    dim: Mutex<Option<usize>>,
    ledger: QueryLedger,
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Result<Self, OracleError> {
        if config.max_batch == 0 || config.parallelism == 0 {
            return Err(OracleError::InvalidParameters(
                "max_batch and parallelism must be at least 1".into(),
            ));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self {
            config,
            agent,
            dim: Mutex::new(None),
            ledger: QueryLedger::new(),
        })
    }

    /// Dimension seen in the first successful response.
    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().expect("dim lock")
    }

    /// The service's own count, from `GET /ledger`.
    pub fn server_images_sent(&self) -> Result<u64, OracleError> {
        let url = format!("{}/ledger", self.config.endpoint);
        let response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let body: LedgerResponse = response
            .into_json()
            .map_err(|e| OracleError::Protocol(format!("bad ledger response: {e}")))?;
        Ok(body.images_sent)
    }

    fn post(&self, body: &EmbedRequest) -> Result<EmbedResponse, OracleError> {
        let url = format!("{}/embed", self.config.endpoint);
        let mut attempt = 0;
        loop {
            match self.agent.post(&url).send_json(body) {
                Ok(response) => {
                    return response
                        .into_json()
                        .map_err(|e| OracleError::Protocol(format!("malformed response: {e}")))
                }
                Err(ureq::Error::Status(code, response)) if code < 500 => {
                    let message = response
                        .into_json::<ErrorResponse>()
                        .map(|e| e.error)
                        .unwrap_or_else(|_| "no error body".into());
                    return Err(OracleError::Protocol(format!("HTTP {code}: {message}")));
                }
                Err(e) if attempt < self.config.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                    let _ = e;
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(OracleError::Transport(format!(
                        "HTTP {code} after {} attempts",
                        attempt + 1
                    )))
                }
                Err(e) => return Err(OracleError::Transport(e.to_string())),
            }
        }
    }

    fn embed_chunk(&self, chunk: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
        let images = chunk
            .iter()
            .map(encode_wire_image)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| OracleError::Protocol(e.to_string()))?;
        let response = self.post(&EmbedRequest { images })?;
        if response.embeddings.len() != chunk.len() {
            return Err(OracleError::Protocol(format!(
                "sent {} images, received {} embeddings",
                chunk.len(),
                response.embeddings.len()
            )));
        }
        {
            let mut dim = self.dim.lock().expect("dim lock");
            let expected = *dim.get_or_insert(response.dim);
            if response.dim != expected {
                return Err(OracleError::DimensionDrift {
                    expected,
                    found: response.dim,
                });
            }
            if let Some(bad) = response.embeddings.iter().find(|e| e.len() != expected) {
                return Err(OracleError::DimensionDrift {
                    expected,
                    found: bad.len(),
                });
            }
        }
        let embeddings = response
            .embeddings
            .into_iter()
            .map(Embedding::new)
            .collect::<Result<Vec<_>, _>>()?;
        self.ledger.record(chunk.len());
        Ok(embeddings)
    }
}

impl Oracle for RemoteOracle {
    fn input_size(&self) -> (usize, usize) {
        self.config.input_size
    }

    fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
        check_batch(self.input_size(), images.iter().map(GrayCanvas::size))?;
        if images
            .iter()
            .any(|i| i.pixels().iter().any(|p| !(0.0..=1.0).contains(p)))
        {
            return Err(OracleError::PixelRange);
        }
        let chunks: Vec<&[GrayCanvas]> = images.chunks(self.config.max_batch).collect();
        let mut out = Vec::with_capacity(images.len());
        for wave in chunks.chunks(self.config.parallelism) {
            if wave.len() == 1 {
                out.extend(self.embed_chunk(wave[0])?);
                continue;
            }
            let results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|chunk| scope.spawn(move || self.embed_chunk(chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embed worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }

    fn images_sent(&self) -> u64 {
        self.ledger.images_sent()
    }
}
