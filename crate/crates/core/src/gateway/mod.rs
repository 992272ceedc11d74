//! Model endpoints, response caching, and completion parsing.
//!
//! A [`Gateway`] wraps one configured endpoint. It serves repeated prompts
//! from a content-addressed disk cache keyed by (endpoint identity, prompt
//! hash), runs batches with a bounded number of requests in flight, and
//! returns results in input order.
//!
//! Cache layout: `<cache dir>/<identity[..16]>/<hash[..2]>/<hash>.json`,
//! each file holding `{"endpoint", "prompt_hash", "raw"}`.

pub(crate) mod http;
pub mod mock;
mod parse;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use http::RetryPolicy;
pub use parse::parse_label;

use crate::corpus::TaskLabel;
use crate::digest::sha256_hex;
use crate::prompting::RenderedPrompt;
use http::HttpClient;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint {name}: {reason}")]
    InvalidEndpoint { name: String, reason: String },
    #[error("environment variable {0} holding the API token is not set")]
    MissingToken(String),
    #[error("cannot compute a failure rate over zero predictions")]
    Empty,
    #[error("cache i/o: {0}")]
    Cache(String),
}

/// A failed request, after retries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Anything that turns a prompt into a completion.
pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoding {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_tokens() -> u32 {
    16
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointKind {
    /// OpenAI-compatible `/chat/completions` under `base_url`
    /// (e.g. `http://localhost:8000/v1`).
    Remote {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    MockCopyOracle,
    MockConstant {
        label: String,
    },
    MockMajority,
    /// Copies the label of the demonstration closest to the query.
    MockLastLabel,
    MockScripted {
        responses: Vec<String>,
    },
    /// Offline stand-in for taxonomy consolidation; see
    /// [`crate::discovery::SuffixClusterMock`].
    MockClusterBySuffix,
}

impl EndpointKind {
    pub fn is_mock(&self) -> bool {
        !matches!(self, EndpointKind::Remote { .. })
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub kind: EndpointKind,
    #[serde(default)]
    pub decoding: Decoding,
    /// Maximum requests in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl ModelEndpoint {
    pub fn new(name: impl Into<String>, kind: EndpointKind) -> Self {
        ModelEndpoint {
            name: name.into(),
            kind,
            decoding: Decoding::default(),
            concurrency: default_concurrency(),
            max_retries: default_retries(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn mock_constant(label: &str) -> Self {
        Self::new(
            format!("mock_constant_{label}"),
            EndpointKind::MockConstant {
                label: label.into(),
            },
        )
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |reason: &str| GatewayError::InvalidEndpoint {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if let EndpointKind::Remote {
            base_url, model, ..
        } = &self.kind
        {
            if base_url.trim().is_empty() {
                return Err(bad("remote endpoints need base_url"));
            }
            if model.trim().is_empty() {
                return Err(bad("remote endpoints need model"));
            }
        }
        if self.concurrency == 0 {
            return Err(bad("concurrency must be at least 1"));
        }
        Ok(())
    }

    /// Digest of everything that can change a completion. The display name
    /// is not part of it.
    pub fn identity(&self) -> String {
        let canonical = json!({ "kind": self.kind, "decoding": self.decoding });
        sha256_hex(canonical.to_string())
    }
}

/// Client for `POST {base_url}/chat/completions` with one user message.
pub struct RemoteChat {
    url: String,
    model: String,
    token: Option<String>,
    decoding: Decoding,
    client: HttpClient,
}

impl RemoteChat {
    pub fn from_endpoint(endpoint: &ModelEndpoint) -> Result<Self, GatewayError> {
        let EndpointKind::Remote {
            base_url,
            model,
            api_key_env,
        } = &endpoint.kind
        else {
            return Err(GatewayError::InvalidEndpoint {
                name: endpoint.name.clone(),
                reason: "not a remote endpoint".into(),
            });
        };
        let token = match api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| GatewayError::MissingToken(var.clone()))?)
            }
            None => None,
        };
        Ok(RemoteChat {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.clone(),
            token,
            decoding: endpoint.decoding.clone(),
            client: HttpClient::new(
                Duration::from_secs(endpoint.timeout_secs),
                RetryPolicy {
                    max_retries: endpoint.max_retries,
                    ..RetryPolicy::default()
                },
            ),
        })
    }
}

impl Completer for RemoteChat {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_output_tokens,
        });
        let value = self
            .client
            .post_json(&self.url, self.token.as_deref(), &body)
            .map_err(TransportError)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                TransportError(format!(
                    "no choices[0].message.content in response: {value}"
                ))
            })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    endpoint: String,
    prompt_hash: String,
    raw: String,
}

/// Disk-backed response cache. Reads are lock-free; writes go through a
/// mutex and an atomic rename.
#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, identity: &str, prompt_hash: &str) -> PathBuf {
        self.root
            .join(&identity[..16.min(identity.len())])
            .join(&prompt_hash[..2])
            .join(format!("{prompt_hash}.json"))
    }

    pub fn get(&self, identity: &str, prompt_hash: &str) -> Option<String> {
        let bytes = fs::read(self.path(identity, prompt_hash)).ok()?;
        let rec: CacheRecord = serde_json::from_slice(&bytes).ok()?;
        (rec.endpoint == identity && rec.prompt_hash == prompt_hash).then_some(rec.raw)
    }

    pub fn put(&self, identity: &str, prompt_hash: &str, raw: &str) -> Result<(), GatewayError> {
        let path = self.path(identity, prompt_hash);
        let dir = path.parent().expect("cache path has a parent");
        let rec = CacheRecord {
            endpoint: identity.to_string(),
            prompt_hash: prompt_hash.to_string(),
            raw: raw.to_string(),
        };
        let _guard = self.write_lock.lock().expect("cache lock");
        fs::create_dir_all(dir)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        let tmp = dir.join(format!(".{prompt_hash}.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&rec).expect("record serializes"))
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    ParseFailure,
    TransportFailure,
}

/// Raw completion of one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub raw: Result<String, TransportError>,
    pub prompt_hash: String,
    pub latency: Duration,
    pub cached: bool,
}

/// A parsed classification. Latency and cache provenance are kept in
/// memory only so persisted predictions stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub raw: String,
    /// The allowed label string the completion was mapped to.
    pub parsed: Option<String>,
    /// `parsed` decoded back to the task label it verbalizes.
    pub label: Option<TaskLabel>,
    pub status: PredictionStatus,
    pub prompt_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub latency: Duration,
    #[serde(skip)]
    pub cached: bool,
}

impl Prediction {
    pub fn is_failure(&self) -> bool {
        self.status != PredictionStatus::Ok
    }
}

/// Fraction of predictions that failed to parse or never arrived.
pub fn failure_rate(predictions: &[Prediction]) -> Result<f64, GatewayError> {
    if predictions.is_empty() {
        return Err(GatewayError::Empty);
    }
    let failures = predictions.iter().filter(|p| p.is_failure()).count();
    Ok(failures as f64 / predictions.len() as f64)
}

/// One endpoint plus its cache and concurrency budget.
pub struct Gateway {
    endpoint: ModelEndpoint,
    identity: String,
    backend: Box<dyn Completer>,
    cache: Option<ResponseCache>,
    threads: rayon::ThreadPool,
    live_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl Gateway {
    /// Builds the backend the endpoint's kind calls for.
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let backend: Box<dyn Completer> = match &endpoint.kind {
            EndpointKind::Remote { .. } => Box::new(RemoteChat::from_endpoint(&endpoint)?),
            EndpointKind::MockCopyOracle => Box::new(mock::CopyOracle),
            EndpointKind::MockConstant { label } => Box::new(mock::Constant(label.clone())),
            EndpointKind::MockMajority => Box::new(mock::Majority),
            EndpointKind::MockLastLabel => Box::new(mock::LastLabel),
            EndpointKind::MockScripted { responses } => {
                Box::new(mock::Scripted::new(responses.clone()))
            }
            EndpointKind::MockClusterBySuffix => Box::new(crate::discovery::SuffixClusterMock),
        };
        Self::with_backend(endpoint, backend)
    }

    /// Uses a caller-supplied backend; the endpoint only provides identity
    /// and concurrency settings.
    pub fn with_backend(
        endpoint: ModelEndpoint,
        backend: Box<dyn Completer>,
    ) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(endpoint.concurrency)
            .build()
            .map_err(|e| GatewayError::InvalidEndpoint {
                name: endpoint.name.clone(),
                reason: e.to_string(),
            })?;
        Ok(Gateway {
            identity: endpoint.identity(),
            endpoint,
            backend,
            cache: None,
            threads,
            live_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        })
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    /// Requests that reached the backend.
    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn cacheable(&self) -> bool {
        !matches!(self.endpoint.kind, EndpointKind::MockScripted { .. })
    }

    pub fn complete(&self, prompt: &str) -> Completion {
        let prompt_hash = sha256_hex(prompt);
        let start = Instant::now();
        if prompt.is_empty() {
            return Completion {
                raw: Err(TransportError("empty prompt".into())),
                prompt_hash,
                latency: start.elapsed(),
                cached: false,
            };
        }
        if let Some(cache) = self.cache.as_ref().filter(|_| self.cacheable()) {
            if let Some(raw) = cache.get(&self.identity, &prompt_hash) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Completion {
                    raw: Ok(raw),
                    prompt_hash,
                    latency: start.elapsed(),
                    cached: true,
                };
            }
        }
        self.live_calls.fetch_add(1, Ordering::Relaxed);
        let raw = self.backend.complete(prompt);
        if let (Ok(text), Some(cache)) = (&raw, self.cache.as_ref().filter(|_| self.cacheable())) {
            if let Err(e) = cache.put(&self.identity, &prompt_hash, text) {
                log::warn!("could not cache response: {e}");
            }
        }
        Completion {
            raw,
            prompt_hash,
            latency: start.elapsed(),
            cached: false,
        }
    }

    /// Completes every prompt; output order matches input order.
    pub fn complete_batch(&self, prompts: &[String]) -> Vec<Completion> {
        self.threads
            .install(|| prompts.par_iter().map(|p| self.complete(p)).collect())
    }

    pub fn classify(&self, prompt: &RenderedPrompt) -> Prediction {
        to_prediction(prompt, self.complete(&prompt.text))
    }

    pub fn classify_batch(&self, prompts: &[RenderedPrompt]) -> Vec<Prediction> {
        self.threads.install(|| {
            prompts
                .par_iter()
                .map(|p| to_prediction(p, self.complete(&p.text)))
                .collect()
        })
    }
}

fn to_prediction(prompt: &RenderedPrompt, completion: Completion) -> Prediction {
    let Completion {
        raw,
        prompt_hash,
        latency,
        cached,
    } = completion;
    match raw {
        Err(e) => Prediction {
            raw: String::new(),
            parsed: None,
            label: None,
            status: PredictionStatus::TransportFailure,
            prompt_hash,
            error: Some(e.0),
            latency,
            cached,
        },
        Ok(raw) => {
            let parsed = parse_label(&raw, &prompt.allowed_labels);
            let label = parsed
                .as_deref()
                .and_then(|p| prompt.config.verbalizer().ok().and_then(|v| v.decode(p)));
            let status = if label.is_some() {
                PredictionStatus::Ok
            } else {
                PredictionStatus::ParseFailure
            };
            Prediction {
                raw,
                parsed: parsed.filter(|_| label.is_some()),
                label,
                status,
                prompt_hash,
                error: None,
                latency,
                cached,
            }
        }
    }
}
