//! Dense text embeddings with a content-addressed cache.
//!
//! Vectors are keyed by the SHA-256 of the text. An [`Embedder`] consults
//! its in-memory map, then the on-disk cache (`<dir>/<provider>/<hash>.json`),
//! and only sends the remaining texts to the provider. Every returned vector
//! is L2-normalized.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::tokenize::tokenize;
use super::RetrievalError;
use crate::digest::sha256_hex;
use crate::gateway::http::{HttpClient, RetryPolicy};

/// Source of raw (not necessarily normalized) vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Identity used to partition caches; two providers with the same id
    /// must produce the same vectors.
    fn id(&self) -> String;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

/// OpenAI-compatible `/v1/embeddings` endpoint.
pub struct RemoteEmbeddings {
    base_url: String,
    model: String,
    token: Option<String>,
    client: HttpClient,
}

impl RemoteEmbeddings {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        token: Option<String>,
    ) -> Self {
        RemoteEmbeddings {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            token,
            client: HttpClient::new(Duration::from_secs(120), RetryPolicy::default()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = HttpClient::new(Duration::from_secs(120), retry);
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbeddings {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.base_url, self.model)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let url = format!("{}/embeddings", self.base_url);
        let body = json!({ "model": self.model, "input": texts });
        let value = self
            .client
            .post_json(&url, self.token.as_deref(), &body)
            .map_err(RetrievalError::Provider)?;
        let mut resp: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| RetrievalError::Provider(format!("unexpected embeddings payload: {e}")))?;
        if resp.data.len() != texts.len() {
            return Err(RetrievalError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data.sort_by_key(|d| d.index.unwrap_or(0));
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct PrecomputedRecord {
    hash: String,
    vector: Vec<f64>,
}

/// Vectors computed elsewhere, loaded from JSONL lines `{"hash", "vector"}`
/// where `hash` is the hex SHA-256 of the text.
pub struct PrecomputedEmbeddings {
    id: String,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn from_map(id: impl Into<String>, vectors: HashMap<String, Vec<f64>>) -> Self {
        PrecomputedEmbeddings {
            id: id.into(),
            vectors,
        }
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, RetrievalError> {
        let file = fs::File::open(path)
            .map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PrecomputedRecord = serde_json::from_str(&line).map_err(|e| {
                RetrievalError::Io(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            vectors.insert(rec.hash, rec.vector);
        }
        Ok(PrecomputedEmbeddings {
            id: format!("file:{}", path.display()),
            vectors,
        })
    }

    /// Serializes `(text, vector)` pairs in the format read by [`Self::load_jsonl`].
    pub fn to_jsonl<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
        let mut out = String::new();
        for (text, v) in pairs {
            let rec = PrecomputedRecord {
                hash: sha256_hex(text),
                vector: v.to_vec(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        texts
            .iter()
            .map(|t| {
                let hash = sha256_hex(t);
                self.vectors
                    .get(&hash)
                    .cloned()
                    .ok_or(RetrievalError::MissingEmbedding(hash))
            })
            .collect()
    }
}

/// Offline stand-in: signed feature hashing of BM25 tokens. Deterministic,
/// dependency-free, and good enough to exercise semantic selection.
pub struct HashingEmbeddings {
    pub dim: usize,
}

impl EmbeddingProvider for HashingEmbeddings {
    fn id(&self) -> String {
        format!("hashing:{}", self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.dim.max(1)];
                for tok in tokenize(t) {
                    let h = sha256_hex(tok.as_bytes());
                    let bucket = u64::from_str_radix(&h[..15], 16).unwrap_or(0) as usize % v.len();
                    let sign = if h.as_bytes()[15] % 2 == 0 { 1.0 } else { -1.0 };
                    v[bucket] += sign;
                }
                if v.iter().all(|x| *x == 0.0) {
                    v[0] = 1.0;
                }
                v
            })
            .collect())
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, RetrievalError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RetrievalError::InvalidVector("non-finite component".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(RetrievalError::InvalidVector("zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Caching front end over an [`EmbeddingProvider`].
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    memory: RwLock<HashMap<String, Vec<f64>>>,
    cache_dir: Option<PathBuf>,
    batch_size: usize,
    max_in_flight: usize,
    cache_hits: AtomicUsize,
    provider_texts: AtomicUsize,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>) -> Self {
        Embedder {
            provider,
            memory: RwLock::new(HashMap::new()),
            cache_dir: None,
            batch_size: 64,
            max_in_flight: 4,
            cache_hits: AtomicUsize::new(0),
            provider_texts: AtomicUsize::new(0),
        }
    }

    /// Persists vectors under `dir/<provider digest>/`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into().join(&sha256_hex(self.provider.id())[..16]));
        self
    }

    pub fn with_batching(mut self, batch_size: usize, max_in_flight: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    pub fn provider_id(&self) -> String {
        self.provider.id()
    }

    /// Number of lookups served from memory or disk.
    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Number of texts sent to the provider.
    pub fn provider_texts(&self) -> usize {
        self.provider_texts.load(Ordering::Relaxed)
    }

    fn cached(&self, hash: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.memory.read().expect("cache lock").get(hash) {
            return Some(v.clone());
        }
        let path = self.cache_dir.as_ref()?.join(format!("{hash}.json"));
        let v: Vec<f64> = serde_json::from_slice(&fs::read(path).ok()?).ok()?;
        self.memory
            .write()
            .expect("cache lock")
            .insert(hash.to_string(), v.clone());
        Some(v)
    }

    fn store(&self, hash: &str, v: &[f64]) -> Result<(), RetrievalError> {
        if let Some(dir) = &self.cache_dir {
            fs::create_dir_all(dir)
                .map_err(|e| RetrievalError::Io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{hash}.json"));
            let tmp = dir.join(format!(".{hash}.{}.tmp", std::process::id()));
            fs::write(&tmp, serde_json::to_vec(v).expect("vector serializes"))
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        }
        self.memory
            .write()
            .expect("cache lock")
            .insert(hash.to_string(), v.to_vec());
        Ok(())
    }

    /// One unit-norm vector per input text, in input order.
    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let hashes: Vec<String> = texts.iter().map(sha256_hex).collect();
        let mut missing: Vec<(String, &str)> = Vec::new();
        for (hash, text) in hashes.iter().zip(texts) {
            if self.cached(hash).is_some() {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
            } else if !missing.iter().any(|(h, _)| h == hash) {
                missing.push((hash.clone(), text));
            } else {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
            }
        }
        if !missing.is_empty() {
            let batches: Vec<&[(String, &str)]> = missing.chunks(self.batch_size).collect();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.max_in_flight)
                .build()
                .map_err(|e| RetrievalError::Provider(e.to_string()))?;
            let results: Vec<Result<Vec<Vec<f64>>, RetrievalError>> = pool.install(|| {
                batches
                    .par_iter()
                    .map(|batch| {
                        let inputs: Vec<&str> = batch.iter().map(|(_, t)| *t).collect();
                        let raw = self.provider.embed_batch(&inputs)?;
                        if raw.len() != inputs.len() {
                            return Err(RetrievalError::Provider(format!(
                                "provider returned {} vectors for {} texts",
                                raw.len(),
                                inputs.len()
                            )));
                        }
                        raw.into_iter().map(normalize).collect()
                    })
                    .collect()
            });
            for (batch, vectors) in batches.iter().zip(results) {
                let vectors = vectors?;
                self.provider_texts
                    .fetch_add(vectors.len(), Ordering::Relaxed);
                for ((hash, _), v) in batch.iter().zip(vectors) {
                    self.store(hash, &v)?;
                }
            }
        }
        let out: Vec<Vec<f64>> = hashes
            .iter()
            .map(|h| {
                self.cached(h)
                    .ok_or_else(|| RetrievalError::MissingEmbedding(h.clone()))
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.len() != first.len()) {
                return Err(RetrievalError::DimensionMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counting(std::sync::atomic::AtomicUsize);

    impl EmbeddingProvider for Counting {
        fn id(&self) -> String {
            "counting".into()
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
            self.0.fetch_add(texts.len(), Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| vec![t.len() as f64, 1.0, 2.0])
                .collect())
        }
    }

    #[test]
    fn identical_texts_share_a_vector() {
        let e = Embedder::new(Box::new(Counting(AtomicUsize::new(0))));
        let v = e.embed_texts(&["same", "same"]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(e.provider_texts(), 1);
        let again = e.embed_texts(&["same"]).unwrap();
        assert_eq!(again[0], v[0]);
        assert_eq!(e.provider_texts(), 1);
        assert!(e.cache_hits() >= 2);
    }

    #[test]
    fn outputs_are_unit_norm() {
        let e = Embedder::new(Box::new(HashingEmbeddings { dim: 32 }));
        for v in e.embed_texts(&["buy pills now", "", "天气很好"]).unwrap() {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn precomputed_missing_key_names_hash() {
        let p = PrecomputedEmbeddings::from_map("t", HashMap::new());
        let e = Embedder::new(Box::new(p));
        match e.embed_texts(&["absent"]) {
            Err(RetrievalError::MissingEmbedding(h)) => assert_eq!(h, sha256_hex("absent")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precomputed_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.jsonl");
        let v = [3.0, 4.0];
        fs::write(&path, PrecomputedEmbeddings::to_jsonl([("hello", &v[..])])).unwrap();
        let e = Embedder::new(Box::new(PrecomputedEmbeddings::load_jsonl(&path).unwrap()));
        assert_eq!(e.embed_texts(&["hello"]).unwrap()[0], vec![0.6, 0.8]);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let mut map = HashMap::new();
        map.insert(sha256_hex("a"), vec![1.0, 0.0]);
        map.insert(sha256_hex("b"), vec![1.0, 0.0, 0.0]);
        let e = Embedder::new(Box::new(PrecomputedEmbeddings::from_map("t", map)));
        assert!(matches!(
            e.embed_texts(&["a", "b"]),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn disk_cache_survives_new_embedder() {
        let dir = tempfile::tempdir().unwrap();
        let e = Embedder::new(Box::new(HashingEmbeddings { dim: 8 })).with_cache_dir(dir.path());
        let first = e.embed_texts(&["persist me"]).unwrap();
        let e2 = Embedder::new(Box::new(Counting(AtomicUsize::new(0))));
        // different provider id: separate partition, so this one misses
        let _ = e2
            .with_cache_dir(dir.path())
            .embed_texts(&["persist me"])
            .unwrap();
        let e3 = Embedder::new(Box::new(HashingEmbeddings { dim: 8 })).with_cache_dir(dir.path());
        assert_eq!(e3.embed_texts(&["persist me"]).unwrap(), first);
        assert_eq!(e3.provider_texts(), 0);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(normalize(vec![0.0, 0.0]).is_err());
        assert!(normalize(vec![f64::NAN]).is_err());
    }
}
