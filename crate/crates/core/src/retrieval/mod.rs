//! Demonstration selection: random, lexical (BM25), and semantic (cosine kNN).
//!
//! Lexical and semantic rankings are sorted by score descending with ties
//! broken by ascending pool index, so both are seed-free and reproducible.

mod bm25;
pub mod embedding;
mod tokenize;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{Bm25Params, LexicalIndex};
pub use embedding::{
    normalize, Embedder, EmbeddingProvider, HashingEmbeddings, PrecomputedEmbeddings,
    RemoteEmbeddings,
};
pub use tokenize::tokenize;

use crate::corpus::{Sample, Task, TaskLabel};
use crate::digest::{derive_seed, seeded_rng};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("requested {k} demonstrations from a pool of {pool}")]
    KExceedsPool { k: usize, pool: usize },
    #[error("quota unsatisfiable: {0}")]
    Quota(String),
    #[error("pool entry {id} has no label for the {task:?} task")]
    UnlabeledEntry { id: String, task: Task },
    #[error("pool has no embedding index")]
    MissingEmbeddingIndex,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding index has {vectors} vectors for {entries} entries")]
    IndexSize { vectors: usize, entries: usize },
    #[error("embedding for entry {0} is not unit norm")]
    NotUnitNorm(usize),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("no precomputed embedding for text hash {0}")]
    MissingEmbedding(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("embedding i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Lexical,
    Semantic,
}

/// Immutable set of labeled candidates with their lexical and (optionally)
/// dense indices.
#[derive(Debug, Clone)]
pub struct DemonstrationPool {
    task: Task,
    entries: Vec<Sample>,
    labels: Vec<TaskLabel>,
    lexical: LexicalIndex,
    embeddings: Option<Vec<Vec<f64>>>,
}

impl DemonstrationPool {
    /// Every entry must carry a label for `task`.
    pub fn new(entries: Vec<Sample>, task: Task) -> Result<Self, RetrievalError> {
        let labels = entries
            .iter()
            .map(|s| {
                s.gold(task).ok_or_else(|| RetrievalError::UnlabeledEntry {
                    id: s.id.clone(),
                    task,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lexical = LexicalIndex::build(
            entries.iter().map(|s| s.text.as_str()),
            Bm25Params::default(),
        );
        Ok(DemonstrationPool {
            task,
            entries,
            labels,
            lexical,
            embeddings: None,
        })
    }

    /// Attaches one unit-norm vector per entry.
    pub fn with_embeddings(mut self, vectors: Vec<Vec<f64>>) -> Result<Self, RetrievalError> {
        if vectors.len() != self.entries.len() {
            return Err(RetrievalError::IndexSize {
                vectors: vectors.len(),
                entries: self.entries.len(),
            });
        }
        if let Some(first) = vectors.first() {
            for (i, v) in vectors.iter().enumerate() {
                if v.len() != first.len() {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: first.len(),
                        got: v.len(),
                    });
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(RetrievalError::NotUnitNorm(i));
                }
            }
        }
        self.embeddings = Some(vectors);
        Ok(self)
    }

    /// Embeds every entry with `embedder` and attaches the result.
    pub fn embed_with(self, embedder: &Embedder) -> Result<Self, RetrievalError> {
        let texts: Vec<&str> = self.entries.iter().map(|s| s.text.as_str()).collect();
        let vectors = embedder.embed_texts(&texts)?;
        self.with_embeddings(vectors)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn label(&self, index: usize) -> TaskLabel {
        self.labels[index]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lexical_index(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn embeddings(&self) -> Option<&[Vec<f64>]> {
        self.embeddings.as_deref()
    }

    pub fn has_embeddings(&self) -> bool {
        self.embeddings.is_some()
    }
}

/// One chosen demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    /// Position in the pool; `None` for synthetic entries such as a needle.
    pub index: Option<usize>,
    pub sample: Sample,
    pub label: TaskLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub demonstrations: Vec<Demonstration>,
    pub strategy: Strategy,
    pub k: usize,
    pub seed: Option<u64>,
    /// Non-fatal conditions (e.g. an empty tokenized query).
    pub flags: Vec<String>,
}

impl SelectionResult {
    pub fn ids(&self) -> Vec<&str> {
        self.demonstrations
            .iter()
            .map(|d| d.sample.id.as_str())
            .collect()
    }
}

fn demo(pool: &DemonstrationPool, index: usize, score: f64) -> Demonstration {
    Demonstration {
        index: Some(index),
        sample: pool.entries[index].clone(),
        label: pool.labels[index],
        score,
    }
}

/// Uniform sample without replacement. With `quota`, draws exactly the
/// given count per label (quotas must sum to `k`) and then shuffles the
/// union.
pub fn select_random(
    pool: &DemonstrationPool,
    k: usize,
    seed: u64,
    quota: Option<&[(TaskLabel, usize)]>,
) -> Result<SelectionResult, RetrievalError> {
    if k > pool.len() {
        return Err(RetrievalError::KExceedsPool {
            k,
            pool: pool.len(),
        });
    }
    let mut chosen: Vec<usize> = match quota {
        None => {
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.shuffle(&mut seeded_rng(seed));
            idx.truncate(k);
            idx
        }
        Some(quota) => {
            let sum: usize = quota.iter().map(|(_, n)| n).sum();
            if sum != k {
                return Err(RetrievalError::Quota(format!(
                    "quotas sum to {sum}, k is {k}"
                )));
            }
            let mut out = Vec::with_capacity(k);
            for (slot, (label, n)) in quota.iter().enumerate() {
                let mut idx: Vec<usize> = (0..pool.len())
                    .filter(|&i| pool.labels[i] == *label)
                    .collect();
                if idx.len() < *n {
                    return Err(RetrievalError::Quota(format!(
                        "label {label} needs {n}, pool has {}",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut seeded_rng(derive_seed(seed, &[slot as u64])));
                out.extend_from_slice(&idx[..*n]);
            }
            out.shuffle(&mut seeded_rng(seed));
            out
        }
    };
    let demonstrations = chosen.drain(..).map(|i| demo(pool, i, 0.0)).collect();
    Ok(SelectionResult {
        demonstrations,
        strategy: Strategy::Random,
        k,
        seed: Some(seed),
        flags: Vec::new(),
    })
}

/// Indices of the `k` best scores, ties by ascending index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Top-k by Okapi BM25 (k1 = 1.2, b = 0.75).
pub fn score_bm25(
    query: &str,
    pool: &DemonstrationPool,
    k: usize,
) -> Result<SelectionResult, RetrievalError> {
    if k > pool.len() {
        return Err(RetrievalError::KExceedsPool {
            k,
            pool: pool.len(),
        });
    }
    let mut flags = Vec::new();
    if tokenize(query).is_empty() {
        flags.push("empty_query: all lexical scores are zero".to_string());
    }
    let scores = pool.lexical.scores(query);
    let demonstrations = top_k(&scores, k)
        .into_iter()
        .map(|i| demo(pool, i, scores[i]))
        .collect();
    Ok(SelectionResult {
        demonstrations,
        strategy: Strategy::Lexical,
        k,
        seed: None,
        flags,
    })
}

/// Top-k by cosine similarity against the pool's embedding index.
pub fn select_semantic(
    query_vec: &[f64],
    pool: &DemonstrationPool,
    k: usize,
) -> Result<SelectionResult, RetrievalError> {
    let index = pool
        .embeddings
        .as_ref()
        .ok_or(RetrievalError::MissingEmbeddingIndex)?;
    if k > pool.len() {
        return Err(RetrievalError::KExceedsPool {
            k,
            pool: pool.len(),
        });
    }
    if let Some(first) = index.first() {
        if first.len() != query_vec.len() {
            return Err(RetrievalError::DimensionMismatch {
                expected: first.len(),
                got: query_vec.len(),
            });
        }
    }
    let q = normalize(query_vec.to_vec())?;
    let scores: Vec<f64> = index
        .iter()
        .map(|v| v.iter().zip(&q).map(|(a, b)| a * b).sum())
        .collect();
    let demonstrations = top_k(&scores, k)
        .into_iter()
        .map(|i| demo(pool, i, scores[i]))
        .collect();
    Ok(SelectionResult {
        demonstrations,
        strategy: Strategy::Semantic,
        k,
        seed: None,
        flags: Vec::new(),
    })
}
