//! Open-world category discovery.
//!
//! Stage one asks a model for a free-form category name per unlabeled text,
//! either anchored on the known taxonomy or open-ended. Stage two has a
//! model group the distinct names into named, summarized clusters, checks
//! that the clusters partition the names, and diffs them against the known
//! taxonomy.

mod consolidate;
mod diff;
mod mock;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consolidate::{consolidate_clusters, ConsolidateOptions, Consolidation, RepairEvent};
pub use diff::{diff_taxonomy, load_overrides, ClusterNovelty, NoveltyReport, Overrides};
pub use mock::SuffixClusterMock;

use crate::corpus::{Sample, UnifiedCategory};
use crate::digest::{derive_seed, seeded_rng};
use crate::gateway::Gateway;

const ANCHORED: &str = include_str!("../../templates/annotate_anchored.txt");
const OPEN_ENDED: &str = include_str!("../../templates/annotate_open.txt");

/// Longest accepted free-form name, in hyphen-separated tokens.
const MAX_LABEL_TOKENS: usize = 8;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("no {0} given")]
    Empty(&'static str),
    #[error("clusters do not partition the labels after {rounds} repair rounds: missing {missing:?}, duplicated {duplicated:?}, unknown {unknown:?}")]
    Partition {
        rounds: usize,
        missing: Vec<String>,
        duplicated: Vec<String>,
        unknown: Vec<String>,
    },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("override file {path}: {message}")]
    Overrides { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMode {
    /// The known categories are listed in the prompt; new names are allowed.
    Anchored,
    /// No category names are given.
    OpenEnded,
}

impl std::str::FromStr for AnnotationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anchored" => Ok(AnnotationMode::Anchored),
            "open_ended" | "open-ended" | "open" => Ok(AnnotationMode::OpenEnded),
            other => Err(format!("unknown annotation mode {other:?}")),
        }
    }
}

/// A model-proposed category for one text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeFormLabel {
    pub text_id: String,
    pub raw: String,
    /// Lowercase, hyphen-joined alphanumeric tokens.
    pub label: String,
    pub mode: AnnotationMode,
}

impl AsRef<str> for FreeFormLabel {
    fn as_ref(&self) -> &str {
        &self.label
    }
}

/// Lowercase alphanumeric tokens joined by `-`; `None` if nothing is left.
pub fn normalize_free_form(raw: &str) -> Option<String> {
    let tokens: Vec<String> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    (!tokens.is_empty()).then(|| tokens.join("-"))
}

/// Outcome of annotating one text. `label` is `None` on a parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub text_id: String,
    pub raw: String,
    pub label: Option<FreeFormLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Parses a stage-one completion. Empty answers, answers spread over
/// several lines and overly long names are failures.
pub fn parse_free_form(raw: &str) -> Result<String, String> {
    let lines: Vec<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    match lines.as_slice() {
        [] => Err("empty completion".into()),
        [line] => {
            let line = line
                .strip_prefix("Answer:")
                .or_else(|| line.strip_prefix("answer:"))
                .unwrap_or(line);
            let label = normalize_free_form(line).ok_or("no alphanumeric content")?;
            if label.split('-').count() > MAX_LABEL_TOKENS {
                return Err(format!("name longer than {MAX_LABEL_TOKENS} words"));
            }
            Ok(label)
        }
        _ => Err(format!("{} non-empty lines", lines.len())),
    }
}

/// The known illicit category names as listed in anchored prompts.
pub fn known_category_names() -> Vec<&'static str> {
    UnifiedCategory::illicit()
        .map(UnifiedCategory::as_str)
        .collect()
}

/// Instruction header for a mode.
pub fn annotation_header(mode: AnnotationMode) -> String {
    match mode {
        AnnotationMode::Anchored => {
            ANCHORED.replace("{{categories}}", &known_category_names().join(", "))
        }
        AnnotationMode::OpenEnded => OPEN_ENDED.to_string(),
    }
}

/// Header, one block per example, then the text to annotate.
pub fn annotation_prompt(
    mode: AnnotationMode,
    examples: &[(String, String)],
    text: &str,
) -> String {
    let mut out = annotation_header(mode);
    for (t, label) in examples {
        out.push_str(&format!("==\n\nQuery: {t}\n\nAnswer: {label}\n\n"));
    }
    out.push_str(&format!("==\n\nQuery: {text}\n\nAnswer: "));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    pub mode: AnnotationMode,
    /// Examples per prompt, drawn at random from the example pool.
    pub k: usize,
    pub seed: u64,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            mode: AnnotationMode::Anchored,
            k: 8,
            seed: 0,
        }
    }
}

/// Stage one over a corpus. `examples` holds `(text, free-form name)`
/// pairs; each prompt gets its own random draw of `k` of them. Results
/// follow the input order.
pub fn annotate_free_form(
    texts: &[Sample],
    examples: &[(String, String)],
    options: &AnnotateOptions,
    gateway: &Gateway,
) -> Vec<Annotation> {
    let prompts: Vec<String> = texts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut picked = examples.to_vec();
            picked.shuffle(&mut seeded_rng(derive_seed(options.seed, &[i as u64])));
            picked.truncate(options.k);
            annotation_prompt(options.mode, &picked, &s.text)
        })
        .collect();
    gateway
        .complete_batch(&prompts)
        .into_iter()
        .zip(texts)
        .map(|(completion, s)| match completion.raw {
            Err(e) => Annotation {
                text_id: s.id.clone(),
                raw: String::new(),
                label: None,
                error: Some(format!("transport: {e}")),
            },
            Ok(raw) => match parse_free_form(&raw) {
                Ok(label) => Annotation {
                    text_id: s.id.clone(),
                    label: Some(FreeFormLabel {
                        text_id: s.id.clone(),
                        raw: raw.clone(),
                        label,
                        mode: options.mode,
                    }),
                    raw,
                    error: None,
                },
                Err(e) => Annotation {
                    text_id: s.id.clone(),
                    raw,
                    label: None,
                    error: Some(e),
                },
            },
        })
        .collect()
}

/// A distinct normalized label and how many texts carry it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

/// Case-, punctuation- and whitespace-insensitive dedup, ordered by count
/// (descending) and then name.
pub fn normalize_labels<S: AsRef<str>>(labels: &[S]) -> Vec<LabelCount> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in labels {
        if let Some(n) = normalize_free_form(l.as_ref()) {
            *counts.entry(n).or_default() += 1;
        }
    }
    let mut out: Vec<LabelCount> = counts
        .into_iter()
        .map(|(label, count)| LabelCount { label, count })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    out
}

/// A group of free-form labels sharing one underlying activity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyCluster {
    pub name: String,
    pub summary: String,
    /// Normalized labels, sorted.
    pub members: Vec<String>,
    /// Texts behind the members.
    pub count: usize,
}
