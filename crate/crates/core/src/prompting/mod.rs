//! Prompt rendering.
//!
//! A prompt is the task header (instructions plus the option list) followed
//! by one block per demonstration and a final unanswered block:
//!
//! ```text
//! <header>==\n\nQuery: <demo text>\n\nAnswer: <demo label>\n\n
//! ...
//! ==\n\nQuery: <query text>\n\nAnswer:
//! ```
//!
//! Headers live in `templates/` and name labels through `{{label}}`
//! placeholders, which are filled with the active verbalization.

mod labels;
mod order;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use labels::{
    apply_label_scheme, option_order, AbstractSymbols, LabelScheme, Verbalizer,
    MULTICLASS_OPTION_ORDER,
};
pub use order::{apply_ordering, insert_needle, OrderingPolicy};

use crate::corpus::{Task, TaskLabel};
use crate::digest::sha256_hex;
use crate::retrieval::{Demonstration, Strategy};

const BLOCK_SEPARATOR: &str = "==\n\nQuery: ";
const ANSWER_MARKER: &str = "\n\nAnswer: ";
const TRUNCATION_MARKER: &str = " [...]";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("label scheme {scheme:?} is not supported for the {task:?} task")]
    UnsupportedScheme { scheme: LabelScheme, task: Task },
    #[error("label {0} does not belong to the configured task")]
    LabelTaskMismatch(String),
    #[error("grouping label {0:?} is absent from the demonstrations")]
    GroupingLabelAbsent(String),
    #[error("grouping by {0:?} needs at least one demonstration with another label")]
    SingleLabelGroup(String),
    #[error("expected {expected} demonstrations, got {got}")]
    DemoCount { expected: usize, got: usize },
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
    #[error("template: {0}")]
    Template(String),
}

fn default_strategy() -> Strategy {
    Strategy::Random
}

/// Everything that defines one in-context learning condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub task: Task,
    #[serde(default)]
    pub k: usize,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub label_scheme: LabelScheme,
    #[serde(default)]
    pub abstract_symbols: AbstractSymbols,
    #[serde(default)]
    pub ordering: OrderingPolicy,
    /// Insert an exact copy of the query (with its gold label) among the
    /// demonstrations at a uniformly random position.
    #[serde(default)]
    pub needle: bool,
    #[serde(default)]
    pub seed: u64,
    /// Per-label demonstration quota for random selection, e.g.
    /// `{ benign = 32, illicit = 32 }`. Must sum to `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BTreeMap<String, usize>>,
    /// Demonstration texts longer than this many characters are cut.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_demo_chars: Option<usize>,
}

impl PromptConfig {
    pub fn new(task: Task, k: usize) -> Self {
        PromptConfig {
            task,
            k,
            strategy: Strategy::Random,
            label_scheme: LabelScheme::Original,
            abstract_symbols: AbstractSymbols::Digits,
            ordering: OrderingPolicy::AsRetrieved,
            needle: false,
            seed: 0,
            balance: None,
            max_demo_chars: None,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        self.verbalizer()?;
        if let Some(label) = self.ordering.grouping_label() {
            if self.k < 2 {
                return Err(PromptError::InvalidConfig(format!(
                    "ordering {} needs k >= 2",
                    self.ordering
                )));
            }
            TaskLabel::parse(self.task, label).map_err(|_| {
                PromptError::InvalidConfig(format!("grouping label {label:?} is not a task label"))
            })?;
        }
        if self.balance.is_some() {
            let quota = self.quota()?.unwrap_or_default();
            let sum: usize = quota.iter().map(|(_, n)| n).sum();
            if sum != self.k {
                return Err(PromptError::InvalidConfig(format!(
                    "balance quotas sum to {sum}, k is {}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    pub fn verbalizer(&self) -> Result<Verbalizer, PromptError> {
        Verbalizer::new(self.task, self.label_scheme, self.abstract_symbols)
    }

    /// The balance table resolved to task labels, in option-list order.
    pub fn quota(&self) -> Result<Option<Vec<(TaskLabel, usize)>>, PromptError> {
        let Some(balance) = &self.balance else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for (name, n) in balance {
            let label = TaskLabel::parse(self.task, name).map_err(|_| {
                PromptError::InvalidConfig(format!("balance label {name:?} is not a task label"))
            })?;
            out.push((label, *n));
        }
        let order = option_order(self.task);
        out.sort_by_key(|(l, _)| order.iter().position(|o| o == l));
        Ok(Some(out))
    }

    /// Same quota scaled to a smaller `k`, keeping proportions (used when a
    /// sweep asks for fewer shots than the configured balance).
    pub fn with_k(&self, k: usize) -> PromptConfig {
        let mut out = self.clone();
        out.k = k;
        if let Some(balance) = &self.balance {
            let total: usize = balance.values().sum();
            if total > 0 && total != k {
                let mut scaled: BTreeMap<String, usize> = balance
                    .iter()
                    .map(|(l, n)| (l.clone(), n * k / total))
                    .collect();
                let mut missing = k - scaled.values().sum::<usize>();
                for n in scaled.values_mut() {
                    if missing == 0 {
                        break;
                    }
                    *n += 1;
                    missing -= 1;
                }
                out.balance = Some(scaled);
            }
        }
        out
    }
}

/// Instruction header for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: Task,
    pub header: String,
}

impl PromptTemplate {
    pub fn builtin(task: Task) -> Self {
        let header = match task {
            Task::Binary => include_str!("../../templates/binary.txt"),
            Task::Multiclass => include_str!("../../templates/multiclass.txt"),
        };
        PromptTemplate {
            task,
            header: header.to_string(),
        }
    }

    pub fn from_file(task: Task, path: &Path) -> Result<Self, PromptError> {
        let header = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Ok(PromptTemplate { task, header })
    }

    /// Header with every `{{label}}` placeholder filled in.
    pub fn render_header(&self, verbalizer: &Verbalizer) -> Result<String, PromptError> {
        let mut out = self.header.clone();
        for label in option_order(self.task) {
            out = out.replace(
                &format!("{{{{{}}}}}", label.as_str()),
                &verbalizer.option_name(label),
            );
        }
        if let Some(pos) = out.find("{{") {
            let rest: String = out[pos..].chars().take(32).collect();
            return Err(PromptError::Template(format!(
                "unknown placeholder near {rest:?}"
            )));
        }
        Ok(out)
    }
}

/// One demonstration as embedded in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Verbalized label; `None` under the no-label scheme.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    /// Demonstrations in textual order.
    pub manifest: Vec<ManifestEntry>,
    /// Strings the model may answer with, in option-list order.
    pub allowed_labels: Vec<String>,
    pub config: PromptConfig,
    /// Number of demonstration texts that were cut.
    pub truncated: usize,
}

impl RenderedPrompt {
    pub fn prompt_hash(&self) -> String {
        sha256_hex(&self.text)
    }

    pub fn manifest_ids(&self) -> Vec<&str> {
        self.manifest.iter().map(|m| m.id.as_str()).collect()
    }
}

fn truncate_chars(text: &str, budget: Option<usize>) -> (String, bool) {
    match budget {
        Some(max) if text.chars().count() > max => {
            let mut cut: String = text.chars().take(max).collect();
            cut.push_str(TRUNCATION_MARKER);
            (cut, true)
        }
        _ => (text.to_string(), false),
    }
}

/// Renders with the bundled template for `config.task`.
pub fn render_prompt(
    config: &PromptConfig,
    demos: &[Demonstration],
    query: &str,
) -> Result<RenderedPrompt, PromptError> {
    render_with_template(&PromptTemplate::builtin(config.task), config, demos, query)
}

pub fn render_with_template(
    template: &PromptTemplate,
    config: &PromptConfig,
    demos: &[Demonstration],
    query: &str,
) -> Result<RenderedPrompt, PromptError> {
    if template.task != config.task {
        return Err(PromptError::Template(
            "template task differs from config task".into(),
        ));
    }
    if demos.len() != config.k {
        return Err(PromptError::DemoCount {
            expected: config.k,
            got: demos.len(),
        });
    }
    let verbalizer = config.verbalizer()?;
    let mut text = template.render_header(&verbalizer)?;
    let mut manifest = Vec::with_capacity(demos.len());
    let mut truncated = 0;
    for d in demos {
        let label = verbalizer.demo_label(d.label)?;
        let (demo_text, cut) = truncate_chars(&d.sample.text, config.max_demo_chars);
        if cut {
            truncated += 1;
            log::warn!(
                "demonstration {} truncated to {:?} characters",
                d.sample.id,
                config.max_demo_chars
            );
        }
        text.push_str(BLOCK_SEPARATOR);
        text.push_str(&demo_text);
        text.push_str(ANSWER_MARKER);
        text.push_str(label.as_deref().unwrap_or(""));
        text.push_str("\n\n");
        manifest.push(ManifestEntry {
            id: d.sample.id.clone(),
            label,
        });
    }
    text.push_str(BLOCK_SEPARATOR);
    text.push_str(query);
    text.push_str(ANSWER_MARKER);
    Ok(RenderedPrompt {
        text,
        manifest,
        allowed_labels: verbalizer.allowed_labels(),
        config: config.clone(),
        truncated,
    })
}

/// Query/answer blocks recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBlocks {
    pub header: String,
    /// `(text, answer)` per demonstration; the answer is empty when hidden.
    pub demos: Vec<(String, String)>,
    pub query: String,
}

/// Splits a prompt back into its blocks. Returns `None` when the text does
/// not follow the block layout.
pub fn parse_blocks(prompt: &str) -> Option<PromptBlocks> {
    let mut pieces = prompt.split(BLOCK_SEPARATOR);
    let header = pieces.next()?.to_string();
    let mut blocks: Vec<&str> = pieces.collect();
    let last = blocks.pop()?;
    let query = last.strip_suffix(ANSWER_MARKER)?.to_string();
    let demos = blocks
        .into_iter()
        .map(|b| {
            let (text, answer) = b.rsplit_once(ANSWER_MARKER)?;
            Some((text.to_string(), answer.strip_suffix("\n\n")?.to_string()))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(PromptBlocks {
        header,
        demos,
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BinaryLabel, Sample, Source};

    fn demo(id: &str, text: &str, label: BinaryLabel) -> Demonstration {
        Demonstration {
            index: None,
            sample: Sample::new(id, text, Source::Twitter, Some(label), None).unwrap(),
            label: TaskLabel::Binary(label),
            score: 0.0,
        }
    }

    #[test]
    fn manifest_matches_text_blocks() {
        let mut cfg = PromptConfig::new(Task::Binary, 2);
        cfg.label_scheme = LabelScheme::Inverted;
        let demos = [
            demo("a", "cheap pills", BinaryLabel::Illicit),
            demo("b", "nice day", BinaryLabel::Benign),
        ];
        let p = render_prompt(&cfg, &demos, "query text").unwrap();
        let labels: Vec<_> = p
            .manifest
            .iter()
            .map(|m| m.label.clone().unwrap())
            .collect();
        assert_eq!(labels, ["benign", "illicit"]);
        let blocks = parse_blocks(&p.text).unwrap();
        let scanned: Vec<_> = blocks.demos.iter().map(|(_, a)| a.as_str()).collect();
        assert_eq!(scanned, ["benign", "illicit"]);
        assert_eq!(blocks.query, "query text");
        assert_eq!(p.allowed_labels, ["illicit", "benign"]);
    }

    #[test]
    fn demo_count_must_match_k() {
        let cfg = PromptConfig::new(Task::Binary, 3);
        assert!(matches!(
            render_prompt(&cfg, &[demo("a", "x", BinaryLabel::Benign)], "q"),
            Err(PromptError::DemoCount { .. })
        ));
    }

    #[test]
    fn truncation_marks_long_demos() {
        let mut cfg = PromptConfig::new(Task::Binary, 1);
        cfg.max_demo_chars = Some(4);
        let p = render_prompt(&cfg, &[demo("a", "abcdefgh", BinaryLabel::Benign)], "q").unwrap();
        assert_eq!(p.truncated, 1);
        assert!(p.text.contains("Query: abcd [...]\n\n"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PromptConfig::new(Task::Multiclass, 4);
        cfg.label_scheme = LabelScheme::Inverted;
        assert!(cfg.validate().is_err());
        let mut cfg = PromptConfig::new(Task::Binary, 1);
        cfg.ordering = OrderingPolicy::GroupedLabelLast("illicit".into());
        assert!(cfg.validate().is_err());
        cfg.k = 4;
        assert!(cfg.validate().is_ok());
        cfg.ordering = OrderingPolicy::GroupedLabelLast("porn".into());
        assert!(cfg.validate().is_err());
        let mut cfg = PromptConfig::new(Task::Binary, 4);
        cfg.balance = Some([("benign".to_string(), 2), ("illicit".to_string(), 1)].into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn with_k_rescales_balance() {
        let mut cfg = PromptConfig::new(Task::Binary, 64);
        cfg.balance = Some([("benign".to_string(), 32), ("illicit".to_string(), 32)].into());
        let small = cfg.with_k(5);
        assert_eq!(small.balance.as_ref().unwrap().values().sum::<usize>(), 5);
        assert!(small.validate().is_ok());
    }

    #[test]
    fn config_toml_like_json_round_trip() {
        let json = r#"{"task":"binary","k":4,"strategy":"lexical","ordering":"grouped_label_last(illicit)"}"#;
        let cfg: PromptConfig = serde_json::from_str(json).unwrap();
        assert_eq!(
            cfg.ordering,
            OrderingPolicy::GroupedLabelLast("illicit".into())
        );
        let back: PromptConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<PromptConfig>(r#"{"task":"binary","kk":1}"#).is_err());
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let t = PromptTemplate {
            task: Task::Binary,
            header: "pick {{benign}} or {{mystery}}\n\n".into(),
        };
        let v =
            Verbalizer::new(Task::Binary, LabelScheme::Original, AbstractSymbols::Digits).unwrap();
        assert!(t.render_header(&v).is_err());
    }
}
