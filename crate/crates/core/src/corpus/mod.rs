//! Samples, the unified taxonomy, ingestion, and dataset builders.

mod build;
mod ingest;
mod taxonomy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub use build::{
    build_binary_dataset, build_multiclass_dataset, dedup_by_id, BuildSpec, DatasetKind,
    DatasetManifest, DatasetSplit, SplitRatio,
};
pub use ingest::{ingest_samples, ingest_str, IngestOptions, Ingested, LabelMode, RejectedRecord};
pub use taxonomy::{
    lookup_any_source, source_label_table, unify_category, BinaryLabel, UnifiedCategory,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("label {label:?} has no unified mapping for source {source_tag}")]
    UnmappedLabel { label: String, source_tag: Source },
    #[error("unknown source tag {0:?} (expected twitter or search_engine)")]
    UnknownSource(String),
    #[error("sample text is empty")]
    EmptyText,
    #[error("sample {id}: category {category} contradicts binary label {label}")]
    InconsistentLabels {
        id: String,
        category: UnifiedCategory,
        label: BinaryLabel,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("insufficient samples in cell {cell}: need {needed}, have {available}")]
    InsufficientSamples {
        cell: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid build parameters: {0}")]
    InvalidSpec(String),
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
}

/// Platform a sample was collected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Twitter,
    SearchEngine,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Twitter, Source::SearchEngine];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Twitter => "twitter",
            Source::SearchEngine => "search_engine",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "twitter" | "x" => Ok(Source::Twitter),
            "search_engine" | "search" | "se" => Ok(Source::SearchEngine),
            other => Err(CorpusError::UnknownSource(other.to_string())),
        }
    }
}

/// Classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass,
}

/// A gold or predicted label under one of the two tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskLabel {
    Binary(BinaryLabel),
    Category(UnifiedCategory),
}

impl TaskLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskLabel::Binary(b) => b.as_str(),
            TaskLabel::Category(c) => c.as_str(),
        }
    }

    pub fn task(self) -> Task {
        match self {
            TaskLabel::Binary(_) => Task::Binary,
            TaskLabel::Category(_) => Task::Multiclass,
        }
    }

    /// Parses a canonical label name under `task`.
    pub fn parse(task: Task, s: &str) -> Result<Self, CorpusError> {
        match task {
            Task::Binary => s.parse().map(TaskLabel::Binary),
            Task::Multiclass => s.parse().map(TaskLabel::Category),
        }
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for TaskLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// One text item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_label: Option<BinaryLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<UnifiedCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl Sample {
    /// Builds a sample, deriving `binary_label` from `category` when only
    /// the latter is given.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        source: Source,
        binary_label: Option<BinaryLabel>,
        category: Option<UnifiedCategory>,
    ) -> Result<Self, CorpusError> {
        let sample = Sample {
            id: id.into(),
            text: text.into(),
            source,
            binary_label: binary_label.or(category.map(UnifiedCategory::binary_label)),
            category,
            language: None,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        if let (Some(cat), Some(label)) = (self.category, self.binary_label) {
            if cat.binary_label() != label {
                return Err(CorpusError::InconsistentLabels {
                    id: self.id.clone(),
                    category: cat,
                    label,
                });
            }
        }
        Ok(())
    }

    /// The category used by the multiclass task. Benign samples without an
    /// explicit category count as `benign`.
    pub fn effective_category(&self) -> Option<UnifiedCategory> {
        match (self.category, self.binary_label) {
            (Some(c), _) => Some(c),
            (None, Some(BinaryLabel::Benign)) => Some(UnifiedCategory::Benign),
            _ => None,
        }
    }

    /// Gold label under `task`, if the sample carries one.
    pub fn gold(&self, task: Task) -> Option<TaskLabel> {
        match task {
            Task::Binary => self.binary_label.map(TaskLabel::Binary),
            Task::Multiclass => self.effective_category().map(TaskLabel::Category),
        }
    }
}

/// Best-effort language tag from the dominant script. Informational only.
pub fn detect_language(text: &str) -> Option<String> {
    let mut counts = [0usize; 6];
    for c in text.chars() {
        let slot = match c as u32 {
            0x3040..=0x30FF => 1,                                     // kana
            0xAC00..=0xD7AF | 0x1100..=0x11FF | 0x3130..=0x318F => 2, // hangul
            0x0E00..=0x0E7F => 3,                                     // thai
            0x0400..=0x04FF => 4,                                     // cyrillic
            0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF => 0, // han
            _ if c.is_ascii_alphabetic() => 5,
            _ => continue,
        };
        counts[slot] += 1;
    }
    // Kana anywhere means Japanese even when kanji dominate.
    if counts[1] > 0 && counts[1] * 10 >= counts[0] {
        return Some("ja".into());
    }
    let (slot, n) = counts
        .iter()
        .enumerate()
        .max_by_key(|(i, n)| (**n, usize::MAX - i))?;
    if *n == 0 {
        return None;
    }
    Some(["zh", "ja", "ko", "th", "ru", "en"][slot].into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_invariants() {
        let s = Sample::new(
            "a",
            "buy now",
            Source::Twitter,
            None,
            Some(UnifiedCategory::Drug),
        )
        .unwrap();
        assert_eq!(s.binary_label, Some(BinaryLabel::Illicit));
        assert!(Sample::new("b", "   ", Source::Twitter, None, None).is_err());
        assert!(matches!(
            Sample::new(
                "c",
                "x",
                Source::Twitter,
                Some(BinaryLabel::Illicit),
                Some(UnifiedCategory::Benign)
            ),
            Err(CorpusError::InconsistentLabels { .. })
        ));
    }

    #[test]
    fn gold_labels_per_task() {
        let benign = Sample::new(
            "b",
            "hello",
            Source::Twitter,
            Some(BinaryLabel::Benign),
            None,
        )
        .unwrap();
        assert_eq!(
            benign.gold(Task::Multiclass),
            Some(TaskLabel::Category(UnifiedCategory::Benign))
        );
        let bare =
            Sample::new("i", "x", Source::Twitter, Some(BinaryLabel::Illicit), None).unwrap();
        assert_eq!(bare.gold(Task::Multiclass), None);
        assert_eq!(
            bare.gold(Task::Binary),
            Some(TaskLabel::Binary(BinaryLabel::Illicit))
        );
    }

    #[test]
    fn source_parsing() {
        assert_eq!(
            "search-engine".parse::<Source>().unwrap(),
            Source::SearchEngine
        );
        assert_eq!("Twitter".parse::<Source>().unwrap(), Source::Twitter);
        assert!("reddit".parse::<Source>().is_err());
    }

    #[test]
    fn language_guess() {
        assert_eq!(detect_language("出售高仿证件").as_deref(), Some("zh"));
        assert_eq!(detect_language("buy cheap pills").as_deref(), Some("en"));
        assert_eq!(detect_language("こんにちは世界").as_deref(), Some("ja"));
        assert_eq!(detect_language("12345 !!"), None);
    }
}
