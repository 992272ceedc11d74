//! JSONL ingestion.
//!
//! Each line is an object `{id?, text, label?, source?, language?}`. Records
//! that fail validation are collected in [`Ingested::rejected`] with their
//! 1-based line number; the rest are kept.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::{
    detect_language, unify_category, BinaryLabel, CorpusError, Sample, Source, UnifiedCategory,
};
use crate::digest::content_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub label_mode: LabelMode,
    /// Route native labels missing from the mapping table to `others`
    /// instead of rejecting the record.
    pub unmapped_to_others: bool,
}

impl IngestOptions {
    pub fn labeled() -> Self {
        IngestOptions {
            label_mode: LabelMode::Labeled,
            unmapped_to_others: false,
        }
    }

    pub fn unlabeled() -> Self {
        IngestOptions {
            label_mode: LabelMode::Unlabeled,
            unmapped_to_others: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub samples: Vec<Sample>,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    language: Option<String>,
}

/// Reads a JSONL file of samples. `source` applies to records without
/// their own `source` field.
pub fn ingest_samples(
    path: &Path,
    source: Source,
    options: IngestOptions,
) -> Result<Ingested, CorpusError> {
    let content = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(ingest_str(&content, source, options))
}

pub fn ingest_str(content: &str, source: Source, options: IngestOptions) -> Ingested {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line, source, options) {
            Ok(sample) => {
                if !seen.insert(sample.id.clone()) {
                    out.rejected.push(RejectedRecord {
                        line: line_no,
                        reason: format!("duplicate id {}", sample.id),
                    });
                    continue;
                }
                out.samples.push(sample);
            }
            Err(reason) => out.rejected.push(RejectedRecord {
                line: line_no,
                reason,
            }),
        }
    }
    out
}

fn parse_record(
    line: &str,
    default_source: Source,
    options: IngestOptions,
) -> Result<Sample, String> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let text = raw.text.ok_or("missing text field")?;
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyText.to_string());
    }
    let source = match raw.source.as_deref() {
        Some(s) => s.parse::<Source>().map_err(|e| e.to_string())?,
        None => default_source,
    };
    let id = match raw.id {
        Some(serde_json::Value::String(s)) if !s.is_empty() => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(serde_json::Value::Null) | None => content_id(&text),
        Some(other) => return Err(format!("unsupported id value {other}")),
    };
    let (binary_label, category) = match options.label_mode {
        LabelMode::Unlabeled => (None, None),
        LabelMode::Labeled => {
            let label = raw.label.ok_or("missing label field")?;
            resolve_label(&label, source, options.unmapped_to_others).map_err(|e| e.to_string())?
        }
    };
    let mut sample =
        Sample::new(id, text, source, binary_label, category).map_err(|e| e.to_string())?;
    sample.language = raw.language.or_else(|| detect_language(&sample.text));
    Ok(sample)
}

/// Interprets a raw label string: binary names, unified category names,
/// then the platform's native label set.
fn resolve_label(
    label: &str,
    source: Source,
    unmapped_to_others: bool,
) -> Result<(Option<BinaryLabel>, Option<UnifiedCategory>), CorpusError> {
    if let Ok(b) = label.parse::<BinaryLabel>() {
        let category = (b == BinaryLabel::Benign).then_some(UnifiedCategory::Benign);
        return Ok((Some(b), category));
    }
    if let Ok(cat) = label.parse::<UnifiedCategory>() {
        return Ok((Some(cat.binary_label()), Some(cat)));
    }
    match unify_category(label, source) {
        Ok(cat) => Ok((Some(cat.binary_label()), Some(cat))),
        Err(_) if unmapped_to_others => {
            Ok((Some(BinaryLabel::Illicit), Some(UnifiedCategory::Others)))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_valid_lines() {
        let input = r#"{"id":"a","text":"one","label":"benign"}
{"id":"b","text":"two","label":"illicit"}
{"id":"c","text":"three","label":"gambling"}"#;
        let got = ingest_str(input, Source::Twitter, IngestOptions::labeled());
        assert_eq!(got.samples.len(), 3);
        assert!(got.rejected.is_empty());
    }

    #[test]
    fn empty_text_rejected_with_line() {
        let input = "{\"text\":\"ok\",\"label\":\"benign\"}\n{\"text\":\"  \",\"label\":\"benign\"}\n{\"text\":\"also ok\",\"label\":\"drug\"}\n";
        let got = ingest_str(input, Source::Twitter, IngestOptions::labeled());
        assert_eq!(got.samples.len(), 2);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rejected[0].line, 2);
    }

    #[test]
    fn drug_label_on_twitter() {
        let got = ingest_str(
            r#"{"id":"x1","text":"pills here","label":"drug"}"#,
            Source::Twitter,
            IngestOptions::labeled(),
        );
        let mut expected = Sample {
            id: "x1".into(),
            text: "pills here".into(),
            source: Source::Twitter,
            binary_label: Some(BinaryLabel::Illicit),
            category: Some(UnifiedCategory::Drug),
            language: None,
        };
        expected.language = Some("en".into());
        assert_eq!(got.samples, vec![expected]);
    }

    #[test]
    fn native_search_engine_label() {
        let got = ingest_str(
            r#"{"text":"t","label":"Black Hat SEO & Adv."}"#,
            Source::SearchEngine,
            IngestOptions::labeled(),
        );
        assert_eq!(
            got.samples[0].category,
            Some(UnifiedCategory::Advertisement)
        );
    }

    #[test]
    fn unknown_label_rejected_unless_routed() {
        let line = r#"{"text":"t","label":"usury"}"#;
        let got = ingest_str(line, Source::Twitter, IngestOptions::labeled());
        assert!(got.samples.is_empty());
        assert!(got.rejected[0].reason.contains("usury"));

        let opts = IngestOptions {
            unmapped_to_others: true,
            ..IngestOptions::labeled()
        };
        let got = ingest_str(line, Source::Twitter, opts);
        assert_eq!(got.samples[0].category, Some(UnifiedCategory::Others));
    }

    #[test]
    fn malformed_and_missing_fields() {
        let input = "not json\n{\"label\":\"benign\"}\n{\"text\":\"x\"}\n";
        let got = ingest_str(input, Source::Twitter, IngestOptions::labeled());
        assert!(got.samples.is_empty());
        let lines: Vec<_> = got.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2, 3]);
    }

    #[test]
    fn content_hash_ids_are_stable() {
        let input = r#"{"text":"same text"}"#;
        let a = ingest_str(input, Source::Twitter, IngestOptions::unlabeled());
        let b = ingest_str(input, Source::Twitter, IngestOptions::unlabeled());
        assert_eq!(a.samples[0].id, b.samples[0].id);
        assert_eq!(a.samples[0].binary_label, None);
    }

    #[test]
    fn missing_file() {
        let err = ingest_samples(
            Path::new("/nonexistent/x.jsonl"),
            Source::Twitter,
            IngestOptions::labeled(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }
}
