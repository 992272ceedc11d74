//! Deterministic stand-ins for a model. They read the demonstration blocks
//! back out of the prompt text, so they see exactly what a remote model
//! would see.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Completer, TransportError};
use crate::prompting::parse_blocks;

/// Answers with the label of the first demonstration whose text equals the
/// query. A perfect in-context retriever.
pub struct CopyOracle;

impl Completer for CopyOracle {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let Some(blocks) = parse_blocks(prompt) else {
            return Ok(String::new());
        };
        Ok(blocks
            .demos
            .iter()
            .find(|(text, _)| *text == blocks.query)
            .map(|(_, answer)| answer.clone())
            .unwrap_or_default())
    }
}

pub struct Constant(pub String);

impl Completer for Constant {
    fn complete(&self, _prompt: &str) -> Result<String, TransportError> {
        Ok(self.0.clone())
    }
}

/// Most frequent demonstration answer; ties go to the lexicographically
/// smallest answer so the result does not depend on order.
pub struct Majority;

impl Completer for Majority {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let Some(blocks) = parse_blocks(prompt) else {
            return Ok(String::new());
        };
        Ok(majority_answer(blocks.demos.iter().map(|(_, a)| a.as_str())).unwrap_or_default())
    }
}

pub fn majority_answer<'a>(answers: impl IntoIterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers.into_iter().filter(|a| !a.is_empty()) {
        *counts.entry(a).or_default() += 1;
    }
    // BTreeMap iterates in ascending key order; max_by_key keeps the last
    // maximum, so reverse to keep the smallest key among ties.
    counts
        .into_iter()
        .rev()
        .max_by_key(|(_, n)| *n)
        .map(|(a, _)| a.to_string())
}

/// Answers with the label of the demonstration nearest the query.
pub struct LastLabel;

impl Completer for LastLabel {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        Ok(parse_blocks(prompt)
            .and_then(|b| b.demos.last().map(|(_, a)| a.clone()))
            .unwrap_or_default())
    }
}

/// Replays a fixed list of responses in call order, repeating the last one
/// once exhausted. Only meaningful for sequential use.
pub struct Scripted {
    responses: Vec<String>,
    next: AtomicUsize,
}

impl Scripted {
    pub fn new(responses: Vec<String>) -> Self {
        Scripted {
            responses,
            next: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl Completer for Scripted {
    fn complete(&self, _prompt: &str) -> Result<String, TransportError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.responses
            .get(i)
            .or(self.responses.last())
            .cloned()
            .ok_or_else(|| TransportError("scripted mock has no responses".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BinaryLabel, Sample, Source, Task, TaskLabel};
    use crate::prompting::{render_prompt, PromptConfig};
    use crate::retrieval::Demonstration;

    fn prompt(labels: &[(&str, BinaryLabel)], query: &str) -> String {
        let demos: Vec<Demonstration> = labels
            .iter()
            .enumerate()
            .map(|(i, (t, l))| Demonstration {
                index: Some(i),
                sample: Sample::new(format!("d{i}"), *t, Source::Twitter, Some(*l), None).unwrap(),
                label: TaskLabel::Binary(*l),
                score: 0.0,
            })
            .collect();
        render_prompt(&PromptConfig::new(Task::Binary, demos.len()), &demos, query)
            .unwrap()
            .text
    }

    #[test]
    fn copy_oracle_finds_needle() {
        use BinaryLabel::*;
        let p = prompt(
            &[("a", Benign), ("needle", Illicit), ("b", Benign)],
            "needle",
        );
        assert_eq!(CopyOracle.complete(&p).unwrap(), "illicit");
        let p = prompt(&[("a", Benign)], "absent");
        assert_eq!(CopyOracle.complete(&p).unwrap(), "");
    }

    #[test]
    fn majority_and_last() {
        use BinaryLabel::*;
        let p = prompt(
            &[("a", Illicit), ("b", Benign), ("c", Illicit), ("d", Benign)],
            "q",
        );
        assert_eq!(Majority.complete(&p).unwrap(), "benign"); // tie -> smallest
        assert_eq!(LastLabel.complete(&p).unwrap(), "benign");
        let p = prompt(&[("a", Illicit), ("b", Benign), ("c", Illicit)], "q");
        assert_eq!(Majority.complete(&p).unwrap(), "illicit");
    }

    #[test]
    fn scripted_replays_in_order() {
        let s = Scripted::new(vec!["one".into(), "two".into()]);
        assert_eq!(s.complete("x").unwrap(), "one");
        assert_eq!(s.complete("x").unwrap(), "two");
        assert_eq!(s.complete("x").unwrap(), "two");
        assert_eq!(s.calls(), 3);
    }
}
