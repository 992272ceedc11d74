//! Demonstration ordering and needle insertion.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PromptError;
use crate::digest::seeded_rng;
use crate::retrieval::Demonstration;

/// How demonstrations are arranged before rendering.
///
/// Written as `as_retrieved`, `shuffled`, `grouped_label_first(<label>)` or
/// `grouped_label_last(<label>)` in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum OrderingPolicy {
    #[default]
    AsRetrieved,
    Shuffled,
    /// All demonstrations with this (canonical) label first, the rest after.
    GroupedLabelFirst(String),
    /// All demonstrations with this (canonical) label last, nearest the query.
    GroupedLabelLast(String),
}

impl OrderingPolicy {
    pub fn grouping_label(&self) -> Option<&str> {
        match self {
            OrderingPolicy::GroupedLabelFirst(l) | OrderingPolicy::GroupedLabelLast(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for OrderingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderingPolicy::AsRetrieved => f.write_str("as_retrieved"),
            OrderingPolicy::Shuffled => f.write_str("shuffled"),
            OrderingPolicy::GroupedLabelFirst(l) => write!(f, "grouped_label_first({l})"),
            OrderingPolicy::GroupedLabelLast(l) => write!(f, "grouped_label_last({l})"),
        }
    }
}

impl FromStr for OrderingPolicy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let grouped = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
        };
        match s {
            "as_retrieved" | "mixed" => Ok(OrderingPolicy::AsRetrieved),
            "shuffled" => Ok(OrderingPolicy::Shuffled),
            _ => {
                if let Some(l) = grouped("grouped_label_first") {
                    Ok(OrderingPolicy::GroupedLabelFirst(l))
                } else if let Some(l) = grouped("grouped_label_last") {
                    Ok(OrderingPolicy::GroupedLabelLast(l))
                } else {
                    Err(PromptError::InvalidConfig(format!(
                        "unknown ordering policy {s:?}"
                    )))
                }
            }
        }
    }
}

impl Serialize for OrderingPolicy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OrderingPolicy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reorders `demos` under `policy`. The output is always a permutation of
/// the input; grouped policies keep the within-group order of the input.
pub fn apply_ordering(
    mut demos: Vec<Demonstration>,
    policy: &OrderingPolicy,
    seed: u64,
) -> Result<Vec<Demonstration>, PromptError> {
    match policy {
        OrderingPolicy::AsRetrieved => Ok(demos),
        OrderingPolicy::Shuffled => {
            demos.shuffle(&mut seeded_rng(seed));
            Ok(demos)
        }
        OrderingPolicy::GroupedLabelFirst(label) | OrderingPolicy::GroupedLabelLast(label) => {
            let (group, rest): (Vec<_>, Vec<_>) = demos
                .into_iter()
                .partition(|d| d.label.as_str() == label.as_str());
            if group.is_empty() {
                return Err(PromptError::GroupingLabelAbsent(label.clone()));
            }
            if rest.is_empty() {
                return Err(PromptError::SingleLabelGroup(label.clone()));
            }
            Ok(if matches!(policy, OrderingPolicy::GroupedLabelFirst(_)) {
                group.into_iter().chain(rest).collect()
            } else {
                rest.into_iter().chain(group).collect()
            })
        }
    }
}

/// Inserts `needle` at a uniformly random slot among `haystack.len() + 1`,
/// keeping the haystack's relative order.
pub fn insert_needle(
    mut haystack: Vec<Demonstration>,
    needle: Demonstration,
    seed: u64,
) -> Vec<Demonstration> {
    let pos = seeded_rng(seed).random_range(0..=haystack.len());
    haystack.insert(pos, needle);
    haystack
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BinaryLabel, Sample, Source, TaskLabel};

    fn d(id: &str, label: BinaryLabel) -> Demonstration {
        Demonstration {
            index: None,
            sample: Sample::new(id, id, Source::Twitter, Some(label), None).unwrap(),
            label: TaskLabel::Binary(label),
            score: 0.0,
        }
    }

    fn ids(v: &[Demonstration]) -> Vec<&str> {
        v.iter().map(|d| d.sample.id.as_str()).collect()
    }

    #[test]
    fn grouped_last_keeps_within_group_order() {
        use BinaryLabel::*;
        let demos = vec![
            d("b1", Benign),
            d("i1", Illicit),
            d("b2", Benign),
            d("i2", Illicit),
        ];
        let out = apply_ordering(
            demos.clone(),
            &OrderingPolicy::GroupedLabelLast("illicit".into()),
            0,
        )
        .unwrap();
        assert_eq!(ids(&out), ["b1", "b2", "i1", "i2"]);
        let out = apply_ordering(
            demos,
            &OrderingPolicy::GroupedLabelFirst("illicit".into()),
            0,
        )
        .unwrap();
        assert_eq!(ids(&out), ["i1", "i2", "b1", "b2"]);
    }

    #[test]
    fn grouping_errors() {
        let demos = vec![d("b1", BinaryLabel::Benign), d("b2", BinaryLabel::Benign)];
        assert!(matches!(
            apply_ordering(
                demos.clone(),
                &OrderingPolicy::GroupedLabelLast("illicit".into()),
                0
            ),
            Err(PromptError::GroupingLabelAbsent(_))
        ));
        assert!(matches!(
            apply_ordering(demos, &OrderingPolicy::GroupedLabelLast("benign".into()), 0),
            Err(PromptError::SingleLabelGroup(_))
        ));
    }

    #[test]
    fn shuffle_is_seeded() {
        let demos: Vec<_> = (0..8)
            .map(|i| d(&format!("x{i}"), BinaryLabel::Benign))
            .collect();
        let a = apply_ordering(demos.clone(), &OrderingPolicy::Shuffled, 11).unwrap();
        let b = apply_ordering(demos, &OrderingPolicy::Shuffled, 11).unwrap();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn needle_into_empty_haystack() {
        let out = insert_needle(Vec::new(), d("n", BinaryLabel::Illicit), 5);
        assert_eq!(ids(&out), ["n"]);
    }

    #[test]
    fn needle_preserves_haystack_order() {
        let hay: Vec<_> = (0..5)
            .map(|i| d(&format!("h{i}"), BinaryLabel::Benign))
            .collect();
        let out = insert_needle(hay, d("n", BinaryLabel::Illicit), 42);
        assert_eq!(out.len(), 6);
        let rest: Vec<_> = ids(&out).into_iter().filter(|i| *i != "n").collect();
        assert_eq!(rest, ["h0", "h1", "h2", "h3", "h4"]);
        let again = insert_needle(
            (0..5)
                .map(|i| d(&format!("h{i}"), BinaryLabel::Benign))
                .collect(),
            d("n", BinaryLabel::Illicit),
            42,
        );
        assert_eq!(ids(&out), ids(&again));
    }

    #[test]
    fn policy_strings_round_trip() {
        for p in [
            OrderingPolicy::AsRetrieved,
            OrderingPolicy::Shuffled,
            OrderingPolicy::GroupedLabelFirst("benign".into()),
            OrderingPolicy::GroupedLabelLast("illicit".into()),
        ] {
            assert_eq!(p.to_string().parse::<OrderingPolicy>().unwrap(), p);
        }
        assert!("grouped_label_last()".parse::<OrderingPolicy>().is_err());
    }
}
