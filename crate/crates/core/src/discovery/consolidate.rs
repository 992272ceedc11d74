use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{normalize_free_form, DiscoveryError, LabelCount, TaxonomyCluster};
use crate::gateway::Gateway;

const CONSOLIDATE: &str = include_str!("../../templates/consolidate.txt");
const MERGE: &str = include_str!("../../templates/merge.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidateOptions {
    /// Labels per consolidation prompt.
    pub batch_size: usize,
    /// Re-prompts allowed per call when the answer is not a partition.
    pub max_repairs: usize,
}

impl Default for ConsolidateOptions {
    fn default() -> Self {
        ConsolidateOptions {
            batch_size: 200,
            max_repairs: 3,
        }
    }
}

/// One rejected answer and what was wrong with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEvent {
    pub stage: String,
    pub round: usize,
    pub missing: Vec<String>,
    pub duplicated: Vec<String>,
    pub unknown: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consolidation {
    pub clusters: Vec<TaxonomyCluster>,
    pub repairs: Vec<RepairEvent>,
    /// Model calls made, repairs included.
    pub calls: usize,
}

#[derive(Debug, Deserialize)]
struct RawCluster {
    name: String,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    members: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawAnswer {
    clusters: Vec<RawCluster>,
}

fn parse_answer(raw: &str) -> Result<Vec<RawCluster>, String> {
    let start = raw.find('{').ok_or("no JSON object in the answer")?;
    let end = raw.rfind('}').ok_or("no JSON object in the answer")?;
    if end < start {
        return Err("no JSON object in the answer".into());
    }
    let answer: RawAnswer = serde_json::from_str(&raw[start..=end]).map_err(|e| e.to_string())?;
    Ok(answer
        .clusters
        .into_iter()
        .map(|c| RawCluster {
            members: c
                .members
                .iter()
                .filter_map(|m| normalize_free_form(m))
                .collect(),
            ..c
        })
        .filter(|c| !c.members.is_empty())
        .collect())
}

/// Missing, duplicated and unknown members relative to `universe`.
fn violations(
    clusters: &[RawCluster],
    universe: &BTreeSet<String>,
) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for m in clusters.iter().flat_map(|c| &c.members) {
        *seen.entry(m.as_str()).or_default() += 1;
    }
    let missing = universe
        .iter()
        .filter(|u| !seen.contains_key(u.as_str()))
        .cloned()
        .collect();
    let duplicated = seen
        .iter()
        .filter(|(m, n)| **n > 1 && universe.contains(**m))
        .map(|(m, _)| m.to_string())
        .collect();
    let unknown = seen
        .keys()
        .filter(|m| !universe.contains(**m))
        .map(|m| m.to_string())
        .collect();
    (missing, duplicated, unknown)
}

fn problems(event: &RepairEvent) -> String {
    let mut out = String::new();
    if let Some(e) = &event.invalid {
        out.push_str(&format!(
            "- the answer is not valid JSON of the requested form ({e})\n"
        ));
    }
    for (what, items) in [
        ("missing from every group", &event.missing),
        ("placed in more than one group", &event.duplicated),
        ("not in the list", &event.unknown),
    ] {
        if !items.is_empty() {
            out.push_str(&format!("- {what}: {}\n", items.join(", ")));
        }
    }
    out
}

struct Session<'a> {
    gateway: &'a Gateway,
    options: ConsolidateOptions,
    repairs: Vec<RepairEvent>,
    calls: usize,
}

impl Session<'_> {
    /// Asks for a grouping of `universe` and re-prompts with the listed
    /// violations until the answer is a partition or the budget runs out.
    fn grouping(
        &mut self,
        stage: &str,
        base: &str,
        universe: &BTreeSet<String>,
    ) -> Result<Vec<RawCluster>, DiscoveryError> {
        let mut prompt = base.to_string();
        for round in 0..=self.options.max_repairs {
            self.calls += 1;
            let raw = self
                .gateway
                .complete(&prompt)
                .raw
                .map_err(|e| DiscoveryError::Transport(e.0))?;
            let event = match parse_answer(&raw) {
                Ok(clusters) => {
                    let (missing, duplicated, unknown) = violations(&clusters, universe);
                    if missing.is_empty() && duplicated.is_empty() && unknown.is_empty() {
                        return Ok(clusters);
                    }
                    RepairEvent {
                        stage: stage.to_string(),
                        round,
                        missing,
                        duplicated,
                        unknown,
                        invalid: None,
                    }
                }
                Err(e) => RepairEvent {
                    stage: stage.to_string(),
                    round,
                    missing: universe.iter().cloned().collect(),
                    duplicated: Vec::new(),
                    unknown: Vec::new(),
                    invalid: Some(e),
                },
            };
            log::info!("{stage}: answer rejected in round {round}");
            prompt = format!(
                "{base}\nYour previous answer was:\n{raw}\n\nIt has these problems:\n{}\nReply with the corrected JSON covering the whole list.\n",
                problems(&event)
            );
            self.repairs.push(event);
        }
        let last = self.repairs.last().expect("at least one rejected answer");
        Err(DiscoveryError::Partition {
            rounds: self.options.max_repairs,
            missing: last.missing.clone(),
            duplicated: last.duplicated.clone(),
            unknown: last.unknown.clone(),
        })
    }
}

/// Groups free-form labels into clusters that partition them.
///
/// Labels go to the model in batches of `batch_size` (with counts). When
/// there is more than one batch, a final call merges the per-batch clusters
/// by id. A single label becomes a single cluster without a model call.
pub fn consolidate_clusters(
    labels: &[LabelCount],
    gateway: &Gateway,
    options: &ConsolidateOptions,
) -> Result<Consolidation, DiscoveryError> {
    if labels.is_empty() {
        return Err(DiscoveryError::Empty("labels"));
    }
    let counts: BTreeMap<&str, usize> =
        labels.iter().map(|l| (l.label.as_str(), l.count)).collect();
    let finish = |groups: Vec<(String, String, BTreeSet<String>)>| {
        let mut clusters: Vec<TaxonomyCluster> = groups
            .into_iter()
            .map(|(name, summary, members)| TaxonomyCluster {
                count: members
                    .iter()
                    .map(|m| counts.get(m.as_str()).copied().unwrap_or(0))
                    .sum(),
                name,
                summary,
                members: members.into_iter().collect(),
            })
            .collect();
        clusters.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
        clusters
    };
    if let [only] = labels {
        return Ok(Consolidation {
            clusters: finish(vec![(
                only.label.clone(),
                format!("Texts labeled {}.", only.label),
                BTreeSet::from([only.label.clone()]),
            )]),
            repairs: Vec::new(),
            calls: 0,
        });
    }

    let mut session = Session {
        gateway,
        options: *options,
        repairs: Vec::new(),
        calls: 0,
    };
    let mut partial: Vec<(String, String, BTreeSet<String>)> = Vec::new();
    for (b, batch) in labels.chunks(options.batch_size.max(1)).enumerate() {
        let items: String = batch
            .iter()
            .map(|l| format!("- {} ({})\n", l.label, l.count))
            .collect();
        let universe: BTreeSet<String> = batch.iter().map(|l| l.label.clone()).collect();
        let prompt = CONSOLIDATE.replace("{{items}}", &items);
        for c in session.grouping(&format!("batch {b}"), &prompt, &universe)? {
            partial.push((c.name, c.summary, c.members.into_iter().collect()));
        }
    }
    let groups = if labels.len() <= options.batch_size.max(1) {
        partial
    } else {
        let items: String = partial
            .iter()
            .enumerate()
            .map(|(i, (name, summary, members))| {
                format!("- c{i}: {name} | {summary} ({} labels)\n", members.len())
            })
            .collect();
        let universe: BTreeSet<String> = (0..partial.len()).map(|i| format!("c{i}")).collect();
        let prompt = MERGE.replace("{{items}}", &items);
        session
            .grouping("merge", &prompt, &universe)?
            .into_iter()
            .map(|c| {
                let members = c
                    .members
                    .iter()
                    .filter_map(|id| id.strip_prefix('c').and_then(|n| n.parse::<usize>().ok()))
                    .flat_map(|i| partial[i].2.iter().cloned())
                    .collect();
                (c.name, c.summary, members)
            })
            .collect()
    };
    Ok(Consolidation {
        clusters: finish(groups),
        repairs: session.repairs,
        calls: session.calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{mock::Scripted, EndpointKind, ModelEndpoint};

    fn labels(names: &[&str]) -> Vec<LabelCount> {
        names
            .iter()
            .map(|n| LabelCount {
                label: n.to_string(),
                count: 1,
            })
            .collect()
    }

    fn scripted(answers: &[&str]) -> Gateway {
        let answers: Vec<String> = answers.iter().map(|s| s.to_string()).collect();
        Gateway::with_backend(
            ModelEndpoint::new(
                "s",
                EndpointKind::MockScripted {
                    responses: answers.clone(),
                },
            ),
            Box::new(Scripted::new(answers)),
        )
        .unwrap()
    }

    const FIVE: [&str; 5] = [
        "usury",
        "loan-shark",
        "visa-fraud",
        "illegal-immigration",
        "fake-passport",
    ];

    #[test]
    fn valid_grouping_accepted() {
        let gw = scripted(&[r#"{"clusters":[
            {"name":"usury","summary":"Illegal lending.","members":["usury","loan-shark"]},
            {"name":"illegal immigration","summary":"Border crossing services.","members":["visa-fraud","illegal-immigration","fake-passport"]}]}"#]);
        let out =
            consolidate_clusters(&labels(&FIVE), &gw, &ConsolidateOptions::default()).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert_eq!(out.calls, 1);
        assert!(out.repairs.is_empty());
    }

    #[test]
    fn omission_triggers_one_repair() {
        let gw = scripted(&[
            r#"{"clusters":[{"name":"usury","summary":"s","members":["usury","loan-shark"]},
                {"name":"migration","summary":"s","members":["visa-fraud","illegal-immigration"]}]}"#,
            r#"{"clusters":[{"name":"usury","summary":"s","members":["usury","loan-shark"]},
                {"name":"migration","summary":"s","members":["visa-fraud","illegal-immigration","fake-passport"]}]}"#,
        ]);
        let out =
            consolidate_clusters(&labels(&FIVE), &gw, &ConsolidateOptions::default()).unwrap();
        assert_eq!(out.calls, 2);
        assert_eq!(out.repairs.len(), 1);
        assert_eq!(out.repairs[0].missing, vec!["fake-passport".to_string()]);
    }

    #[test]
    fn budget_exhaustion_fails_with_residue() {
        let gw =
            scripted(&[r#"{"clusters":[{"name":"a","summary":"s","members":["usury","usury"]}]}"#]);
        let err =
            consolidate_clusters(&labels(&FIVE), &gw, &ConsolidateOptions::default()).unwrap_err();
        match err {
            DiscoveryError::Partition {
                missing,
                duplicated,
                ..
            } => {
                assert_eq!(missing.len(), 4);
                assert_eq!(duplicated, vec!["usury".to_string()]);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn garbage_answer_is_repaired() {
        let gw = scripted(&[
            "I think these are all crimes.",
            r#"Sure: {"clusters":[{"name":"x","summary":"s","members":["usury","loan-shark","visa-fraud","illegal-immigration","fake-passport"]}]}"#,
        ]);
        let out =
            consolidate_clusters(&labels(&FIVE), &gw, &ConsolidateOptions::default()).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert!(out.repairs[0].invalid.is_some());
    }

    #[test]
    fn single_label_short_circuits() {
        let gw = scripted(&[]);
        let out =
            consolidate_clusters(&labels(&["usury"]), &gw, &ConsolidateOptions::default()).unwrap();
        assert_eq!(out.clusters[0].members, vec!["usury".to_string()]);
        assert_eq!(out.calls, 0);
    }

    #[test]
    fn empty_input_errors() {
        let gw = scripted(&[]);
        assert!(consolidate_clusters(&[], &gw, &ConsolidateOptions::default()).is_err());
    }
}
