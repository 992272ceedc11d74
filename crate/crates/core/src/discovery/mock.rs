use std::collections::BTreeMap;

use serde_json::json;

use super::normalize_free_form;
use crate::gateway::{Completer, TransportError};
use crate::prompting::parse_blocks;

/// Offline stand-in for the discovery prompts.
///
/// Consolidation prompts are answered by grouping labels on their last
/// hyphen-separated token (`fake-passport` and `forged-passport` share a
/// cluster named `passport`); merge prompts group clusters with equal
/// names. Annotation prompts get the last two words of the text.
pub struct SuffixClusterMock;

/// `- ` items following the `marker` line, up to the first blank line.
fn items<'a>(prompt: &'a str, marker: &str) -> Option<Vec<&'a str>> {
    let start = prompt.find(marker)? + marker.len();
    Some(
        prompt[start..]
            .lines()
            .take_while(|l| !l.trim().is_empty())
            .filter_map(|l| l.strip_prefix("- "))
            .collect(),
    )
}

fn answer(groups: BTreeMap<String, Vec<String>>) -> String {
    let clusters: Vec<_> = groups
        .into_iter()
        .map(|(name, members)| {
            json!({
                "name": name,
                "summary": format!("Promotions involving {}.", name.replace('-', " ")),
                "members": members,
            })
        })
        .collect();
    json!({ "clusters": clusters }).to_string()
}

impl Completer for SuffixClusterMock {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        if let Some(lines) = items(prompt, "\nLabels:\n") {
            let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for line in lines {
                let label = line.rsplit_once(" (").map_or(line, |(l, _)| l);
                let suffix = label.rsplit('-').next().unwrap_or(label);
                groups
                    .entry(suffix.to_string())
                    .or_default()
                    .push(label.to_string());
            }
            return Ok(answer(groups));
        }
        if let Some(lines) = items(prompt, "\nClusters:\n") {
            let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for line in lines {
                let Some((id, rest)) = line.split_once(": ") else {
                    continue;
                };
                let name = rest.split(" | ").next().unwrap_or(rest);
                groups
                    .entry(name.to_string())
                    .or_default()
                    .push(id.to_string());
            }
            return Ok(answer(groups));
        }
        let query = parse_blocks(prompt).map(|b| b.query).unwrap_or_default();
        let words: Vec<&str> = query.split_whitespace().collect();
        let tail = words[words.len().saturating_sub(2)..].join(" ");
        Ok(normalize_free_form(&tail).unwrap_or_else(|| "unknown".into()))
    }
}

#[cfg(test)]
mod tests {
    use crate::discovery::{consolidate_clusters, ConsolidateOptions, LabelCount};
    use crate::gateway::{EndpointKind, Gateway, ModelEndpoint};

    #[test]
    fn batches_and_merge_partition() {
        let gw = Gateway::new(ModelEndpoint::new("m", EndpointKind::MockClusterBySuffix)).unwrap();
        let labels: Vec<LabelCount> = (0..25)
            .map(|i| LabelCount {
                label: format!("item{i}-{}", ["loan", "passport", "software"][i % 3]),
                count: 25 - i,
            })
            .collect();
        let opts = ConsolidateOptions {
            batch_size: 7,
            max_repairs: 3,
        };
        let out = consolidate_clusters(&labels, &gw, &opts).unwrap();
        assert_eq!(out.clusters.len(), 3);
        assert_eq!(out.calls, 4 + 1);
        let total: usize = out.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, 25);
    }
}
