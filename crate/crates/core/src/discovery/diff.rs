use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_free_form, DiscoveryError, TaxonomyCluster};
use crate::corpus::{lookup_any_source, UnifiedCategory};

/// Hand-maintained mapping from normalized cluster names to known
/// categories, e.g. `{"narcotics sales": "drug"}`. Keys are normalized on
/// load.
pub type Overrides = BTreeMap<String, UnifiedCategory>;

pub fn load_overrides(path: &Path) -> Result<Overrides, DiscoveryError> {
    let err = |message: String| DiscoveryError::Overrides {
        path: path.display().to_string(),
        message,
    };
    let body = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let raw: BTreeMap<String, UnifiedCategory> =
        serde_json::from_str(&body).map_err(|e| err(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| {
            normalize_free_form(&k)
                .map(|k| (k, v))
                .ok_or_else(|| err(format!("empty key {k:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Novelty {
    Known(UnifiedCategory),
    Novel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterNovelty {
    #[serde(flatten)]
    pub cluster: TaxonomyCluster,
    pub novelty: Novelty,
    /// `override`, `name` or `summary`; absent for novel clusters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_by: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub clusters: Vec<ClusterNovelty>,
    pub known: usize,
    pub novel: usize,
}

fn match_known(
    cluster: &TaxonomyCluster,
    known: &[UnifiedCategory],
    overrides: &Overrides,
) -> Option<(UnifiedCategory, &'static str)> {
    let candidates = [(&cluster.name, "name"), (&cluster.summary, "summary")];
    for (text, field) in candidates {
        let Some(key) = normalize_free_form(text) else {
            continue;
        };
        if let Some(cat) = overrides.get(&key).filter(|c| known.contains(c)) {
            return Some((*cat, "override"));
        }
        if let Some(cat) = lookup_any_source(&key).filter(|c| known.contains(c)) {
            return Some((cat, field));
        }
    }
    None
}

/// Marks each cluster known or novel. A cluster is known when its
/// normalized name or summary equals a known category name, a native
/// platform label, or an override key. There is no fuzzy matching.
///
/// `examples` maps a normalized label to texts carrying it; up to three
/// are attached to each novel cluster.
pub fn diff_taxonomy(
    clusters: &[TaxonomyCluster],
    known: &[UnifiedCategory],
    overrides: &Overrides,
    examples: &BTreeMap<String, Vec<String>>,
) -> NoveltyReport {
    let out: Vec<ClusterNovelty> = clusters
        .iter()
        .map(|c| match match_known(c, known, overrides) {
            Some((cat, by)) => ClusterNovelty {
                cluster: c.clone(),
                novelty: Novelty::Known(cat),
                matched_by: Some(by.to_string()),
                examples: Vec::new(),
            },
            None => ClusterNovelty {
                cluster: c.clone(),
                novelty: Novelty::Novel,
                matched_by: None,
                examples: c
                    .members
                    .iter()
                    .flat_map(|m| examples.get(m).into_iter().flatten())
                    .take(3)
                    .cloned()
                    .collect(),
            },
        })
        .collect();
    let novel = out.iter().filter(|c| c.novelty == Novelty::Novel).count();
    NoveltyReport {
        known: out.len() - novel,
        novel,
        clusters: out,
    }
}

impl NoveltyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Taxonomy diff\n\n{} clusters: {} known, {} novel.\n\n",
            self.clusters.len(),
            self.known,
            self.novel
        );
        out.push_str("## Novel clusters\n\n");
        if self.novel == 0 {
            out.push_str("None.\n\n");
        }
        for c in self.clusters.iter().filter(|c| c.novelty == Novelty::Novel) {
            out.push_str(&format!(
                "### {}\n\n{}\n\n- texts: {}\n- labels: {}\n",
                c.cluster.name,
                c.cluster.summary,
                c.cluster.count,
                c.cluster.members.join(", ")
            ));
            for e in &c.examples {
                out.push_str(&format!("- example: {}\n", e.replace('\n', " ")));
            }
            out.push('\n');
        }
        out.push_str(
            "## Known clusters\n\n| Cluster | Category | Matched by | Texts |\n|---|---|---|---|\n",
        );
        for c in &self.clusters {
            if let Novelty::Known(cat) = c.novelty {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    c.cluster.name,
                    cat,
                    c.matched_by.as_deref().unwrap_or(""),
                    c.cluster.count
                ));
            }
        }
        out
    }
}
