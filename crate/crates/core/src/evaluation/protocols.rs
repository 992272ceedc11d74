use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    aggregate_seeds, compute_metrics, default_positive, mean_std, EvalError, EvalReport,
    MetricName, PredictionRecord, Provenance, Run, SeedMetrics, REPORT_SCHEMA_VERSION,
};
use crate::corpus::{BinaryLabel, DatasetSplit, Sample, Task, TaskLabel, UnifiedCategory};
use crate::digest::{derive_seed, seeded_rng, sha256_hex};
use crate::gateway::Gateway;
use crate::prompting::{
    apply_ordering, insert_needle, render_with_template, OrderingPolicy, PromptConfig,
    PromptTemplate,
};
use crate::retrieval::{
    score_bm25, select_random, select_semantic, Demonstration, DemonstrationPool, Embedder,
    Strategy,
};

pub const DEFAULT_SHOTS: [usize; 8] = [0, 2, 4, 8, 16, 32, 64, 128];
pub const DEFAULT_NEEDLE_SIZES: [usize; 7] = [2, 4, 8, 16, 32, 64, 128];
pub const DEFAULT_ORDER_SHOTS: [usize; 5] = [4, 8, 16, 32, 64];

// Sub-stream tags for per-query seeds.
const SELECT: u64 = 0;
const ORDER: u64 = 1;
const NEEDLE: u64 = 2;
const PERMUTE: u64 = 3;

/// Runs protocols against one gateway.
pub struct Evaluator<'a> {
    gateway: &'a Gateway,
    embedder: Option<&'a Embedder>,
    template: Option<PromptTemplate>,
}

/// Demonstrations for one query plus any selection flags.
pub type Selected = (Vec<Demonstration>, Vec<String>);

/// A demonstration pool plus query embeddings, selecting demonstrations
/// the same way for every protocol.
pub struct Retriever {
    pool: DemonstrationPool,
    query_vecs: Option<Vec<Vec<f64>>>,
}

impl Retriever {
    pub fn pool(&self) -> &DemonstrationPool {
        &self.pool
    }

    /// Picks `k` demonstrations for query `qi` under `config`, then applies
    /// the needle and ordering settings.
    pub fn demos(
        &self,
        config: &PromptConfig,
        seed: u64,
        qi: usize,
        query: &Sample,
    ) -> Result<Selected, EvalError> {
        let k = config.k;
        if k == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let draw = if config.needle { k - 1 } else { k };
        let (mut demos, flags) = self.select(config, draw, seed, qi, query)?;
        demos = apply_ordering(
            demos,
            &config.ordering,
            derive_seed(seed, &[qi as u64, ORDER]),
        )?;
        if config.needle {
            demos = insert_needle(
                demos,
                needle(query, config.task)?,
                derive_seed(seed, &[qi as u64, NEEDLE]),
            );
        }
        Ok((demos, flags))
    }

    fn select(
        &self,
        config: &PromptConfig,
        k: usize,
        seed: u64,
        qi: usize,
        query: &Sample,
    ) -> Result<Selected, EvalError> {
        let picked = match config.strategy {
            Strategy::Random => {
                let quota = if config.needle { None } else { config.quota()? };
                select_random(
                    &self.pool,
                    k,
                    derive_seed(seed, &[qi as u64, SELECT]),
                    quota.as_deref(),
                )?
            }
            Strategy::Lexical => score_bm25(&query.text, &self.pool, k)?,
            Strategy::Semantic => {
                let vecs = self.query_vecs.as_ref().ok_or(EvalError::MissingEmbedder)?;
                select_semantic(&vecs[qi], &self.pool, k)?
            }
        };
        let flags = picked
            .flags
            .iter()
            .map(|f| format!("query {}: {f}", query.id))
            .collect();
        Ok((picked.demonstrations, flags))
    }
}

fn needle(query: &Sample, task: Task) -> Result<Demonstration, EvalError> {
    Ok(Demonstration {
        index: None,
        label: query
            .gold(task)
            .ok_or_else(|| EvalError::MissingGold(query.id.clone()))?,
        sample: query.clone(),
        score: 0.0,
    })
}

fn grid(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn jsonl_hash(parts: &[&[Sample]]) -> String {
    let mut buf = String::new();
    for part in parts {
        for s in *part {
            buf.push_str(&serde_json::to_string(s).expect("sample serializes"));
            buf.push('\n');
        }
        buf.push_str("--\n");
    }
    sha256_hex(buf)
}

/// Result of a shot sweep: one run per requested shot count.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub sweep_id: String,
    pub runs: Vec<Run>,
}

/// F1 spread across demonstration orders for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationStats {
    pub seed: u64,
    pub f1: Vec<f64>,
    pub f1_std: f64,
}

#[derive(Debug, Clone)]
pub struct OrderPerturbationReport {
    pub k: usize,
    /// One run per permutation.
    pub runs: Vec<Run>,
    pub per_seed: Vec<PermutationStats>,
    /// Mean over seeds of the per-seed F1 standard deviation.
    pub f1_std: f64,
}

#[derive(Debug, Clone)]
pub struct LabelPositionReport {
    pub runs: Vec<(OrderingPolicy, Run)>,
}

#[derive(Debug, Clone)]
pub struct NeedleReport {
    pub runs: Vec<Run>,
    /// Mean accuracy over seeds per haystack size.
    pub accuracy: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnseenOptions {
    pub k: usize,
    /// Target-category demonstrations swapped in for the included setting.
    pub target_demos: usize,
}

impl Default for UnseenOptions {
    fn default() -> Self {
        UnseenOptions {
            k: 64,
            target_demos: 4,
        }
    }
}

/// The three settings of the unseen-category probe.
#[derive(Debug, Clone)]
pub struct UnseenCategoryReport {
    pub category: UnifiedCategory,
    pub options: UnseenOptions,
    pub zero_shot: Run,
    pub excluded: Run,
    pub included: Run,
    /// Rendered excluded-setting prompts that contain a target sample.
    pub excluded_leaks: usize,
}

impl UnseenCategoryReport {
    pub fn accuracy(&self, setting: &str) -> f64 {
        let run = match setting {
            "zero_shot" => &self.zero_shot,
            "excluded" => &self.excluded,
            _ => &self.included,
        };
        run.report.mean(MetricName::Accuracy)
    }

    pub fn gain(&self) -> f64 {
        unseen_gain(self.accuracy("excluded"), self.accuracy("zero_shot"))
    }

    pub fn gap(&self) -> f64 {
        unseen_gap(self.accuracy("excluded"), self.accuracy("included"))
    }

    pub fn summary_json(&self) -> String {
        let v = json!({
            "category": self.category,
            "k": self.options.k,
            "target_demos": self.options.target_demos,
            "accuracy": {
                "zero_shot": self.accuracy("zero_shot"),
                "excluded": self.accuracy("excluded"),
                "included": self.accuracy("included"),
            },
            "gain_over_zero_shot": self.gain(),
            "gap_vs_included": self.gap(),
            "excluded_leaks": self.excluded_leaks,
        });
        serde_json::to_string_pretty(&v).expect("summary serializes") + "\n"
    }
}

/// Improvement of the excluded setting over zero-shot.
pub fn unseen_gain(excluded: f64, zero_shot: f64) -> f64 {
    excluded - zero_shot
}

/// Shortfall of the excluded setting against the included one.
pub fn unseen_gap(excluded: f64, included: f64) -> f64 {
    excluded - included
}

impl<'a> Evaluator<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        Evaluator {
            gateway,
            embedder: None,
            template: None,
        }
    }

    pub fn with_embedder(mut self, embedder: &'a Embedder) -> Self {
        self.embedder = Some(embedder);
        self
    }

    /// Replaces the bundled header for the template's task.
    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = Some(template);
        self
    }

    fn template(&self, task: Task) -> PromptTemplate {
        match &self.template {
            Some(t) if t.task == task => t.clone(),
            _ => PromptTemplate::builtin(task),
        }
    }

    fn provenance(&self, dataset_hash: &str, task: Task) -> Provenance {
        let ep = self.gateway.endpoint();
        Provenance {
            dataset_hash: dataset_hash.to_string(),
            endpoint: ep.name.clone(),
            endpoint_identity: self.gateway.identity().to_string(),
            template_hash: sha256_hex(&self.template(task).header),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Pool over `train`; with semantic selection, also embeds the pool and
    /// `queries` (in order, so query `qi` uses vector `qi`).
    pub fn retriever(
        &self,
        train: &[Sample],
        queries: &[Sample],
        config: &PromptConfig,
    ) -> Result<Retriever, EvalError> {
        let mut pool = DemonstrationPool::new(train.to_vec(), config.task)?;
        let mut query_vecs = None;
        if config.strategy == Strategy::Semantic && config.k > 0 {
            let embedder = self.embedder.ok_or(EvalError::MissingEmbedder)?;
            pool = pool.embed_with(embedder)?;
            let texts: Vec<&str> = queries.iter().map(|q| q.text.as_str()).collect();
            query_vecs = Some(embedder.embed_texts(&texts)?);
        }
        Ok(Retriever { pool, query_vecs })
    }

    /// Renders, completes and scores every query under every seed.
    #[allow(clippy::too_many_arguments)]
    fn evaluate<F>(
        &self,
        protocol: &str,
        grid: BTreeMap<String, Value>,
        config: &PromptConfig,
        seeds: &[u64],
        queries: &[Sample],
        dataset_hash: &str,
        mut flags: Vec<String>,
        demos_for: F,
    ) -> Result<Run, EvalError>
    where
        F: Fn(u64, usize, &Sample) -> Result<Selected, EvalError> + Sync,
    {
        if seeds.is_empty() {
            return Err(EvalError::Empty("seeds"));
        }
        if queries.is_empty() {
            return Err(EvalError::Empty("queries"));
        }
        let task = config.task;
        let golds = queries
            .iter()
            .map(|q| {
                q.gold(task)
                    .ok_or_else(|| EvalError::MissingGold(q.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let template = self.template(task);
        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut records = Vec::with_capacity(seeds.len() * queries.len());
        let mut seen_flags = BTreeSet::new();
        for &seed in seeds {
            let rendered = queries
                .par_iter()
                .enumerate()
                .map(|(qi, q)| {
                    let (demos, f) = demos_for(seed, qi, q)?;
                    let cfg = PromptConfig {
                        k: demos.len(),
                        ..config.clone()
                    };
                    Ok((render_with_template(&template, &cfg, &demos, &q.text)?, f))
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            let (prompts, selection_flags): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
            seen_flags.extend(selection_flags.into_iter().flatten());
            let predictions = self.gateway.classify_batch(&prompts);
            let pairs: Vec<(TaskLabel, Option<TaskLabel>)> = golds
                .iter()
                .zip(&predictions)
                .map(|(g, p)| (*g, p.label))
                .collect();
            let metrics = compute_metrics(&pairs, default_positive(task))?;
            seen_flags.extend(metrics.flags.iter().map(|f| format!("seed {seed}: {f}")));
            per_seed.push(SeedMetrics { seed, metrics });
            for ((q, (gold, prompt)), prediction) in queries
                .iter()
                .zip(golds.iter().zip(prompts))
                .zip(predictions)
            {
                records.push(PredictionRecord {
                    seed,
                    query_id: q.id.clone(),
                    gold: gold.to_string(),
                    predicted: prediction.label.map(|l| l.to_string()),
                    manifest: prompt.manifest,
                    prediction,
                });
            }
        }
        let metrics: Vec<_> = per_seed.iter().map(|s| s.metrics.clone()).collect();
        let summary = aggregate_seeds(&metrics)?;
        flags.extend(seen_flags);
        Ok(Run {
            report: EvalReport {
                schema_version: REPORT_SCHEMA_VERSION,
                protocol: protocol.to_string(),
                grid,
                config: config.clone(),
                seeds: seeds.to_vec(),
                per_seed,
                summary,
                provenance: self.provenance(dataset_hash, task),
                flags,
            },
            predictions: records,
        })
    }

    /// Select, order, render, complete, parse and score the test split
    /// against demonstrations drawn from the train split.
    pub fn run_classification(
        &self,
        dataset: &DatasetSplit,
        config: &PromptConfig,
        seeds: &[u64],
    ) -> Result<Run, EvalError> {
        config.validate()?;
        let retriever = self.retriever(&dataset.train, &dataset.test, config)?;
        self.evaluate(
            "classification",
            grid(&[("k", json!(config.k))]),
            config,
            seeds,
            &dataset.test,
            &dataset.content_hash(),
            Vec::new(),
            |seed, qi, q| retriever.demos(config, seed, qi, q),
        )
    }

    /// One classification run per shot count. Shot counts above the pool
    /// size run with the whole pool and are flagged.
    pub fn run_shot_sweep(
        &self,
        dataset: &DatasetSplit,
        base: &PromptConfig,
        shots: &[usize],
        seeds: &[u64],
    ) -> Result<SweepResult, EvalError> {
        if shots.is_empty() {
            return Err(EvalError::Empty("shot counts"));
        }
        base.validate()?;
        let max_cfg = base.with_k(shots.iter().copied().max().unwrap_or(0));
        let retriever = self.retriever(&dataset.train, &dataset.test, &max_cfg)?;
        let dataset_hash = dataset.content_hash();
        let sweep_id = sha256_hex(
            json!({
                "dataset": dataset_hash,
                "config": base,
                "shots": shots,
                "seeds": seeds,
                "endpoint": self.gateway.identity(),
            })
            .to_string(),
        )[..12]
            .to_string();
        let pool_len = retriever.pool.len();
        let mut runs = Vec::with_capacity(shots.len());
        for &shot in shots {
            let mut flags = Vec::new();
            let k = if shot > pool_len {
                flags.push(format!(
                    "shot {shot} exceeds pool of {pool_len}; ran with {pool_len}"
                ));
                pool_len
            } else {
                shot
            };
            let config = base.with_k(k);
            config.validate()?;
            let run = self.evaluate(
                "shot_sweep",
                grid(&[("shots", json!(shot)), ("sweep", json!(sweep_id))]),
                &config,
                seeds,
                &dataset.test,
                &dataset_hash,
                flags,
                |seed, qi, q| retriever.demos(&config, seed, qi, q),
            )?;
            runs.push(run);
        }
        Ok(SweepResult { sweep_id, runs })
    }

    /// Holds each query's demonstration set fixed and reshuffles its order
    /// `permutations` times.
    pub fn run_order_perturbation(
        &self,
        dataset: &DatasetSplit,
        config: &PromptConfig,
        permutations: usize,
        seeds: &[u64],
    ) -> Result<OrderPerturbationReport, EvalError> {
        if config.k < 2 {
            return Err(EvalError::Precondition {
                protocol: "order perturbation",
                requirement: format!("k >= 2 (got {})", config.k),
            });
        }
        if permutations == 0 {
            return Err(EvalError::Empty("permutations"));
        }
        config.validate()?;
        let base = PromptConfig {
            ordering: OrderingPolicy::AsRetrieved,
            ..config.clone()
        };
        let retriever = self.retriever(&dataset.train, &dataset.test, &base)?;
        let dataset_hash = dataset.content_hash();
        let mut runs = Vec::with_capacity(permutations);
        for p in 0..permutations {
            let shuffled = PromptConfig {
                ordering: OrderingPolicy::Shuffled,
                ..base.clone()
            };
            let run = self.evaluate(
                "order_perturbation",
                grid(&[("k", json!(config.k)), ("permutation", json!(p))]),
                &shuffled,
                seeds,
                &dataset.test,
                &dataset_hash,
                Vec::new(),
                |seed, qi, q| {
                    let (demos, flags) = retriever.demos(&base, seed, qi, q)?;
                    let order_seed = derive_seed(seed, &[qi as u64, PERMUTE, p as u64]);
                    Ok((
                        apply_ordering(demos, &OrderingPolicy::Shuffled, order_seed)?,
                        flags,
                    ))
                },
            )?;
            runs.push(run);
        }
        let mut per_seed = Vec::with_capacity(seeds.len());
        for (si, &seed) in seeds.iter().enumerate() {
            let f1: Vec<f64> = runs
                .iter()
                .map(|r| r.report.per_seed[si].metrics.f1)
                .collect();
            let (_, f1_std) = mean_std(&f1)?;
            per_seed.push(PermutationStats { seed, f1, f1_std });
        }
        let stds: Vec<f64> = per_seed.iter().map(|s| s.f1_std).collect();
        let (f1_std, _) = mean_std(&stds)?;
        Ok(OrderPerturbationReport {
            k: config.k,
            runs,
            per_seed,
            f1_std,
        })
    }

    /// Evaluates the same demonstration sets under each placement. Without
    /// an explicit balance, selection is split evenly between the labels so
    /// both groups exist.
    pub fn run_label_position(
        &self,
        dataset: &DatasetSplit,
        config: &PromptConfig,
        placements: &[OrderingPolicy],
        seeds: &[u64],
    ) -> Result<LabelPositionReport, EvalError> {
        if config.task != Task::Binary {
            return Err(EvalError::Precondition {
                protocol: "label position",
                requirement: "the binary task".into(),
            });
        }
        if placements.is_empty() {
            return Err(EvalError::Empty("placements"));
        }
        let mut base = PromptConfig {
            ordering: OrderingPolicy::AsRetrieved,
            ..config.clone()
        };
        if base.balance.is_none() && base.strategy == Strategy::Random && !base.needle {
            base.balance = Some(BTreeMap::from([
                ("benign".to_string(), base.k / 2),
                ("illicit".to_string(), base.k - base.k / 2),
            ]));
        }
        base.validate()?;
        let retriever = self.retriever(&dataset.train, &dataset.test, &base)?;
        let dataset_hash = dataset.content_hash();
        let mut runs = Vec::with_capacity(placements.len());
        for placement in placements {
            let cfg = PromptConfig {
                ordering: placement.clone(),
                ..base.clone()
            };
            cfg.validate()?;
            let run = self.evaluate(
                "label_position",
                grid(&[
                    ("k", json!(cfg.k)),
                    ("placement", json!(placement.to_string())),
                ]),
                &cfg,
                seeds,
                &dataset.test,
                &dataset_hash,
                Vec::new(),
                |seed, qi, q| {
                    let (demos, flags) = retriever.demos(&base, seed, qi, q)?;
                    let order_seed = derive_seed(seed, &[qi as u64, ORDER]);
                    Ok((apply_ordering(demos, placement, order_seed)?, flags))
                },
            )?;
            runs.push((placement.clone(), run));
        }
        Ok(LabelPositionReport { runs })
    }

    /// For each size n, n − 1 random haystack demonstrations plus an exact
    /// copy of the query at a uniformly random position.
    pub fn run_needle_haystack(
        &self,
        queries: &[Sample],
        haystack: &[Sample],
        sizes: &[usize],
        base: &PromptConfig,
        seeds: &[u64],
    ) -> Result<NeedleReport, EvalError> {
        if sizes.is_empty() {
            return Err(EvalError::Empty("haystack sizes"));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n == 0) {
            return Err(EvalError::Precondition {
                protocol: "needle in a haystack",
                requirement: format!("sizes >= 1 (got {n})"),
            });
        }
        let query_texts: HashSet<&str> = queries.iter().map(|q| q.text.as_str()).collect();
        if let Some(s) = haystack
            .iter()
            .find(|s| query_texts.contains(s.text.as_str()))
        {
            return Err(EvalError::HaystackOverlap(s.id.clone()));
        }
        let max_n = *sizes.iter().max().expect("nonempty");
        if haystack.len() < max_n - 1 {
            return Err(EvalError::HaystackTooSmall {
                n: max_n,
                needed: max_n - 1,
                available: haystack.len(),
            });
        }
        let pool = DemonstrationPool::new(haystack.to_vec(), base.task)?;
        let dataset_hash = jsonl_hash(&[queries, haystack]);
        let mut runs = Vec::with_capacity(sizes.len());
        let mut accuracy = BTreeMap::new();
        for &n in sizes {
            let cfg = PromptConfig {
                k: n,
                strategy: Strategy::Random,
                ordering: OrderingPolicy::AsRetrieved,
                needle: true,
                balance: None,
                ..base.clone()
            };
            cfg.validate()?;
            let run = self.evaluate(
                "needle_haystack",
                grid(&[("n", json!(n))]),
                &cfg,
                seeds,
                queries,
                &dataset_hash,
                Vec::new(),
                |seed, qi, q| {
                    let sel_seed = derive_seed(seed, &[n as u64, qi as u64, SELECT]);
                    let hay = select_random(&pool, n - 1, sel_seed, None)?.demonstrations;
                    let needle_seed = derive_seed(seed, &[n as u64, qi as u64, NEEDLE]);
                    Ok((
                        insert_needle(hay, needle(q, cfg.task)?, needle_seed),
                        Vec::new(),
                    ))
                },
            )?;
            accuracy.insert(n, run.report.mean(MetricName::Accuracy));
            runs.push(run);
        }
        Ok(NeedleReport { runs, accuracy })
    }

    /// Zero-shot, excluded and included settings for one held-out category.
    ///
    /// Excluded prompts hold `k/2` benign and `k/2` illicit demonstrations
    /// from the other categories. Included prompts swap `target_demos` of
    /// those illicit demonstrations for target-category ones. When the
    /// target is benign, every excluded demonstration is illicit and the
    /// swap brings in benign ones.
    pub fn run_unseen_category(
        &self,
        dataset: &DatasetSplit,
        category: UnifiedCategory,
        options: UnseenOptions,
        seeds: &[u64],
    ) -> Result<UnseenCategoryReport, EvalError> {
        const PROTOCOL: &str = "unseen category";
        let queries: Vec<Sample> = dataset
            .test
            .iter()
            .filter(|s| s.effective_category() == Some(category))
            .cloned()
            .collect();
        if queries.is_empty() {
            return Err(EvalError::Precondition {
                protocol: PROTOCOL,
                requirement: format!("test samples of category {category}"),
            });
        }
        let indexed = |keep: &dyn Fn(&Sample) -> bool| -> Vec<usize> {
            (0..dataset.train.len())
                .filter(|&i| keep(&dataset.train[i]))
                .collect()
        };
        let target = indexed(&|s| s.effective_category() == Some(category));
        if target.is_empty() {
            return Err(EvalError::CategoryAbsent(category.to_string()));
        }
        let others = indexed(&|s| {
            s.category
                .is_some_and(|c| c.binary_label() == BinaryLabel::Illicit && c != category)
        });
        let other_categories: BTreeSet<_> = others
            .iter()
            .filter_map(|&i| dataset.train[i].category)
            .collect();
        if other_categories.len() < 2 {
            return Err(EvalError::Precondition {
                protocol: PROTOCOL,
                requirement: "illicit demonstrations from at least two other categories".into(),
            });
        }
        let benign = if category.binary_label() == BinaryLabel::Illicit {
            indexed(&|s| s.binary_label == Some(BinaryLabel::Benign))
        } else {
            Vec::new()
        };
        let k = options.k;
        let n_benign = if category.binary_label() == BinaryLabel::Illicit {
            k / 2
        } else {
            0
        };
        let n_other = k - n_benign;
        let t = options.target_demos;
        if t > n_other {
            return Err(EvalError::Precondition {
                protocol: PROTOCOL,
                requirement: format!("target_demos <= {n_other}"),
            });
        }
        for (group, need, what) in [
            (&benign, n_benign, "benign"),
            (&others, n_other, "other-category illicit"),
            (&target, t, "target-category"),
        ] {
            if group.len() < need {
                return Err(EvalError::Precondition {
                    protocol: PROTOCOL,
                    requirement: format!(
                        "{need} {what} demonstrations in the pool (have {})",
                        group.len()
                    ),
                });
            }
        }

        let to_demo = |i: usize| -> Result<Demonstration, EvalError> {
            let s = &dataset.train[i];
            Ok(Demonstration {
                index: Some(i),
                label: s
                    .gold(Task::Binary)
                    .ok_or_else(|| EvalError::MissingGold(s.id.clone()))?,
                sample: s.clone(),
                score: 0.0,
            })
        };
        let draw = |group: &[usize], n: usize, seed: u64| -> Vec<usize> {
            let mut g = group.to_vec();
            g.shuffle(&mut seeded_rng(seed));
            g.truncate(n);
            g
        };
        let compose = |seed: u64, qi: usize, include: bool| -> Result<Selected, EvalError> {
            let q = qi as u64;
            let mut idx = draw(&benign, n_benign, derive_seed(seed, &[q, SELECT, 0]));
            let mut illicit = draw(&others, n_other, derive_seed(seed, &[q, SELECT, 1]));
            if include {
                illicit.truncate(n_other - t);
                illicit.extend(draw(&target, t, derive_seed(seed, &[q, SELECT, 2])));
            }
            idx.extend(illicit);
            idx.shuffle(&mut seeded_rng(derive_seed(seed, &[q, ORDER])));
            Ok((
                idx.into_iter().map(to_demo).collect::<Result<_, _>>()?,
                Vec::new(),
            ))
        };

        let dataset_hash = dataset.content_hash();
        let setting = |name: &str, k: usize| {
            (
                grid(&[("category", json!(category)), ("setting", json!(name))]),
                PromptConfig::new(Task::Binary, k),
            )
        };
        let (g, cfg) = setting("zero_shot", 0);
        let zero_shot = self.evaluate(
            "unseen_category",
            g,
            &cfg,
            seeds,
            &queries,
            &dataset_hash,
            Vec::new(),
            |_, _, _| Ok((Vec::new(), Vec::new())),
        )?;
        let (g, cfg) = setting("excluded", k);
        let excluded = self.evaluate(
            "unseen_category",
            g,
            &cfg,
            seeds,
            &queries,
            &dataset_hash,
            Vec::new(),
            |seed, qi, _| compose(seed, qi, false),
        )?;
        let (g, cfg) = setting("included", k);
        let included = self.evaluate(
            "unseen_category",
            g,
            &cfg,
            seeds,
            &queries,
            &dataset_hash,
            Vec::new(),
            |seed, qi, _| compose(seed, qi, true),
        )?;
        let target_ids: HashSet<&str> = target
            .iter()
            .map(|&i| dataset.train[i].id.as_str())
            .collect();
        let excluded_leaks = excluded
            .predictions
            .iter()
            .filter(|r| {
                r.manifest
                    .iter()
                    .any(|m| target_ids.contains(m.id.as_str()))
            })
            .count();
        Ok(UnseenCategoryReport {
            category,
            options,
            zero_shot,
            excluded,
            included,
            excluded_leaks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_binary_dataset, Source, SplitRatio};
    use crate::gateway::{EndpointKind, ModelEndpoint};

    fn corpus() -> Vec<Sample> {
        let mut v = Vec::new();
        for src in [Source::Twitter, Source::SearchEngine] {
            for i in 0..20 {
                v.push(
                    Sample::new(
                        format!("b-{src}-{i}"),
                        format!("benign {src} {i}"),
                        src,
                        Some(BinaryLabel::Benign),
                        None,
                    )
                    .unwrap(),
                );
                v.push(
                    Sample::new(
                        format!("i-{src}-{i}"),
                        format!("illicit {src} {i}"),
                        src,
                        None,
                        Some(UnifiedCategory::ALL[i % 12]),
                    )
                    .unwrap(),
                );
            }
        }
        v
    }

    fn dataset() -> DatasetSplit {
        build_binary_dataset(&corpus(), 40, SplitRatio::FOUR_TO_ONE, 7).unwrap()
    }

    fn gateway(kind: EndpointKind) -> Gateway {
        Gateway::new(ModelEndpoint::new("m", kind)).unwrap()
    }

    #[test]
    fn constant_illicit_scores() {
        let gw = gateway(EndpointKind::MockConstant {
            label: "illicit".into(),
        });
        let run = Evaluator::new(&gw)
            .run_classification(&dataset(), &PromptConfig::new(Task::Binary, 4), &[1, 2])
            .unwrap();
        assert_eq!(run.report.mean(MetricName::Recall), 1.0);
        assert_eq!(run.report.mean(MetricName::Fpr), 1.0);
        assert_eq!(run.report.mean(MetricName::Accuracy), 0.5);
    }

    #[test]
    fn zero_shot_has_empty_manifests() {
        let gw = gateway(EndpointKind::MockMajority);
        let run = Evaluator::new(&gw)
            .run_classification(&dataset(), &PromptConfig::new(Task::Binary, 0), &[1])
            .unwrap();
        assert!(run.predictions.iter().all(|r| r.manifest.is_empty()));
        assert!(run
            .report
            .summary
            .flags
            .iter()
            .any(|f| f.starts_with("single_seed")));
    }

    #[test]
    fn sweep_clamps_and_flags() {
        let gw = gateway(EndpointKind::MockCopyOracle);
        let ds = dataset();
        let sweep = Evaluator::new(&gw)
            .run_shot_sweep(
                &ds,
                &PromptConfig::new(Task::Binary, 0),
                &[0, 2, 1000],
                &[3],
            )
            .unwrap();
        assert_eq!(sweep.runs.len(), 3);
        assert_eq!(sweep.runs[2].report.config.k, ds.train.len());
        assert!(sweep.runs[2].report.flags[0].contains("exceeds pool"));
        assert_eq!(sweep.runs[1].report.grid["shots"], json!(2));
    }

    #[test]
    fn order_needs_two_shots() {
        let gw = gateway(EndpointKind::MockMajority);
        let err = Evaluator::new(&gw).run_order_perturbation(
            &dataset(),
            &PromptConfig::new(Task::Binary, 1),
            3,
            &[1],
        );
        assert!(matches!(err, Err(EvalError::Precondition { .. })));
    }

    #[test]
    fn needle_overlap_rejected() {
        let gw = gateway(EndpointKind::MockCopyOracle);
        let ds = dataset();
        let err = Evaluator::new(&gw).run_needle_haystack(
            &ds.test,
            &ds.test,
            &[2],
            &PromptConfig::new(Task::Binary, 0),
            &[1],
        );
        assert!(matches!(err, Err(EvalError::HaystackOverlap(_))));
        let err = Evaluator::new(&gw).run_needle_haystack(
            &ds.test,
            &ds.train[..3],
            &[8],
            &PromptConfig::new(Task::Binary, 0),
            &[1],
        );
        assert!(matches!(err, Err(EvalError::HaystackTooSmall { .. })));
    }

    #[test]
    fn gain_and_gap_arithmetic() {
        assert!((unseen_gain(0.9550, 0.9011) - 0.0539).abs() < 1e-9);
        assert!(unseen_gap(0.9080, 0.9080).abs() < 1e-12);
    }
}
