use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use promoguard::corpus::UnifiedCategory;
use promoguard::evaluation::{
    persist_runs, Evaluator, MetricName, Run, UnseenOptions, DEFAULT_NEEDLE_SIZES,
    DEFAULT_ORDER_SHOTS, DEFAULT_SHOTS,
};
use promoguard::gateway::{Gateway, PredictionStatus};
use promoguard::prompting::{OrderingPolicy, PromptConfig};
use promoguard::retrieval::Embedder;
use serde_json::json;

use super::prompt::TaskArg;
use super::{resolve_dataset, write_text};
use crate::config::Config;
use crate::exit::{config_error, CliError, CliResult, TRANSPORT};
use crate::manifest::RunManifest;
use crate::ModelArgs;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset (config name or directory).
    #[arg(long, alias = "data")]
    pub dataset: String,
    /// Prompt configuration name; defaults to a zero-shot prompt for `--task`.
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long, value_enum, default_value = "binary")]
    pub task: TaskArg,
    #[arg(long)]
    pub embedder: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Output directory for reports, predictions and the run manifest.
    #[arg(long)]
    pub out: PathBuf,
}

struct Session {
    gateway: Gateway,
    embedder: Option<Embedder>,
    prompt: PromptConfig,
    manifest: RunManifest,
}

impl Session {
    fn open(
        config: &Config,
        config_path: Option<&PathBuf>,
        args: &EvalArgs,
        command: &str,
    ) -> CliResult<Self> {
        let mut manifest = RunManifest::start(command);
        if let Some(p) = config_path {
            manifest.input_file("config", p)?;
        }
        let gateway = config.gateway(&args.model.endpoint, args.model.no_cache)?;
        let embedder = args
            .embedder
            .as_deref()
            .map(|e| config.embedder(e, args.model.no_cache))
            .transpose()?;
        let prompt = match &args.prompt {
            Some(name) => config.prompt(name)?.clone(),
            None => PromptConfig::new(args.task.into(), 0),
        };
        manifest.resolved("endpoint", gateway.endpoint());
        manifest.resolved("endpoint_identity", gateway.identity());
        manifest.resolved("prompt", &prompt);
        manifest.resolved("seeds", &args.seeds);
        Ok(Session {
            gateway,
            embedder,
            prompt,
            manifest,
        })
    }

    fn evaluator(&self) -> Evaluator<'_> {
        let e = Evaluator::new(&self.gateway);
        match &self.embedder {
            Some(emb) => e.with_embedder(emb),
            None => e,
        }
    }

    fn dataset(
        &mut self,
        config: &Config,
        key: &str,
        name: &str,
    ) -> CliResult<promoguard::corpus::DatasetSplit> {
        let (dir, split) = resolve_dataset(Some(config), name)?;
        self.manifest.resolved(key, dir.display().to_string());
        self.manifest.input_hash(key, split.content_hash());
        Ok(split)
    }

    /// Writes runs, the manifest and a one-line-per-run summary on stdout.
    /// Fails with the transport code when any request failed.
    fn finish(mut self, out: &Path, runs: &[Run]) -> CliResult<()> {
        let paths = persist_runs(out, runs)?;
        for p in &paths {
            self.manifest.output(p);
        }
        self.manifest.output(&out.join("metrics.csv"));
        self.manifest.finish(out, "run_manifest.json")?;
        let mut failed = 0;
        for (run, path) in runs.iter().zip(&paths) {
            let r = &run.report;
            println!(
                "{}\tf1={:.4}\tacc={:.4}\tfpr={:.4}",
                path.display(),
                r.mean(MetricName::F1),
                r.mean(MetricName::Accuracy),
                r.mean(MetricName::Fpr)
            );
            failed += run
                .predictions
                .iter()
                .filter(|p| p.prediction.status == PredictionStatus::TransportFailure)
                .count();
        }
        info!(
            "{} live calls, {} cache hits",
            self.gateway.live_calls(),
            self.gateway.cache_hits()
        );
        if failed > 0 {
            warn!("{failed} requests failed; they are scored as errors");
            return Err(CliError {
                code: TRANSPORT,
                message: format!("{failed} model requests failed"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
}

pub fn run(config: &Config, path: Option<&PathBuf>, args: RunArgs) -> CliResult<()> {
    let a = args.eval;
    let mut s = Session::open(config, path, &a, "eval run")?;
    let dataset = s.dataset(config, "dataset", &a.dataset)?;
    let run = s
        .evaluator()
        .run_classification(&dataset, &s.prompt, &a.seeds)?;
    s.finish(&a.out, &[run])
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Comma-separated shot counts.
    #[arg(long, value_delimiter = ',')]
    pub shots: Vec<usize>,
}

pub fn sweep(config: &Config, path: Option<&PathBuf>, args: SweepArgs) -> CliResult<()> {
    let a = args.eval;
    let shots = if args.shots.is_empty() {
        DEFAULT_SHOTS.to_vec()
    } else {
        args.shots
    };
    let mut s = Session::open(config, path, &a, "eval sweep")?;
    s.manifest.resolved("shots", &shots);
    let dataset = s.dataset(config, "dataset", &a.dataset)?;
    let result = s
        .evaluator()
        .run_shot_sweep(&dataset, &s.prompt, &shots, &a.seeds)?;
    s.manifest.resolved("sweep_id", &result.sweep_id);
    s.finish(&a.out, &result.runs)
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Demonstration orders per seed.
    #[arg(long, default_value_t = 10)]
    pub permutations: usize,
    /// Comma-separated shot counts; one study per value.
    #[arg(long, value_delimiter = ',')]
    pub shots: Vec<usize>,
}

pub fn order(config: &Config, path: Option<&PathBuf>, args: OrderArgs) -> CliResult<()> {
    let a = args.eval;
    let mut s = Session::open(config, path, &a, "eval order")?;
    let shots = if args.shots.is_empty() {
        if s.prompt.k > 0 {
            vec![s.prompt.k]
        } else {
            DEFAULT_ORDER_SHOTS.to_vec()
        }
    } else {
        args.shots
    };
    s.manifest.resolved("shots", &shots);
    s.manifest.resolved("permutations", args.permutations);
    let dataset = s.dataset(config, "dataset", &a.dataset)?;
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &k in &shots {
        let cfg = s.prompt.with_k(k);
        let report =
            s.evaluator()
                .run_order_perturbation(&dataset, &cfg, args.permutations, &a.seeds)?;
        summary.push(json!({
            "k": report.k,
            "f1_std": report.f1_std,
            "per_seed": report.per_seed,
        }));
        runs.extend(report.runs);
    }
    let path = a.out.join("order_summary.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    s.manifest.output(&path);
    s.finish(&a.out, &runs)
}

#[derive(Debug, Args)]
pub struct LabelPosArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Comma-separated orderings, e.g.
    /// `as_retrieved,grouped_label_last(illicit),grouped_label_last(benign)`.
    #[arg(long, alias = "label", value_delimiter = ',')]
    pub placements: Vec<String>,
}

pub fn label_pos(config: &Config, path: Option<&PathBuf>, args: LabelPosArgs) -> CliResult<()> {
    let a = args.eval;
    let placements: Vec<OrderingPolicy> = if args.placements.is_empty() {
        vec![
            OrderingPolicy::AsRetrieved,
            OrderingPolicy::GroupedLabelLast("illicit".into()),
            OrderingPolicy::GroupedLabelLast("benign".into()),
        ]
    } else {
        args.placements
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_, _>>()?
    };
    let mut s = Session::open(config, path, &a, "eval label-pos")?;
    s.manifest.resolved(
        "placements",
        placements.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
    );
    let dataset = s.dataset(config, "dataset", &a.dataset)?;
    let report = s
        .evaluator()
        .run_label_position(&dataset, &s.prompt, &placements, &a.seeds)?;
    let runs: Vec<Run> = report.runs.into_iter().map(|(_, r)| r).collect();
    s.finish(&a.out, &runs)
}

#[derive(Debug, Args)]
pub struct NeedleArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Comma-separated haystack sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Dataset whose train split forms the haystack (default: `--dataset`).
    #[arg(long)]
    pub haystack: Option<String>,
}

pub fn needle(config: &Config, path: Option<&PathBuf>, args: NeedleArgs) -> CliResult<()> {
    let a = args.eval;
    let sizes = if args.sizes.is_empty() {
        DEFAULT_NEEDLE_SIZES.to_vec()
    } else {
        args.sizes
    };
    let mut s = Session::open(config, path, &a, "eval needle")?;
    s.manifest.resolved("sizes", &sizes);
    let queries = s.dataset(config, "dataset", &a.dataset)?.test;
    let haystack = match &args.haystack {
        Some(h) => s.dataset(config, "haystack", h)?.train,
        None => resolve_dataset(Some(config), &a.dataset)?.1.train,
    };
    let report = s
        .evaluator()
        .run_needle_haystack(&queries, &haystack, &sizes, &s.prompt, &a.seeds)?;
    let path = a.out.join("needle_summary.json");
    let accuracy: Vec<_> = report
        .accuracy
        .iter()
        .map(|(n, acc)| json!({"n": n, "accuracy": acc}))
        .collect();
    write_text(
        &path,
        &(serde_json::to_string_pretty(&accuracy).expect("summary serializes") + "\n"),
    )?;
    s.manifest.output(&path);
    s.finish(&a.out, &report.runs)
}

#[derive(Debug, Args)]
pub struct UnseenArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Category withheld from the demonstrations.
    #[arg(long)]
    pub category: String,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Target-category demonstrations in the included setting.
    #[arg(long, default_value_t = 4)]
    pub target_demos: usize,
}

pub fn unseen(config: &Config, path: Option<&PathBuf>, args: UnseenArgs) -> CliResult<()> {
    let a = args.eval;
    let category: UnifiedCategory = args
        .category
        .parse()
        .map_err(|e: promoguard::corpus::CorpusError| config_error(e.to_string()))?;
    let options = UnseenOptions {
        k: args.k,
        target_demos: args.target_demos,
    };
    let mut s = Session::open(config, path, &a, "eval unseen")?;
    s.manifest.resolved("category", category);
    s.manifest.resolved("options", options);
    let dataset = s.dataset(config, "dataset", &a.dataset)?;
    let report = s
        .evaluator()
        .run_unseen_category(&dataset, category, options, &a.seeds)?;
    let path = a.out.join(format!("unseen_{category}.summary.json"));
    write_text(&path, &report.summary_json())?;
    s.manifest.output(&path);
    if report.excluded_leaks > 0 {
        return Err(crate::exit::pipeline_error(format!(
            "{} excluded-setting prompts contain a target sample",
            report.excluded_leaks
        )));
    }
    s.finish(
        &a.out,
        &[report.zero_shot, report.excluded, report.included],
    )
}
