use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use log::warn;
use promoguard::corpus::{ingest_samples, IngestOptions, Source, UnifiedCategory};
use promoguard::discovery::{
    annotate_free_form, consolidate_clusters, diff_taxonomy, load_overrides, normalize_labels,
    AnnotateOptions, Annotation, AnnotationMode, ConsolidateOptions, Consolidation, LabelCount,
    Overrides,
};
use serde::{Deserialize, Serialize};

use super::{read_text, write_text};
use crate::exit::{config_error, input_error, CliError, CliResult, TRANSPORT};
use crate::manifest::RunManifest;
use crate::{load_config, ModelArgs};

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Unlabeled JSONL corpus (`text`, optional `id` and `source`).
    #[arg(long)]
    pub input: PathBuf,
    /// JSONL of `{"text": ..., "label": ...}` examples for the prompt.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// `anchored` or `open_ended`.
    #[arg(long, default_value = "anchored")]
    pub mode: AnnotationMode,
    /// Examples per prompt.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `annotations.jsonl`, `labels.json` and `run_manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecord {
    text: String,
    #[serde(flatten)]
    annotation: Annotation,
}

#[derive(Deserialize)]
struct Example {
    text: String,
    label: String,
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| input_error(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn annotate(config_path: Option<&PathBuf>, args: AnnotateArgs) -> CliResult<()> {
    let config = load_config(config_path)?;
    let mut manifest = RunManifest::start("discover annotate");
    let gateway = config.gateway(&args.model.endpoint, args.model.no_cache)?;
    manifest.input_file("input", &args.input)?;
    let ingested = ingest_samples(&args.input, Source::Twitter, IngestOptions::unlabeled())?;
    for r in &ingested.rejected {
        warn!("{}:{}: {}", args.input.display(), r.line, r.reason);
    }
    if ingested.samples.is_empty() {
        return Err(input_error(format!(
            "{} has no texts",
            args.input.display()
        )));
    }
    let examples: Vec<(String, String)> = match &args.examples {
        Some(p) => {
            manifest.input_file("examples", p)?;
            jsonl::<Example>(p)?
                .into_iter()
                .map(|e| (e.text, e.label))
                .collect()
        }
        None => Vec::new(),
    };
    let options = AnnotateOptions {
        mode: args.mode,
        k: args.k,
        seed: args.seed,
    };
    manifest.resolved("endpoint", gateway.endpoint());
    manifest.resolved("options", &options);
    let annotations = annotate_free_form(&ingested.samples, &examples, &options, &gateway);
    let mut body = String::new();
    for (s, a) in ingested.samples.iter().zip(&annotations) {
        let record = AnnotationRecord {
            text: s.text.clone(),
            annotation: a.clone(),
        };
        body.push_str(&serde_json::to_string(&record).expect("record serializes"));
        body.push('\n');
    }
    let labels = normalize_labels(
        &annotations
            .iter()
            .filter_map(|a| a.label.as_ref())
            .collect::<Vec<_>>(),
    );
    let ann_path = args.out.join("annotations.jsonl");
    let labels_path = args.out.join("labels.json");
    write_text(&ann_path, &body)?;
    write_text(
        &labels_path,
        &(serde_json::to_string_pretty(&labels).expect("labels serialize") + "\n"),
    )?;
    manifest.output(&ann_path);
    manifest.output(&labels_path);
    manifest.finish(&args.out, "run_manifest.json")?;
    let failed: Vec<&Annotation> = annotations.iter().filter(|a| a.label.is_none()).collect();
    println!(
        "{}\ttexts={}\tlabels={}\tfailures={}",
        args.out.display(),
        annotations.len(),
        labels.len(),
        failed.len()
    );
    let transport = failed
        .iter()
        .filter(|a| {
            a.error
                .as_deref()
                .is_some_and(|e| e.starts_with("transport"))
        })
        .count();
    if transport > 0 {
        return Err(CliError {
            code: TRANSPORT,
            message: format!("{transport} model requests failed"),
        });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ConsolidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `labels.json` written by `discover annotate`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub max_repairs: usize,
    /// Writes `clusters.json` and `run_manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn consolidate(config_path: Option<&PathBuf>, args: ConsolidateArgs) -> CliResult<()> {
    let config = load_config(config_path)?;
    let mut manifest = RunManifest::start("discover consolidate");
    if args.batch_size < 2 {
        return Err(config_error("--batch-size must be at least 2"));
    }
    let gateway = config.gateway(&args.model.endpoint, args.model.no_cache)?;
    manifest.input_file("labels", &args.labels)?;
    let labels: Vec<LabelCount> = serde_json::from_str(&read_text(&args.labels)?)
        .map_err(|e| input_error(format!("{}: {e}", args.labels.display())))?;
    let options = ConsolidateOptions {
        batch_size: args.batch_size,
        max_repairs: args.max_repairs,
    };
    manifest.resolved("endpoint", gateway.endpoint());
    manifest.resolved("options", options);
    let result = consolidate_clusters(&labels, &gateway, &options)?;
    for r in &result.repairs {
        warn!(
            "{} round {}: missing {:?}, duplicated {:?}, unknown {:?}",
            r.stage, r.round, r.missing, r.duplicated, r.unknown
        );
    }
    let path = args.out.join("clusters.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&result).expect("clusters serialize") + "\n"),
    )?;
    manifest.output(&path);
    manifest.finish(&args.out, "run_manifest.json")?;
    println!(
        "{}\tclusters={}\tcalls={}\trepairs={}",
        path.display(),
        result.clusters.len(),
        result.calls,
        result.repairs.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// `clusters.json` written by `discover consolidate`.
    #[arg(long)]
    pub clusters: PathBuf,
    /// `annotations.jsonl`; supplies example texts for novel clusters.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// JSON object mapping cluster names to known categories.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Writes `novelty.json`, `novelty.md` and `run_manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn diff(args: DiffArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("discover diff");
    manifest.input_file("clusters", &args.clusters)?;
    let consolidation: Consolidation = serde_json::from_str(&read_text(&args.clusters)?)
        .map_err(|e| input_error(format!("{}: {e}", args.clusters.display())))?;
    let overrides: Overrides = match &args.overrides {
        Some(p) => {
            manifest.input_file("overrides", p)?;
            load_overrides(p)?
        }
        None => Overrides::new(),
    };
    let mut examples: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if let Some(p) = &args.annotations {
        manifest.input_file("annotations", p)?;
        for r in jsonl::<AnnotationRecord>(p)? {
            if let Some(l) = r.annotation.label {
                examples.entry(l.label).or_default().push(r.text);
            }
        }
    }
    let known: Vec<UnifiedCategory> = UnifiedCategory::illicit().collect();
    let report = diff_taxonomy(&consolidation.clusters, &known, &overrides, &examples);
    let json_path = args.out.join("novelty.json");
    let md_path = args.out.join("novelty.md");
    write_text(&json_path, &report.to_json())?;
    write_text(&md_path, &report.to_markdown())?;
    manifest.output(&json_path);
    manifest.output(&md_path);
    manifest.finish(&args.out, "run_manifest.json")?;
    println!(
        "{}\tknown={}\tnovel={}",
        json_path.display(),
        report.known,
        report.novel
    );
    Ok(())
}
