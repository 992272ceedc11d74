use std::path::{Path, PathBuf};

use clap::Args;
use log::warn;
use promoguard::corpus::{ingest_samples, IngestOptions, Sample, Source};
use promoguard::digest::sha256_hex;
use promoguard::gateway::{Prediction, PredictionStatus};
use promoguard::prompting::ManifestEntry;
use serde::Serialize;

use super::prompt::{query_sample, render_all, PromptArgs};
use super::{read_text, write_text};
use crate::exit::{input_error, CliError, CliResult, TRANSPORT};
use crate::manifest::RunManifest;
use crate::{load_config, ModelArgs};

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    /// A single text.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    pub text: Option<String>,
    /// `.jsonl` with a `text` field per line, or plain text with one item
    /// per line.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `predictions.jsonl` and `run_manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassifyRecord<'a> {
    id: &'a str,
    predicted: Option<&'a str>,
    manifest: &'a [ManifestEntry],
    #[serde(flatten)]
    prediction: &'a Prediction,
}

fn read_inputs(path: &Path) -> CliResult<Vec<Sample>> {
    if path.extension().is_some_and(|x| x == "jsonl") {
        let ingested = ingest_samples(path, Source::Twitter, IngestOptions::unlabeled())?;
        if let Some(r) = ingested.rejected.first() {
            return Err(input_error(format!(
                "{}:{}: {}",
                path.display(),
                r.line,
                r.reason
            )));
        }
        return Ok(ingested.samples);
    }
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| query_sample(format!("line-{}", i + 1), l.to_string()))
        .collect()
}

pub fn classify(config_path: Option<&PathBuf>, args: ClassifyArgs) -> CliResult<()> {
    let config = load_config(config_path)?;
    let mut manifest = RunManifest::start("classify");
    let gateway = config.gateway(&args.model.endpoint, args.model.no_cache)?;
    let prompt = args.prompt.resolve(Some(&config))?;
    let queries = match (&args.text, &args.file) {
        (Some(t), _) => vec![query_sample(sha256_hex(t)[..16].to_string(), t.clone())?],
        (None, Some(f)) => {
            manifest.input_file("file", f)?;
            read_inputs(f)?
        }
        (None, None) => unreachable!("clap requires --text or --file"),
    };
    if queries.is_empty() {
        return Err(input_error("no texts to classify"));
    }
    if let Some(p) = config_path {
        manifest.input_file("config", p)?;
    }
    let rendered = render_all(
        Some(&config),
        &args.prompt,
        &prompt,
        &queries,
        args.seed,
        args.model.no_cache,
    )?;
    let predictions = gateway.classify_batch(&rendered);
    let mut jsonl = String::new();
    for ((q, r), p) in queries.iter().zip(&rendered).zip(&predictions) {
        println!("{}", p.label.map(|l| l.as_str()).unwrap_or("-"));
        let record = ClassifyRecord {
            id: &q.id,
            predicted: p.label.map(|l| l.as_str()),
            manifest: &r.manifest,
            prediction: p,
        };
        jsonl.push_str(&serde_json::to_string(&record).expect("record serializes"));
        jsonl.push('\n');
    }
    let transport = predictions
        .iter()
        .filter(|p| p.status == PredictionStatus::TransportFailure)
        .count();
    let unparsed = predictions
        .iter()
        .filter(|p| p.status == PredictionStatus::ParseFailure)
        .count();
    if unparsed > 0 {
        warn!("{unparsed} completions could not be parsed into a label");
    }
    if let Some(out) = &args.out {
        let path = out.join("predictions.jsonl");
        write_text(&path, &jsonl)?;
        manifest.output(&path);
        manifest.resolved("endpoint", gateway.endpoint());
        manifest.resolved("endpoint_identity", gateway.identity());
        manifest.resolved("prompt", &prompt);
        manifest.resolved("seed", args.seed);
        manifest.finish(out, "run_manifest.json")?;
    }
    if transport > 0 {
        return Err(CliError {
            code: TRANSPORT,
            message: format!("{transport} of {} requests failed", predictions.len()),
        });
    }
    Ok(())
}
