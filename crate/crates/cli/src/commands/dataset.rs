use std::path::PathBuf;

use clap::{Args, ValueEnum};
use log::{info, warn};
use promoguard::corpus::{
    build_binary_dataset, build_multiclass_dataset, dedup_by_id, ingest_samples, IngestOptions,
    Source, SplitRatio, UnifiedCategory,
};

use crate::exit::{config_error, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Binary,
    Multiclass,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// `source=path` of a labeled JSONL file; repeatable. Sources are
    /// `twitter` and `search_engine`.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<String>,
    /// Binary: total sample count (multiple of 4).
    #[arg(long, default_value_t = 5600)]
    pub total: usize,
    /// Multiclass: samples per category.
    #[arg(long, default_value_t = 500)]
    pub per_class: usize,
    /// Multiclass: comma-separated categories (default: all 13).
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<String>,
    #[arg(long, default_value = "4:1")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Map native labels missing from the taxonomy table to `others`.
    #[arg(long)]
    pub unmapped_to_others: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn build(args: BuildArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("dataset build");
    let split: SplitRatio = args
        .split
        .parse()
        .map_err(|e: promoguard::corpus::CorpusError| config_error(e.to_string()))?;
    let options = IngestOptions {
        unmapped_to_others: args.unmapped_to_others,
        ..IngestOptions::labeled()
    };
    let mut samples = Vec::new();
    for spec in &args.inputs {
        let (source, path) = spec
            .split_once('=')
            .ok_or_else(|| config_error(format!("--input {spec:?} is not source=path")))?;
        let source: Source = source
            .parse()
            .map_err(|e: promoguard::corpus::CorpusError| config_error(e.to_string()))?;
        let path = PathBuf::from(path);
        manifest.input_file(spec, &path)?;
        let ingested = ingest_samples(&path, source, options)?;
        for r in &ingested.rejected {
            warn!("{}:{}: {}", path.display(), r.line, r.reason);
        }
        info!(
            "{}: {} samples, {} rejected",
            path.display(),
            ingested.samples.len(),
            ingested.rejected.len()
        );
        samples.extend(ingested.samples);
    }
    let dropped = dedup_by_id(&mut samples);
    if dropped > 0 {
        warn!("dropped {dropped} samples with duplicate ids across inputs");
    }
    let dataset = match args.kind {
        Kind::Binary => build_binary_dataset(&samples, args.total, split, args.seed)?,
        Kind::Multiclass => {
            let categories: Vec<UnifiedCategory> = if args.categories.is_empty() {
                UnifiedCategory::ALL.to_vec()
            } else {
                args.categories
                    .iter()
                    .map(|c| c.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|e: promoguard::corpus::CorpusError| config_error(e.to_string()))?
            };
            build_multiclass_dataset(&samples, args.per_class, &categories, split, args.seed)?
        }
    };
    let written = dataset.write_dir(&args.out)?;
    for name in ["train.jsonl", "test.jsonl", "manifest.json"] {
        manifest.output(&args.out.join(name));
    }
    manifest.resolved("spec", &written.spec);
    manifest.resolved("dataset_hash", &written.dataset_hash);
    manifest.finish(&args.out, "run_manifest.json")?;
    println!(
        "{}\ttrain={}\ttest={}\t{}",
        args.out.display(),
        written.train_count,
        written.test_count,
        written.dataset_hash
    );
    Ok(())
}
