use std::path::PathBuf;

use clap::{Args, ValueEnum};
use promoguard::corpus::{Sample, Source, Task};
use promoguard::evaluation::Evaluator;
use promoguard::gateway::{Gateway, ModelEndpoint};
use promoguard::prompting::{render_prompt, PromptConfig, RenderedPrompt};
use promoguard::retrieval::{Embedder, Strategy};

use super::resolve_dataset;
use crate::config::Config;
use crate::exit::{config_error, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Binary,
    Multiclass,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Binary => Task::Binary,
            TaskArg::Multiclass => Task::Multiclass,
        }
    }
}

/// How a command picks its prompt configuration.
#[derive(Debug, Clone, Args)]
pub struct PromptArgs {
    /// Prompt configuration name from the config file.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Task for the zero-shot default when `--prompt` is absent.
    #[arg(long, value_enum, default_value = "binary")]
    pub task: TaskArg,
    /// Dataset (config name or directory) whose train split supplies
    /// demonstrations.
    #[arg(long, alias = "data")]
    pub dataset: Option<String>,
    /// Embedder name for semantic selection.
    #[arg(long)]
    pub embedder: Option<String>,
}

impl PromptArgs {
    pub fn resolve(&self, config: Option<&Config>) -> CliResult<PromptConfig> {
        match &self.prompt {
            Some(name) => {
                let config =
                    config.ok_or_else(|| config_error("--prompt needs --config <FILE>"))?;
                Ok(config.prompt(name)?.clone())
            }
            None => Ok(PromptConfig::new(self.task.into(), 0)),
        }
    }

    pub fn embedder(&self, config: Option<&Config>, no_cache: bool) -> CliResult<Option<Embedder>> {
        match (&self.embedder, config) {
            (Some(name), Some(c)) => Ok(Some(c.embedder(name, no_cache)?)),
            (Some(_), None) => Err(config_error("--embedder needs --config <FILE>")),
            (None, _) => Ok(None),
        }
    }

    /// Train split of `--dataset`, or an empty pool for zero-shot prompts.
    pub fn pool(&self, config: Option<&Config>, prompt: &PromptConfig) -> CliResult<Vec<Sample>> {
        match &self.dataset {
            Some(name) => Ok(resolve_dataset(config, name)?.1.train),
            None if prompt.k == 0 => Ok(Vec::new()),
            None => Err(config_error(format!(
                "a {}-shot prompt needs --dataset for demonstrations",
                prompt.k
            ))),
        }
    }
}

/// Renders one prompt per query. Query `i` draws its demonstrations from the
/// `(seed, i)` stream.
pub fn render_all(
    config: Option<&Config>,
    args: &PromptArgs,
    prompt: &PromptConfig,
    queries: &[Sample],
    seed: u64,
    no_cache: bool,
) -> CliResult<Vec<RenderedPrompt>> {
    if prompt.strategy == Strategy::Semantic && prompt.k > 0 && args.embedder.is_none() {
        return Err(config_error("semantic selection needs --embedder"));
    }
    let pool = args.pool(config, prompt)?;
    let embedder = args.embedder(config, no_cache)?;
    // selection never calls the model
    let idle = Gateway::new(ModelEndpoint::mock_constant("benign"))
        .map_err(|e| config_error(e.to_string()))?;
    let mut evaluator = Evaluator::new(&idle);
    if let Some(e) = &embedder {
        evaluator = evaluator.with_embedder(e);
    }
    let retriever = evaluator.retriever(&pool, queries, prompt)?;
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let (demos, _) = retriever.demos(prompt, seed, qi, q)?;
            Ok(render_prompt(prompt, &demos, &q.text)?)
        })
        .collect()
}

pub fn query_sample(id: String, text: String) -> CliResult<Sample> {
    Sample::new(id, text, Source::Twitter, None, None)
        .map_err(|e| crate::exit::input_error(e.to_string()))
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub prompt: PromptArgs,
    /// Query text.
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_cache: bool,
}

pub fn render(config_path: Option<&PathBuf>, args: RenderArgs) -> CliResult<()> {
    let config = config_path.map(|p| Config::load(p)).transpose()?;
    let prompt = args.prompt.resolve(config.as_ref())?;
    let query = query_sample("query".into(), args.text.clone())?;
    let rendered = render_all(
        config.as_ref(),
        &args.prompt,
        &prompt,
        &[query],
        args.seed,
        args.no_cache,
    )?;
    print!("{}", rendered[0].text);
    Ok(())
}
