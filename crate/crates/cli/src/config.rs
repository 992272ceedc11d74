//! The TOML configuration file.
//!
//! ```toml
//! cache_dir = ".promoguard-cache"
//!
//! [endpoints.mistral]
//! kind = "remote"
//! base_url = "http://localhost:8000/v1"
//! model = "mistralai/Mistral-7B-Instruct-v0.2"
//! api_key_env = "PROMOGUARD_API_KEY"
//! concurrency = 8
//!
//! [endpoints.oracle]
//! kind = "mock_copy_oracle"
//!
//! [embedders.local]
//! kind = "hashing"
//! dim = 256
//!
//! [datasets.binary]
//! path = "data/binary"
//!
//! [prompts.bm25_k8]
//! task = "binary"
//! k = 8
//! strategy = "lexical"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Tokens are never stored here; `api_key_env` names the environment
//! variable that holds them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use promoguard::gateway::{Gateway, ModelEndpoint, ResponseCache};
use promoguard::prompting::PromptConfig;
use promoguard::retrieval::{
    Embedder, EmbeddingProvider, HashingEmbeddings, PrecomputedEmbeddings, RemoteEmbeddings,
};
use serde::Deserialize;

use crate::exit::{config_error, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Remote {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
    /// JSONL of `{"hash": <sha256 of text>, "vector": [...]}`.
    Precomputed { path: PathBuf },
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
    },
}

fn default_dim() -> usize {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    /// Directory written by `dataset build`.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub endpoints: BTreeMap<String, ModelEndpoint>,
    #[serde(default)]
    pub embedders: BTreeMap<String, EmbedderConfig>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetRef>,
    #[serde(default)]
    pub prompts: BTreeMap<String, PromptConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn names<T>(map: &BTreeMap<String, T>) -> String {
    if map.is_empty() {
        "(none)".into()
    } else {
        map.keys().cloned().collect::<Vec<_>>().join(", ")
    }
}

const ENDPOINT_FIELDS: [&str; 5] = [
    "kind",
    "decoding",
    "concurrency",
    "max_retries",
    "timeout_secs",
];

fn kind_fields(kind: &str) -> &'static [&'static str] {
    match kind {
        "remote" => &["base_url", "model", "api_key_env"],
        "mock_constant" => &["label"],
        "mock_scripted" => &["responses"],
        _ => &[],
    }
}

/// Endpoint tables are flattened, which serde cannot check for unknown
/// keys, so it is done here.
fn check_endpoint_fields(body: &str) -> Result<(), String> {
    let table: toml::Table = toml::from_str(body).map_err(|e| e.to_string())?;
    let Some(endpoints) = table.get("endpoints").and_then(|e| e.as_table()) else {
        return Ok(());
    };
    for (name, ep) in endpoints {
        let Some(ep) = ep.as_table() else { continue };
        let kind = ep.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        for key in ep.keys() {
            if ENDPOINT_FIELDS.contains(&key.as_str()) || kind_fields(kind).contains(&key.as_str())
            {
                continue;
            }
            let line = body
                .find(&format!("[endpoints.{name}]"))
                .and_then(|at| body[at..].find(&format!("\n{key}")).map(|off| at + off + 1))
                .map(|pos| format!("line {}: ", body[..pos].lines().count() + 1))
                .unwrap_or_default();
            return Err(format!(
                "{line}unknown field `{key}` in endpoints.{name} (kind {kind:?})"
            ));
        }
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&body)
            .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        check_endpoint_fields(&body)
            .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for (name, ep) in config.endpoints.iter_mut() {
            ep.name = name.clone();
            ep.validate()
                .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        }
        for (name, p) in &config.prompts {
            p.validate().map_err(|e| {
                config_error(format!("config {}: prompts.{name}: {e}", path.display()))
            })?;
        }
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.resolve(
            self.cache_dir
                .as_deref()
                .unwrap_or(Path::new(".promoguard-cache")),
        )
    }

    pub fn endpoint(&self, name: &str) -> CliResult<&ModelEndpoint> {
        self.endpoints.get(name).ok_or_else(|| {
            config_error(format!(
                "unknown endpoint {name:?}; configured endpoints: {}",
                names(&self.endpoints)
            ))
        })
    }

    pub fn gateway(&self, name: &str, no_cache: bool) -> CliResult<Gateway> {
        let endpoint = self.endpoint(name)?.clone();
        let gateway = Gateway::new(endpoint).map_err(|e| config_error(e.to_string()))?;
        Ok(if no_cache {
            gateway
        } else {
            gateway.with_cache(ResponseCache::new(self.cache_dir().join("responses")))
        })
    }

    pub fn prompt(&self, name: &str) -> CliResult<&PromptConfig> {
        self.prompts.get(name).ok_or_else(|| {
            config_error(format!(
                "unknown prompt {name:?}; configured prompts: {}",
                names(&self.prompts)
            ))
        })
    }

    pub fn dataset_dir(&self, name: &str) -> CliResult<PathBuf> {
        self.datasets
            .get(name)
            .map(|d| self.resolve(&d.path))
            .ok_or_else(|| {
                config_error(format!(
                    "unknown dataset {name:?}; configured datasets: {}",
                    names(&self.datasets)
                ))
            })
    }

    pub fn embedder(&self, name: &str, no_cache: bool) -> CliResult<Embedder> {
        let cfg = self.embedders.get(name).ok_or_else(|| {
            config_error(format!(
                "unknown embedder {name:?}; configured embedders: {}",
                names(&self.embedders)
            ))
        })?;
        let provider: Box<dyn EmbeddingProvider> = match cfg {
            EmbedderConfig::Remote {
                base_url,
                model,
                api_key_env,
            } => {
                let token = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        config_error(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Box::new(RemoteEmbeddings::new(
                    base_url.clone(),
                    model.clone(),
                    token,
                ))
            }
            EmbedderConfig::Precomputed { path } => Box::new(
                PrecomputedEmbeddings::load_jsonl(&self.resolve(path))
                    .map_err(|e| config_error(e.to_string()))?,
            ),
            EmbedderConfig::Hashing { dim } => Box::new(HashingEmbeddings { dim: *dim }),
        };
        let embedder = Embedder::new(provider);
        Ok(if no_cache {
            embedder
        } else {
            embedder.with_cache_dir(self.cache_dir().join("embeddings"))
        })
    }
}
