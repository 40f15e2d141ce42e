use std::path::{Path, PathBuf};

use dpacheck::classifiers::Hyperparameters;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the embedding service endpoint.
pub const PROVIDER_ENV: &str = "DPACHECK_PROVIDER_URL";

/// Optional TOML run configuration. Every key can be overridden by the
/// matching command-line flag; relative paths are taken relative to the
/// config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub lexicons: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub task: Option<String>,
    pub algorithm: Option<String>,
    pub recipe: Option<String>,
    pub mode: Option<String>,
    pub provider_url: Option<String>,
    pub translator_url: Option<String>,
    pub pivots: Vec<String>,
    pub hyperparameters: Option<Hyperparameters>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        for p in [
            &mut cfg.corpus,
            &mut cfg.catalog,
            &mut cfg.aliases,
            &mut cfg.store,
            &mut cfg.model,
        ] {
            fix(p);
        }
        for l in &mut cfg.lexicons {
            if l.is_relative() {
                *l = base.join(&*l);
            }
        }
        Ok(cfg)
    }
}

/// Flag value if given, else the config value, else a usage error naming
/// the flag.
pub fn pick<T: Clone>(flag: &Option<T>, cfg: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.clone()
        .or_else(|| cfg.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or config key)")))
}

pub fn pick_or<T: Clone>(flag: &Option<T>, cfg: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| cfg.clone()).unwrap_or(default)
}

pub fn pick_list<T: Clone>(flag: &[T], cfg: &[T]) -> Vec<T> {
    if flag.is_empty() {
        cfg.to_vec()
    } else {
        flag.to_vec()
    }
}

pub fn provider_env() -> Option<String> {
    std::env::var(PROVIDER_ENV).ok().filter(|s| !s.is_empty())
}

/// Provider endpoint: flag, then environment, then config.
pub fn provider_url(flag: &Option<String>, cfg: &FileConfig) -> Option<String> {
    flag.clone()
        .or_else(provider_env)
        .or_else(|| cfg.provider_url.clone())
}
