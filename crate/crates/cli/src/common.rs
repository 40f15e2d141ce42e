use std::path::{Path, PathBuf};

use clap::Args;
use dpacheck::balance::Dataset;
use dpacheck::classifiers::{Hyperparameters, TaskSpec};
use dpacheck::corpus::{load_ground_truth, LabeledCorpus, ProvisionCatalog};
use dpacheck::embedding::{EmbeddingProvider, EmbeddingStore, HttpProvider, HttpProviderConfig};
use serde::Serialize;

use crate::config::{pick, pick_or, provider_env, provider_url};
use crate::manifest::Artifacts;
use crate::{CliError, Ctx};

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct CatalogArg {
    /// Provision catalog (JSON)
    #[arg(long, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
}

impl CatalogArg {
    pub fn path(&self, ctx: &Ctx) -> Result<PathBuf, CliError> {
        pick(&self.catalog, &ctx.cfg.catalog, "catalog")
    }
}

/// Labelled corpus in ground-truth JSONL form.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct CorpusArgs {
    /// Ground-truth sentences (JSONL)
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub catalog: CatalogArg,
}

impl CorpusArgs {
    pub fn load(&self, ctx: &Ctx, art: Option<&mut Artifacts>) -> Result<LabeledCorpus, CliError> {
        let corpus = pick(&self.corpus, &ctx.cfg.corpus, "corpus")?;
        let catalog = self.catalog.path(ctx)?;
        if let Some(a) = art {
            a.input("corpus", &corpus)?;
            a.input("catalog", &catalog)?;
        }
        Ok(load_ground_truth(&corpus, &catalog)?)
    }
}

/// Training examples: a ground-truth corpus or a dataset written by
/// `balance`/`augment`.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Training set written by `balance` (JSONL); replaces --corpus
    #[arg(long, value_name = "FILE", conflicts_with = "corpus")]
    pub data: Option<PathBuf>,
}

impl TrainingArgs {
    pub fn load(
        &self,
        ctx: &Ctx,
        art: &mut Artifacts,
    ) -> Result<(Dataset, ProvisionCatalog), CliError> {
        match &self.data {
            Some(d) => {
                let cat_path = self.corpus.catalog.path(ctx)?;
                art.input("data", d)?;
                art.input("catalog", &cat_path)?;
                let data = Dataset::load(d)?;
                let catalog = ProvisionCatalog::load(&cat_path)?;
                for e in &data.examples {
                    for l in &e.gold_labels {
                        if catalog.get(l).is_none() {
                            return Err(dpacheck::Error::UnknownProvision(l.to_string()).into());
                        }
                    }
                }
                Ok((data, catalog))
            }
            None => {
                let c = self.corpus.load(ctx, Some(art))?;
                Ok((Dataset::from_corpus(&c), c.catalog))
            }
        }
    }
}

/// Where sentence vectors come from.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct ProviderArgs {
    /// Embedding store file
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    /// Embedding service endpoint (also DPACHECK_PROVIDER_URL); wins over --store
    #[arg(long, value_name = "URL")]
    pub provider_url: Option<String>,
}

pub enum Provider {
    Store(EmbeddingStore),
    Remote(HttpProvider),
}

impl Provider {
    pub fn as_dyn(&self) -> &dyn EmbeddingProvider {
        match self {
            Provider::Store(s) => s,
            Provider::Remote(r) => r,
        }
    }
}

impl ProviderArgs {
    pub fn open(&self, ctx: &Ctx, art: Option<&mut Artifacts>) -> Result<Provider, CliError> {
        // an explicit --store beats endpoints that only come from the config
        let url = match (&self.provider_url, &self.store) {
            (None, Some(_)) => provider_env(),
            _ => provider_url(&self.provider_url, &ctx.cfg),
        };
        if let Some(url) = url {
            return Ok(Provider::Remote(HttpProvider::new(
                HttpProviderConfig::new(url),
            )));
        }
        let path = pick(&self.store, &ctx.cfg.store, "store")?;
        if let Some(a) = art {
            a.input("store", &path)?;
        }
        Ok(Provider::Store(EmbeddingStore::load(&path)?))
    }
}

/// Hyperparameter overrides on top of the config file's table.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct HpArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer sizes, comma separated (MLP)
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lstm_hidden: Option<usize>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl HpArgs {
    pub fn resolve(&self, ctx: &Ctx) -> Result<Hyperparameters, CliError> {
        let mut hp = ctx.cfg.hyperparameters.clone().unwrap_or_default();
        if let Some(x) = self.epochs {
            hp.epochs = x;
        }
        if let Some(x) = self.learning_rate {
            hp.learning_rate = x;
        }
        if let Some(x) = self.batch_size {
            hp.batch_size = x;
        }
        if !self.hidden.is_empty() {
            hp.hidden_sizes = self.hidden.clone();
        }
        if let Some(x) = self.dropout {
            hp.dropout = x;
        }
        if let Some(x) = self.lstm_hidden {
            hp.lstm_hidden = x;
        }
        if let Some(x) = self.n_trees {
            hp.n_trees = x;
        }
        if let Some(x) = self.max_depth {
            hp.max_depth = x;
        }
        hp.validate()?;
        Ok(hp)
    }
}

/// `multiclass`, `binary:PO3` or a bare provision id.
pub fn parse_task(s: &str, catalog: &ProvisionCatalog) -> Result<TaskSpec, CliError> {
    if s == "multiclass" {
        return Ok(TaskSpec::multiclass(catalog));
    }
    let id = s.strip_prefix("binary:").unwrap_or(s);
    let id = catalog.resolve(id).map_err(|_| {
        CliError::Usage(format!(
            "task {s:?}: expected multiclass or binary:<provision id>"
        ))
    })?;
    Ok(TaskSpec::binary(id))
}

pub fn seed(flag: &Option<u64>, ctx: &Ctx) -> u64 {
    pick_or(flag, &ctx.cfg.seed, 0)
}

pub fn config_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("arguments serialize")
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Document id from a file name: `dpas/acme.txt` -> `acme`.
pub fn doc_id(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "dpa".into(), |s| s.to_string_lossy().into_owned())
}

pub fn write_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}
