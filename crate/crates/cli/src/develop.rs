use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use dpacheck::balance::{
    build_variant, builtin_recipes, Dataset, HttpTranslator, IdentityTranslator, Origin, Resources,
    SynonymLexicon, Translator, VariantRecipe, DEFAULT_PIVOTS,
};
use dpacheck::classifiers::{
    build_matrix, fit_task, grid_search, train_suite, Algorithm, FeatureMatrix, HyperGrid,
    Hyperparameters, ModelContainer, SuiteFeatures, TaskSpec,
};
use dpacheck::corpus::{load_ground_truth, ProvisionCatalog, ProvisionId};
use dpacheck::embedding::{EmbeddingProvider, EmbeddingStore};
use dpacheck::fewshot::{fit_fewshot, sample_shots, FewShotConfig, ShotSpec};
use dpacheck::par;
use serde::Serialize;
use serde_json::json;

use crate::common::{
    config_json, parse_task, read_text, seed, write_stdout, CatalogArg, HpArgs, ProviderArgs,
    TrainingArgs,
};
use crate::config::{pick, pick_list, pick_or};
use crate::manifest::Artifacts;
use crate::{CliError, Ctx};

/// Inputs shared by `balance` and `augment`.
#[derive(Args, Debug, Serialize)]
pub struct VariantInputs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// multiclass or binary:<provision id>
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synonym lexicon (word TAB syn,syn); repeatable
    #[arg(long = "lexicon", value_name = "FILE")]
    pub lexicons: Vec<PathBuf>,
    /// Store with a vocabulary section, for embedding replacement
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    /// Back-translation service URL, or `identity` for the stub
    #[arg(long, value_name = "URL")]
    pub translator: Option<String>,
    /// Pivot languages for back-translation
    #[arg(long, value_delimiter = ',')]
    pub pivots: Vec<String>,
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: PathBuf,
}

struct Loaded {
    data: Dataset,
    task: TaskSpec,
    seed: u64,
    lexicons: Vec<SynonymLexicon>,
    store: Option<EmbeddingStore>,
    translator: Option<Box<dyn Translator>>,
    pivots: Vec<String>,
}

impl VariantInputs {
    fn load(&self, ctx: &Ctx, art: &mut Artifacts) -> Result<Loaded, CliError> {
        let (data, catalog) = self.training.load(ctx, art)?;
        let task = parse_task(&pick(&self.task, &ctx.cfg.task, "task")?, &catalog)?;
        let lexicon_paths = pick_list(&self.lexicons, &ctx.cfg.lexicons);
        let mut lexicons = Vec::new();
        for (i, p) in lexicon_paths.iter().enumerate() {
            art.input(&format!("lexicon{}", i + 1), p)?;
            lexicons.push(SynonymLexicon::load(p)?);
        }
        let store = match self.store.clone().or_else(|| ctx.cfg.store.clone()) {
            Some(p) => {
                art.input("store", &p)?;
                Some(EmbeddingStore::load(&p)?)
            }
            None => None,
        };
        let translator: Option<Box<dyn Translator>> = match self
            .translator
            .clone()
            .or_else(|| ctx.cfg.translator_url.clone())
            .as_deref()
        {
            None => None,
            Some("identity") => Some(Box::new(IdentityTranslator)),
            Some(url) => Some(Box::new(HttpTranslator::new(url))),
        };
        let mut pivots = pick_list(&self.pivots, &ctx.cfg.pivots);
        if pivots.is_empty() {
            pivots = DEFAULT_PIVOTS.iter().map(|p| p.to_string()).collect();
        }
        Ok(Loaded {
            data,
            task,
            seed: seed(&self.seed, ctx),
            lexicons,
            store,
            translator,
            pivots,
        })
    }
}

impl Loaded {
    fn run(
        &self,
        recipe: &VariantRecipe,
    ) -> Result<(Dataset, dpacheck::balance::VariantManifest), CliError> {
        let res = Resources {
            lexicons: self.lexicons.clone(),
            store: self.store.as_ref(),
            translator: self.translator.as_deref(),
            pivots: self.pivots.clone(),
            ..Resources::default()
        };
        Ok(build_variant(
            &self.data, &self.task, recipe, self.seed, &res,
        )?)
    }

    fn config(&self, args: &VariantInputs, recipe: &VariantRecipe) -> serde_json::Value {
        json!({
            "args": config_json(args),
            "task": self.task,
            "recipe": recipe,
            "pivots": self.pivots,
        })
    }
}

#[derive(Args, Debug)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub inputs: VariantInputs,
    /// Recipe name (RU, RO, RUOS, BT, SR, ER, NI, BT+RUOS, ..., ALL+RUOS)
    #[arg(long)]
    pub recipe: Option<String>,
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

pub fn balance(ctx: &Ctx, a: BalanceArgs) -> Result<(), CliError> {
    let name = pick(&a.recipe, &ctx.cfg.recipe, "recipe")?;
    let recipe = VariantRecipe::builtin(&name).map_err(|_| {
        let names: Vec<String> = builtin_recipes().into_iter().map(|r| r.name).collect();
        CliError::Usage(format!(
            "unknown recipe {name:?}; known: {}",
            names.join(", ")
        ))
    })?;
    let mut art = Artifacts::in_dir("balance", None, json!(null), &a.inputs.out)?;
    let loaded = a.inputs.load(ctx, &mut art)?;
    let (data, manifest) = loaded.run(&recipe)?;
    let mut art = art.with_config(Some(loaded.seed), loaded.config(&a.inputs, &recipe));
    art.write("dataset.jsonl", data.to_jsonl().as_bytes())?;
    art.write("variant.json", pretty(&manifest).as_bytes())?;
    art.finish()?;
    let mut out = format!(
        "{}: {} -> {} examples\n",
        recipe.name,
        loaded.data.len(),
        data.len()
    );
    for (c, n) in &manifest.class_counts {
        let _ = writeln!(out, "{c}\t{n}");
    }
    write_stdout(&out);
    Ok(())
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub inputs: VariantInputs,
    /// Augmentation family: BT, SR, ER or NI
    #[arg(long)]
    pub method: String,
}

pub fn augment(ctx: &Ctx, a: AugmentArgs) -> Result<(), CliError> {
    let recipe = match a.method.to_uppercase().as_str() {
        m @ ("BT" | "SR" | "ER" | "NI") => VariantRecipe::builtin(m)?,
        _ => {
            return Err(CliError::Usage(format!(
                "unknown method {:?} (BT, SR, ER, NI)",
                a.method
            )))
        }
    };
    let mut art = Artifacts::in_dir("augment", None, json!(null), &a.inputs.out)?;
    let loaded = a.inputs.load(ctx, &mut art)?;
    let (data, manifest) = loaded.run(&recipe)?;
    let only = Dataset {
        examples: data
            .examples
            .into_iter()
            .filter(|e| matches!(e.origin, Origin::Augmented { .. }))
            .collect(),
    };
    let mut art = art.with_config(Some(loaded.seed), loaded.config(&a.inputs, &recipe));
    art.write("augmented.jsonl", only.to_jsonl().as_bytes())?;
    art.write("variant.json", pretty(&manifest).as_bytes())?;
    art.finish()?;
    let mut out = format!("{} variants\n", only.len());
    for (m, n) in &manifest.augmented {
        let _ = writeln!(out, "{m}\t{n}");
    }
    for (m, n) in &manifest.dropped {
        let _ = writeln!(out, "dropped {m}\t{n}");
    }
    write_stdout(&out);
    Ok(())
}

/// Sentence vectors, or token sequences for the BiLSTM.
enum Features {
    Vectors(Vec<Vec<f64>>),
    Sequences(Vec<Vec<Vec<f64>>>),
}

impl Features {
    fn as_suite(&self) -> SuiteFeatures<'_> {
        match self {
            Features::Vectors(v) => SuiteFeatures::Vectors(v),
            Features::Sequences(s) => SuiteFeatures::Sequences(s),
        }
    }
}

fn features(
    data: &Dataset,
    provider: &dyn EmbeddingProvider,
    tokens: bool,
) -> Result<Features, CliError> {
    let texts: Vec<String> = data.examples.iter().map(|e| e.text.clone()).collect();
    if tokens {
        Ok(Features::Sequences(par::try_map(&texts, |t| {
            provider
                .embed_tokens(t)
                .map(|seq| seq.iter().map(|v| v.to_f64()).collect())
        })?))
    } else {
        Ok(Features::Vectors(
            provider
                .embed_batch(&texts)?
                .iter()
                .map(|v| v.to_f64())
                .collect(),
        ))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// logreg (default), linear_svm, random_forest, mlp or bilstm
    #[arg(long)]
    pub algorithm: Option<String>,
    /// suite (one binary model per provision), multiclass or binary:<id>
    #[arg(long)]
    pub task: Option<String>,
    /// With --task suite, also train the multi-class model
    #[arg(long)]
    pub with_multiclass: bool,
    /// BiLSTM input: tokens (per-token vectors) or sentence (length-1 sequences)
    #[arg(long, default_value = "tokens")]
    pub sequences: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Model directory (suite) or model file
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let algorithm: Algorithm = pick_or(&a.algorithm, &ctx.cfg.algorithm, "logreg".into())
        .parse()
        .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
    let task_name = pick(&a.task, &ctx.cfg.task, "task")?;
    let hp = a.hp.resolve(ctx)?;
    let seed = seed(&a.seed, ctx);
    let tokens = match a.sequences.as_str() {
        "tokens" => algorithm == Algorithm::Bilstm,
        "sentence" => false,
        s => {
            return Err(CliError::Usage(format!(
                "--sequences {s:?}: expected tokens or sentence"
            )))
        }
    };
    let config = json!({"args": config_json(&a), "algorithm": algorithm, "task": task_name, "hyperparameters": hp});
    let suite = task_name == "suite";
    let mut art = if suite {
        Artifacts::in_dir("train", Some(seed), config, &a.out)?
    } else {
        Artifacts::for_file("train", Some(seed), config, &a.out)?
    };
    let (data, catalog) = a.training.load(ctx, &mut art)?;
    let provider = a.provider.open(ctx, Some(&mut art))?;
    let feats = features(&data, provider.as_dyn(), tokens)?;
    let gold: Vec<BTreeSet<ProvisionId>> = data
        .examples
        .iter()
        .map(|e| e.gold_labels.clone())
        .collect();
    let mut out = String::new();
    if suite {
        let s = train_suite(
            algorithm,
            &catalog,
            feats.as_suite(),
            &gold,
            &hp,
            seed,
            a.with_multiclass,
        )?;
        s.save_dir(&a.out)?;
        for (id, m) in &s.binaries {
            art.record(&format!("{id}.model"))?;
            let _ = writeln!(
                out,
                "{id}\tloss={:.6}\tepochs={}",
                m.meta.final_loss, m.meta.epochs_run
            );
        }
        if let Some(m) = &s.multiclass {
            art.record("multiclass.model")?;
            let _ = writeln!(
                out,
                "multiclass\tloss={:.6}\tepochs={}",
                m.meta.final_loss, m.meta.epochs_run
            );
        }
    } else {
        let task = parse_task(&task_name, &catalog)?;
        let m = fit_task(algorithm, &task, feats.as_suite(), &gold, &hp, seed)?;
        let name = a
            .out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        art.write(&name, &ModelContainer::from_model(&m).to_bytes())?;
        let _ = writeln!(
            out,
            "{}\tloss={:.6}\tepochs={}",
            task_name, m.meta.final_loss, m.meta.epochs_run
        );
    }
    art.finish()?;
    write_stdout(&out);
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct GridArgs {
    /// Training DPAs (ground-truth JSONL)
    #[arg(long = "train", value_name = "FILE")]
    pub train_set: PathBuf,
    /// Validation DPAs (ground-truth JSONL)
    #[arg(long = "val", value_name = "FILE")]
    pub val_set: PathBuf,
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// logreg (default), linear_svm, random_forest, mlp or bilstm
    #[arg(long)]
    pub algorithm: Option<String>,
    /// multiclass or binary:<provision id>
    #[arg(long)]
    pub task: Option<String>,
    /// Grid file (TOML or JSON): batch_sizes, epochs, learning_rates, hidden_sizes, n_trees, max_depths
    #[arg(long, value_name = "FILE")]
    pub grid: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: PathBuf,
}

fn load_grid(path: &std::path::Path) -> Result<HyperGrid, CliError> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| {
        CliError::Core(dpacheck::Error::Validation(format!(
            "grid {}: {e}",
            path.display()
        )))
    })
}

fn matrix(
    path: &std::path::Path,
    catalog_path: &std::path::Path,
    task: &TaskSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureMatrix, CliError> {
    let corpus = load_ground_truth(path, catalog_path)?;
    let items: Vec<(&str, &BTreeSet<ProvisionId>)> = corpus
        .sentences()
        .map(|s| (s.text.as_str(), &s.gold_labels))
        .collect();
    Ok(build_matrix(items, task, provider)?)
}

pub fn grid(ctx: &Ctx, a: GridArgs) -> Result<(), CliError> {
    let algorithm: Algorithm = pick_or(&a.algorithm, &ctx.cfg.algorithm, "logreg".into())
        .parse()
        .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
    let catalog_path = a.catalog.path(ctx)?;
    let catalog = ProvisionCatalog::load(&catalog_path)?;
    let task = parse_task(&pick(&a.task, &ctx.cfg.task, "task")?, &catalog)?;
    let base = a.hp.resolve(ctx)?;
    let grid = load_grid(&a.grid)?;
    let seed = seed(&a.seed, ctx);
    let config = json!({"args": config_json(&a), "task": task, "grid": grid, "base": base});
    let mut art = Artifacts::in_dir("grid", Some(seed), config, &a.out)?;
    for (role, p) in [
        ("train", &a.train_set),
        ("val", &a.val_set),
        ("catalog", &catalog_path),
        ("grid", &a.grid),
    ] {
        art.input(role, p)?;
    }
    let provider = a.provider.open(ctx, Some(&mut art))?;
    let train = matrix(&a.train_set, &catalog_path, &task, provider.as_dyn())?;
    let val = matrix(&a.val_set, &catalog_path, &task, provider.as_dyn())?;
    let board = grid_search(algorithm, &task, &grid, &base, &train, &val, seed)?;
    let table = board.to_tsv();
    art.write("leaderboard.tsv", table.as_bytes())?;
    art.write(
        "best_hyperparameters.json",
        pretty(board.best_hyperparameters()).as_bytes(),
    )?;
    art.finish()?;
    write_stdout(&table);
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct FewshotArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// multiclass or binary:<provision id>
    #[arg(long)]
    pub task: Option<String>,
    /// Examples per class (10) or share of the training set (30%)
    #[arg(long, default_value = "30%")]
    pub shots: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Contrastive pairs drawn per example and kind
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub contrastive_epochs: Option<usize>,
    #[arg(long)]
    pub contrastive_lr: Option<f64>,
    /// Epochs of the classification head
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn fewshot(ctx: &Ctx, a: FewshotArgs) -> Result<(), CliError> {
    let shots: ShotSpec = a
        .shots
        .parse()
        .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
    let seed = seed(&a.seed, ctx);
    let mut cfg = FewShotConfig::default();
    if let Some(hp) = &ctx.cfg.hyperparameters {
        cfg.head = hp.clone();
    }
    cfg.pairs_per_example = a.pairs.unwrap_or(cfg.pairs_per_example);
    cfg.contrastive_epochs = a.contrastive_epochs.unwrap_or(cfg.contrastive_epochs);
    cfg.contrastive_lr = a.contrastive_lr.unwrap_or(cfg.contrastive_lr);
    cfg.head = Hyperparameters {
        epochs: a.head_epochs.unwrap_or(cfg.head.epochs),
        ..cfg.head
    };
    let task_name = pick(&a.task, &ctx.cfg.task, "task")?;
    let config =
        json!({"args": config_json(&a), "task": task_name, "shots": shots, "fewshot": cfg});
    let mut art = Artifacts::for_file("fewshot", Some(seed), config, &a.out)?;
    let (data, catalog) = a.training.load(ctx, &mut art)?;
    let task = parse_task(&task_name, &catalog)?;
    let provider = a.provider.open(ctx, Some(&mut art))?;
    let full = build_matrix(data.items(), &task, provider.as_dyn())?;
    let picked = sample_shots(&full.labels, shots, seed);
    let sub = FeatureMatrix::new(
        picked.iter().map(|&i| full.rows[i].clone()).collect(),
        picked.iter().map(|&i| full.labels[i]).collect(),
        full.n_classes,
    )?;
    let model = fit_fewshot(&sub, &task, &cfg, &shots.to_string(), seed)?;
    let name = a
        .out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    art.write(&name, &model.to_container().to_bytes())?;
    art.finish()?;
    write_stdout(&format!(
        "shots={} examples={} pairs={} shortfalls={} contrastive_loss={:.6}\n",
        model.meta.shots,
        model.meta.n_examples,
        model.meta.n_pairs,
        model.meta.shortfalls,
        model.meta.contrastive_loss
    ));
    Ok(())
}
