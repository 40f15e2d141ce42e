use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::Args;
use dpacheck::checker::{
    aggregate, check_completeness, render_report, CompletenessReport, ReportFormat,
    SentencePrediction,
};
use dpacheck::classifiers::{fit_task, Algorithm, SuiteFeatures, TaskSpec};
use dpacheck::corpus::{ProvisionCatalog, ProvisionId};
use dpacheck::eval::{
    benchmark_runtime, cohen_kappa, compute_metrics, dpa_confusion, kappa_band, Perspective, Stage,
};
use dpacheck::pipeline::{Pipeline, PipelineOptions, PredictMode, Predictor};
use dpacheck::preprocess::{prepare_document, AliasTable, PreparedSentence};
use serde::Serialize;

use crate::common::{
    config_json, doc_id, read_text, write_stdout, CatalogArg, CorpusArgs, Provider, ProviderArgs,
};
use crate::config::{pick, pick_or};
use crate::data::load_aliases;
use crate::manifest::Artifacts;
use crate::{CliError, Ctx};

/// Model, catalog, embeddings and decision options.
#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    /// Suite directory, multi-class model file or few-shot model file
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// auto, binary or multiclass
    #[arg(long)]
    pub mode: Option<String>,
    /// Decision threshold for binary models (default per algorithm)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Ignore predictions scored below this value (0 = off)
    #[arg(long, default_value_t = 0.0)]
    pub floor: f64,
}

struct Loaded {
    catalog: ProvisionCatalog,
    provider: Provider,
    predictor: Predictor,
    options: PipelineOptions,
}

impl ModelArgs {
    fn load(&self, ctx: &Ctx, art: Option<&mut Artifacts>) -> Result<Loaded, CliError> {
        let model = pick(&self.model, &ctx.cfg.model, "model")?;
        let catalog_path = self.catalog.path(ctx)?;
        let mode: PredictMode = pick_or(&self.mode, &ctx.cfg.mode, "auto".into())
            .parse()
            .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
        let catalog = ProvisionCatalog::load(&catalog_path)?;
        let predictor = Predictor::load(&model, &catalog)?;
        let provider = match art {
            Some(a) => {
                a.input("model", &model)?;
                a.input("catalog", &catalog_path)?;
                self.provider.open(ctx, Some(a))?
            }
            None => self.provider.open(ctx, None)?,
        };
        Ok(Loaded {
            catalog,
            provider,
            predictor,
            options: PipelineOptions {
                mode,
                threshold: self.threshold,
                floor: self.floor,
                normalized_text: false,
            },
        })
    }
}

impl Loaded {
    fn pipeline<'a>(&'a self, aliases: &'a AliasTable) -> Result<Pipeline<'a>, CliError> {
        Ok(Pipeline::new(
            &self.catalog,
            aliases,
            self.provider.as_dyn(),
            &self.predictor,
        )?
        .with_options(self.options.clone()))
    }
}

fn read_docs(paths: &[PathBuf]) -> Result<Vec<(String, String)>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("missing --dpa".into()));
    }
    paths
        .iter()
        .map(|p| Ok((doc_id(p), read_text(p)?)))
        .collect()
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// DPA text file; repeatable
    #[arg(long = "dpa", value_name = "FILE")]
    pub dpas: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Alias table (pattern TAB PROCESSOR|CONTROLLER)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    /// Write JSONL here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    dpa_id: &'a str,
    normalized: &'a str,
    #[serde(flatten)]
    prediction: &'a SentencePrediction,
}

pub fn predict(ctx: &Ctx, a: PredictArgs) -> Result<(), CliError> {
    let docs = read_docs(&a.dpas)?;
    let (aliases, _) = load_aliases(&a.aliases, ctx)?;
    let loaded = a.model.load(ctx, None)?;
    let runs = loaded.pipeline(&aliases)?.run_many(&docs)?;
    let mut out = String::new();
    for ((id, _), run) in docs.iter().zip(&runs) {
        for (s, p) in run.sentences.iter().zip(&run.predictions) {
            let rec = PredictionRecord {
                dpa_id: id,
                normalized: &s.normalized,
                prediction: p,
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializes"));
            out.push('\n');
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, out).map_err(|e| CliError::io(p, e))?,
        None => write_stdout(&out),
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct CheckArgs {
    /// DPA text file; repeatable
    #[arg(long = "dpa", value_name = "FILE")]
    pub dpas: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Alias table (pattern TAB PROCESSOR|CONTROLLER)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    /// human or machine
    #[arg(long, default_value = "human")]
    pub format: String,
    /// Quote normalized instead of original sentences
    #[arg(long)]
    pub normalized_text: bool,
    /// Also write one report per DPA into this directory
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn check(ctx: &Ctx, a: CheckArgs) -> Result<(), CliError> {
    let format: ReportFormat = a
        .format
        .parse()
        .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
    let docs = read_docs(&a.dpas)?;
    let (aliases, alias_path) = load_aliases(&a.aliases, ctx)?;
    let mut art = match &a.out {
        Some(dir) => Some(Artifacts::in_dir("check", None, config_json(&a), dir)?),
        None => None,
    };
    let mut loaded = a.model.load(ctx, art.as_mut())?;
    loaded.options.normalized_text = a.normalized_text;
    let runs = loaded.pipeline(&aliases)?.run_many(&docs)?;
    let mut out = String::new();
    for (i, run) in runs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let text = render_report(&run.report, format);
        out.push_str(&text);
        if let Some(art) = art.as_mut() {
            let ext = if format == ReportFormat::Machine {
                "json"
            } else {
                "txt"
            };
            art.write(
                &format!("{}.report.{ext}", run.report.dpa_id),
                text.as_bytes(),
            )?;
        }
    }
    if let Some(mut art) = art {
        for p in &a.dpas {
            art.input(&format!("dpa:{}", doc_id(p)), p)?;
        }
        if let Some(p) = &alias_path {
            art.input("aliases", p)?;
        }
        art.finish()?;
    }
    write_stdout(&out);
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Gold ground-truth sentences (JSONL) of the evaluation DPAs
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// F-beta weight of recall
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    let corpus_args = CorpusArgs {
        corpus: a.corpus.clone(),
        catalog: a.model.catalog.clone(),
    };
    let mut art = match &a.out {
        Some(dir) => Some(Artifacts::in_dir("evaluate", None, config_json(&a), dir)?),
        None => None,
    };
    let corpus = corpus_args.load(ctx, art.as_mut())?;
    let loaded = a.model.load(ctx, art.as_mut())?;
    let aliases = AliasTable::default();
    let runs = loaded.pipeline(&aliases)?.run_corpus(&corpus)?;
    let gold: BTreeMap<String, BTreeSet<ProvisionId>> = corpus
        .dpas
        .iter()
        .map(|d| (d.dpa_id.clone(), d.satisfied()))
        .collect();
    let predicted: BTreeMap<String, BTreeSet<ProvisionId>> = runs
        .iter()
        .map(|r| (r.report.dpa_id.clone(), r.report.satisfied()))
        .collect();
    let conf = dpa_confusion(&gold, &predicted, &loaded.catalog)?;
    let m = compute_metrics(&conf, a.beta)?;
    let table = m.to_tsv();
    let summary = serde_json::to_string_pretty(&m).expect("serializes") + "\n";
    if let Some(mut art) = art {
        art.write("metrics.tsv", table.as_bytes())?;
        art.write("metrics.json", summary.as_bytes())?;
        let verdicts = serde_json::to_string_pretty(&predicted).expect("serializes") + "\n";
        art.write("predicted.json", verdicts.as_bytes())?;
        art.finish()?;
    }
    write_stdout(if a.json { &summary } else { &table });
    Ok(())
}

#[derive(Args, Debug)]
pub struct KappaArgs {
    /// First annotator: one label per line
    #[arg(long = "a", value_name = "FILE")]
    pub first: PathBuf,
    /// Second annotator: one label per line
    #[arg(long = "b", value_name = "FILE")]
    pub second: PathBuf,
}

pub fn kappa(_ctx: &Ctx, a: KappaArgs) -> Result<(), CliError> {
    let read = |p: &PathBuf| -> Result<Vec<String>, CliError> {
        Ok(read_text(p)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect())
    };
    let (x, y) = (read(&a.first)?, read(&a.second)?);
    let k = cohen_kappa(&x, &y)?;
    write_stdout(&format!(
        "items\t{}\nkappa\t{k:.4}\nband\t{}\n",
        x.len(),
        kappa_band(k)
    ));
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// DPA text file to push through the pipeline
    #[arg(long, value_name = "FILE")]
    pub dpa: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Alias table (pattern TAB PROCESSOR|CONTROLLER)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    /// Also time training a multi-class model on this corpus (developer view)
    #[arg(long, value_name = "FILE")]
    pub train_corpus: Option<PathBuf>,
    /// Algorithm for the developer-view training stage
    #[arg(long, default_value = "logreg")]
    pub algorithm: String,
    /// Worker threads while timing
    #[arg(long, default_value_t = 1)]
    pub bench_threads: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Default)]
struct BenchState {
    sentences: Vec<PreparedSentence>,
    vectors: Vec<Vec<f64>>,
    predictions: Vec<SentencePrediction>,
    report: Option<CompletenessReport>,
    rendered: String,
}

pub fn bench(ctx: &Ctx, a: BenchArgs) -> Result<(), CliError> {
    let text = read_text(&a.dpa)?;
    let (aliases, _) = load_aliases(&a.aliases, ctx)?;
    let loaded = a.model.load(ctx, None)?;
    // validates catalog and dimensions up front
    loaded.pipeline(&aliases)?;
    if loaded.predictor.needs_tokens(loaded.options.mode) {
        return Err(CliError::Usage(
            "bench times sentence-vector models only".into(),
        ));
    }
    let dpa_id = doc_id(&a.dpa);
    let n = prepare_document(&text, &aliases).len();
    let state = Mutex::new(BenchState::default());
    let provider = loaded.provider.as_dyn();
    let digest = loaded.predictor.digest();
    let train_data = match &a.train_corpus {
        Some(p) => {
            let corpus = dpacheck::corpus::load_ground_truth(p, &a.model.catalog.path(ctx)?)?;
            let algorithm: Algorithm = a
                .algorithm
                .parse()
                .map_err(|e: dpacheck::Error| CliError::Usage(e.to_string()))?;
            let texts: Vec<String> = corpus.sentences().map(|s| s.text.clone()).collect();
            let rows: Vec<Vec<f64>> = provider
                .embed_batch(&texts)?
                .iter()
                .map(|v| v.to_f64())
                .collect();
            let gold: Vec<BTreeSet<ProvisionId>> =
                corpus.sentences().map(|s| s.gold_labels.clone()).collect();
            Some((algorithm, rows, gold, corpus.catalog))
        }
        None => None,
    };
    let mut stages = Vec::new();
    if let Some((algorithm, rows, gold, catalog)) = &train_data {
        let hp = ctx.cfg.hyperparameters.clone().unwrap_or_default();
        stages.push(Stage::new(
            "train multiclass",
            Perspective::Developer,
            rows.len(),
            move || {
                let task = TaskSpec::multiclass(catalog);
                fit_task(
                    *algorithm,
                    &task,
                    SuiteFeatures::Vectors(rows),
                    gold,
                    &hp,
                    0,
                )
                .map(|_| ())
            },
        ));
    }
    stages.push(Stage::new("preprocess", Perspective::User, n, || {
        state.lock().unwrap().sentences = prepare_document(&text, &aliases);
        Ok(())
    }));
    stages.push(Stage::new("embed lookup", Perspective::User, n, || {
        let mut s = state.lock().unwrap();
        let texts: Vec<String> = s.sentences.iter().map(|x| x.normalized.clone()).collect();
        s.vectors = provider
            .embed_batch(&texts)?
            .iter()
            .map(|v| v.to_f64())
            .collect();
        Ok(())
    }));
    stages.push(Stage::new("predict", Perspective::User, n, || {
        let mut s = state.lock().unwrap();
        let mut preds = Vec::with_capacity(s.vectors.len());
        for (x, v) in s.sentences.iter().zip(&s.vectors) {
            let (predicted, scores) =
                loaded
                    .predictor
                    .predict(v, None, loaded.options.mode, loaded.options.threshold)?;
            preds.push(SentencePrediction {
                sentence_index: x.index,
                text: x.original.clone(),
                predicted,
                scores,
            });
        }
        s.predictions = preds;
        Ok(())
    }));
    stages.push(Stage::new("check", Perspective::User, n, || {
        let mut s = state.lock().unwrap();
        let agg = aggregate(&s.predictions, &loaded.catalog, loaded.options.floor)?;
        s.report = Some(check_completeness(&dpa_id, &agg, &loaded.catalog, &digest));
        Ok(())
    }));
    stages.push(Stage::new("render", Perspective::User, n, || {
        let mut s = state.lock().unwrap();
        let r = render_report(s.report.as_ref().expect("check ran"), ReportFormat::Human);
        s.rendered = r;
        Ok(())
    }));
    let table = benchmark_runtime(stages, a.bench_threads)?;
    if a.json {
        write_stdout(&(serde_json::to_string_pretty(&table).expect("serializes") + "\n"));
    } else {
        let mut out = table.to_tsv();
        let s = state.lock().unwrap();
        if let Some(r) = &s.report {
            let _ = writeln!(out, "# {} sentences, complete={}", n, r.summary.complete);
        }
        write_stdout(&out);
    }
    Ok(())
}
