//! User-side inference: raw DPA text in, completeness report out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::checker::{aggregate, check_completeness, CompletenessReport, SentencePrediction};
use crate::classifiers::{Algorithm, ClassifierModel, Input, ModelContainer, ModelSuite, TaskMode};
use crate::corpus::{LabeledCorpus, ProvisionCatalog, ProvisionId};
use crate::embedding::EmbeddingProvider;
use crate::fewshot::FewShotModel;
use crate::preprocess::{prepare_document, AliasTable, PreparedSentence};
use crate::{par, Error, Result};

/// Which formulation a suite is asked to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictMode {
    /// Binary models when present, else the multi-class model.
    #[default]
    Auto,
    Binary,
    Multiclass,
}

impl std::str::FromStr for PredictMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PredictMode::Auto),
            "binary" => Ok(PredictMode::Binary),
            "multiclass" => Ok(PredictMode::Multiclass),
            _ => Err(Error::InvalidInput(format!(
                "unknown mode {s:?} (auto, binary, multiclass)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Suite(ModelSuite),
    FewShot(FewShotModel),
}

impl Predictor {
    /// A directory is read as a suite; a file is either a few-shot model or
    /// a single multi-class model.
    pub fn load(path: &Path, catalog: &ProvisionCatalog) -> Result<Self> {
        if path.is_dir() {
            return Ok(Predictor::Suite(ModelSuite::load_dir(path, catalog)?));
        }
        let c = ModelContainer::load(path)?;
        if c.extra.contains_key("fewshot") {
            return Ok(Predictor::FewShot(FewShotModel::from_container(&c)?));
        }
        let m = c.to_model()?;
        if m.task.is_binary() {
            return Err(Error::Validation(format!(
                "{} is a single binary model; pass the suite directory instead",
                path.display()
            )));
        }
        Ok(Predictor::Suite(ModelSuite {
            binaries: Vec::new(),
            multiclass: Some(m),
        }))
    }

    pub fn digest(&self) -> String {
        match self {
            Predictor::Suite(s) => s.digest(),
            Predictor::FewShot(f) => f.digest(),
        }
    }

    fn models(&self) -> Vec<&ClassifierModel> {
        match self {
            Predictor::Suite(s) => s
                .binaries
                .iter()
                .map(|(_, m)| m)
                .chain(s.multiclass.as_ref())
                .collect(),
            Predictor::FewShot(f) => vec![&f.head],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Predictor::FewShot(f) => f.projection.dim,
            _ => self.models().first().map_or(0, |m| m.dim),
        }
    }

    pub fn needs_tokens(&self, mode: PredictMode) -> bool {
        match self {
            Predictor::FewShot(_) => false,
            Predictor::Suite(s) => match Self::suite_uses_binaries(s, mode) {
                Ok(true) => s
                    .binaries
                    .iter()
                    .any(|(_, m)| m.algorithm == Algorithm::Bilstm),
                Ok(false) => s
                    .multiclass
                    .as_ref()
                    .is_some_and(|m| m.algorithm == Algorithm::Bilstm),
                Err(_) => false,
            },
        }
    }

    fn suite_uses_binaries(s: &ModelSuite, mode: PredictMode) -> Result<bool> {
        match mode {
            PredictMode::Auto if !s.binaries.is_empty() => Ok(true),
            PredictMode::Auto | PredictMode::Multiclass if s.multiclass.is_some() => Ok(false),
            PredictMode::Binary if !s.binaries.is_empty() => Ok(true),
            _ => Err(Error::Validation(
                format!("model has no {mode:?} classifiers").to_lowercase(),
            )),
        }
    }

    /// Labels and confidences for one sentence. Binary suites return the
    /// union of positive decisions, each with its positive-class score; a
    /// multi-class model returns at most one label with its argmax score.
    pub fn predict(
        &self,
        vector: &[f64],
        tokens: Option<&[Vec<f64>]>,
        mode: PredictMode,
        threshold: Option<f64>,
    ) -> Result<(BTreeSet<ProvisionId>, BTreeMap<ProvisionId, f64>)> {
        let input = |m: &ClassifierModel| match (m.algorithm, tokens) {
            (Algorithm::Bilstm, Some(t)) => Input::Sequence(t),
            _ => Input::Vector(vector),
        };
        let mut labels = BTreeSet::new();
        let mut scores = BTreeMap::new();
        let mut single = |m: &ClassifierModel, s: Vec<f64>| {
            let t = threshold.unwrap_or_else(|| m.default_threshold());
            let class = m.decide(&s, t);
            if let Some(id) = m.task.provision_of(class) {
                scores.insert(id.clone(), s[class]);
                labels.insert(id);
            }
        };
        match self {
            Predictor::FewShot(f) => single(&f.head, f.predict_scores(vector)?),
            Predictor::Suite(s) => {
                if Self::suite_uses_binaries(s, mode)? {
                    for (_, m) in &s.binaries {
                        let sc = m.predict_scores(input(m))?;
                        single(m, sc);
                    }
                } else {
                    let m = s.multiclass.as_ref().expect("checked above");
                    single(m, m.predict_scores(input(m))?);
                }
            }
        }
        Ok((labels, scores))
    }

    /// Fails early when the predictor cannot serve `catalog`.
    pub fn check_catalog(&self, catalog: &ProvisionCatalog) -> Result<()> {
        for m in self.models() {
            let wanted: Vec<String> = match &m.task.mode {
                TaskMode::Multiclass => crate::classifiers::TaskSpec::multiclass(catalog).classes,
                TaskMode::Binary { provision } => {
                    if catalog.get(provision).is_none() {
                        return Err(Error::UnknownProvision(provision.to_string()));
                    }
                    continue;
                }
            };
            if m.task.classes != wanted {
                return Err(Error::Validation(
                    "model classes do not match the catalog provisions".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub mode: PredictMode,
    /// Overrides each model's default decision threshold.
    pub threshold: Option<f64>,
    /// Confidence floor passed to the aggregation step (0 = off).
    pub floor: f64,
    /// Show normalized instead of original sentence text in reports.
    pub normalized_text: bool,
}

pub struct Pipeline<'a> {
    pub catalog: &'a ProvisionCatalog,
    pub aliases: &'a AliasTable,
    pub provider: &'a dyn EmbeddingProvider,
    pub predictor: &'a Predictor,
    pub options: PipelineOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpaRun {
    pub sentences: Vec<PreparedSentence>,
    pub predictions: Vec<SentencePrediction>,
    pub report: CompletenessReport,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        catalog: &'a ProvisionCatalog,
        aliases: &'a AliasTable,
        provider: &'a dyn EmbeddingProvider,
        predictor: &'a Predictor,
    ) -> Result<Self> {
        predictor.check_catalog(catalog)?;
        let dim = provider.dim()?;
        if dim != predictor.dim() {
            return Err(Error::DimMismatch {
                expected: predictor.dim(),
                actual: dim,
            });
        }
        Ok(Pipeline {
            catalog,
            aliases,
            provider,
            predictor,
            options: PipelineOptions::default(),
        })
    }

    pub fn with_options(mut self, options: PipelineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn predict_sentences(
        &self,
        sentences: &[PreparedSentence],
    ) -> Result<Vec<SentencePrediction>> {
        let tokens = self.predictor.needs_tokens(self.options.mode);
        let texts: Vec<String> = sentences.iter().map(|s| s.normalized.clone()).collect();
        let vectors = self.provider.embed_batch(&texts)?;
        sentences
            .iter()
            .zip(&vectors)
            .map(|(s, v)| {
                let v = v.to_f64();
                let seq = if tokens {
                    Some(
                        self.provider
                            .embed_tokens(&s.normalized)?
                            .iter()
                            .map(|t| t.to_f64())
                            .collect::<Vec<_>>(),
                    )
                } else {
                    None
                };
                let (predicted, scores) = self.predictor.predict(
                    &v,
                    seq.as_deref(),
                    self.options.mode,
                    self.options.threshold,
                )?;
                Ok(SentencePrediction {
                    sentence_index: s.index,
                    text: if self.options.normalized_text {
                        s.normalized.clone()
                    } else {
                        s.original.clone()
                    },
                    predicted,
                    scores,
                })
            })
            .collect()
    }

    pub fn check_sentences(
        &self,
        dpa_id: &str,
        sentences: Vec<PreparedSentence>,
    ) -> Result<DpaRun> {
        let predictions = self.predict_sentences(&sentences)?;
        let agg = aggregate(&predictions, self.catalog, self.options.floor)?;
        let report = check_completeness(dpa_id, &agg, self.catalog, &self.predictor.digest());
        Ok(DpaRun {
            sentences,
            predictions,
            report,
        })
    }

    /// Preprocess, embed, predict, aggregate and check one raw document.
    pub fn run(&self, dpa_id: &str, text: &str) -> Result<DpaRun> {
        self.check_sentences(dpa_id, prepare_document(text, self.aliases))
    }

    /// Runs several documents, in parallel when enabled; output follows
    /// input order.
    pub fn run_many(&self, docs: &[(String, String)]) -> Result<Vec<DpaRun>> {
        par::try_map(docs, |(id, text)| self.run(id, text))
    }

    /// Checks the already-normalized sentences of corpus DPAs.
    pub fn run_corpus(&self, corpus: &LabeledCorpus) -> Result<Vec<DpaRun>> {
        par::try_map(&corpus.dpas, |d| {
            let sentences = d
                .sentences
                .iter()
                .map(|s| PreparedSentence {
                    index: s.sentence_index,
                    original: s.text.clone(),
                    normalized: s.text.clone(),
                    applied: Vec::new(),
                })
                .collect();
            self.check_sentences(&d.dpa_id, sentences)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Status;
    use crate::classifiers::{train_suite, Hyperparameters, SuiteFeatures};
    use crate::synth::{self, SynthConfig};

    struct Fixture {
        bundle: synth::SynthBundle,
        store: crate::embedding::EmbeddingStore,
        aliases: AliasTable,
    }

    fn fixture() -> Fixture {
        let bundle = synth::generate(&SynthConfig::default()).unwrap();
        let mut store = bundle.store().unwrap();
        let (_, normalized) = synth::synthetic_document(184, 3);
        bundle
            .encoder
            .extend_store(&mut store, normalized.iter().map(String::as_str))
            .unwrap();
        Fixture {
            bundle,
            store,
            aliases: AliasTable::parse(&synth::alias_table_text(), "aliases").unwrap(),
        }
    }

    fn train(f: &Fixture, multiclass: bool) -> Predictor {
        let rows: Vec<Vec<f64>> = f
            .bundle
            .corpus
            .sentences()
            .map(|s| f.store.get(&s.text).unwrap().to_f64())
            .collect();
        let gold: Vec<_> = f
            .bundle
            .corpus
            .sentences()
            .map(|s| s.gold_labels.clone())
            .collect();
        let hp = Hyperparameters {
            epochs: 60,
            learning_rate: 1.0,
            ..Hyperparameters::default()
        };
        let suite = train_suite(
            Algorithm::Logreg,
            &f.bundle.corpus.catalog,
            SuiteFeatures::Vectors(&rows),
            &gold,
            &hp,
            5,
            multiclass,
        )
        .unwrap();
        Predictor::Suite(suite)
    }

    #[test]
    fn raw_documents_reproduce_gold_verdicts() {
        let f = fixture();
        let predictor = train(&f, true);
        let cat = &f.bundle.corpus.catalog;
        for mode in [PredictMode::Binary, PredictMode::Multiclass] {
            let p = Pipeline::new(cat, &f.aliases, &f.store, &predictor)
                .unwrap()
                .with_options(PipelineOptions {
                    mode,
                    ..PipelineOptions::default()
                });
            let docs: Vec<(String, String)> = f
                .bundle
                .documents
                .iter()
                .map(|d| (d.dpa_id.clone(), d.text.clone()))
                .collect();
            let runs = p.run_many(&docs).unwrap();
            for (run, dpa) in runs.iter().zip(&f.bundle.corpus.dpas) {
                assert_eq!(
                    run.report.satisfied(),
                    dpa.satisfied(),
                    "{mode:?} {}",
                    dpa.dpa_id
                );
                // reports quote the original text with party names
                let s = run
                    .report
                    .provisions
                    .iter()
                    .flat_map(|v| &v.supporting)
                    .next()
                    .unwrap();
                assert!(!s.text.contains("PROCESSOR"));
            }
            let corpus_runs = p.run_corpus(&f.bundle.corpus).unwrap();
            assert_eq!(
                corpus_runs
                    .iter()
                    .map(|r| r.report.satisfied())
                    .collect::<Vec<_>>(),
                runs.iter()
                    .map(|r| r.report.satisfied())
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn multiclass_predicts_at_most_one_label() {
        let f = fixture();
        let predictor = train(&f, true);
        let p = Pipeline::new(&f.bundle.corpus.catalog, &f.aliases, &f.store, &predictor)
            .unwrap()
            .with_options(PipelineOptions {
                mode: PredictMode::Multiclass,
                ..PipelineOptions::default()
            });
        let (text, _) = synth::synthetic_document(184, 3);
        let run = p.run("big", &text).unwrap();
        assert_eq!(run.sentences.len(), 184);
        assert!(run.predictions.iter().all(|x| x.predicted.len() <= 1));
        assert!(run.report.summary.complete);
        assert!(run
            .report
            .provisions
            .iter()
            .all(|v| v.status == Status::Satisfied));
    }

    #[test]
    fn model_file_and_directory_loading() {
        let f = fixture();
        let Predictor::Suite(suite) = train(&f, true) else {
            unreachable!()
        };
        let cat = &f.bundle.corpus.catalog;
        let dir = tempfile::tempdir().unwrap();
        suite.save_dir(dir.path()).unwrap();
        assert_eq!(
            Predictor::load(dir.path(), cat).unwrap(),
            Predictor::Suite(suite.clone())
        );
        let multi = Predictor::load(&dir.path().join("multiclass.model"), cat).unwrap();
        assert!(matches!(&multi, Predictor::Suite(s) if s.binaries.is_empty()));
        assert!(Predictor::load(&dir.path().join("PO1.model"), cat).is_err());
        assert!(multi
            .predict(&vec![0.0; 32], None, PredictMode::Binary, None)
            .is_err());
    }

    #[test]
    fn mismatched_store_or_catalog_is_rejected() {
        let f = fixture();
        let predictor = train(&f, false);
        let small = crate::embedding::EmbeddingStore::new(8, "x");
        assert!(matches!(
            Pipeline::new(&f.bundle.corpus.catalog, &f.aliases, &small, &predictor),
            Err(Error::DimMismatch { .. })
        ));
        let other = crate::corpus::tests::catalog(3);
        assert!(Pipeline::new(&other, &f.aliases, &f.store, &predictor).is_err());
        let p = Pipeline::new(&f.bundle.corpus.catalog, &f.aliases, &f.store, &predictor).unwrap();
        assert!(matches!(
            p.run("x", "A sentence nobody embedded."),
            Err(Error::EmbeddingNotFound { .. })
        ));
    }
}
