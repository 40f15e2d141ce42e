//! Native classifiers over embedding features: logistic regression, linear
//! SVM, random forest, MLP and BiLSTM, for the binary (one model per
//! provision) and multi-class (provisions plus `other`) formulations.

mod bilstm;
mod data;
mod forest;
mod grid;
mod io;
mod linear;
mod mlp;
mod suite;
mod train;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bilstm::{BiLstmParams, LstmCache, LstmDirection};
pub use data::{build_matrix, build_sequences, FeatureMatrix, SequenceData, SequenceMode};
pub use forest::{gini, ForestParams, Node, Tree};
pub use grid::{grid_search, grid_search_with, validation_f2, GridCell, HyperGrid, Leaderboard};
pub use io::{Blob, ModelContainer, MODEL_MAGIC, MODEL_VERSION};
pub use linear::{LinearKind, LinearParams};
pub use mlp::MlpParams;
pub use suite::{fit_task, train_suite, ModelSuite, SuiteFeatures};
pub(crate) use train::minibatch_descent;
pub use train::FlatParams;

use crate::corpus::{ProvisionCatalog, ProvisionId};
use crate::{Error, Result};

/// Name of the trailing class holding sentences that satisfy no provision.
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Logreg,
    LinearSvm,
    RandomForest,
    Mlp,
    Bilstm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Logreg,
        Algorithm::LinearSvm,
        Algorithm::RandomForest,
        Algorithm::Mlp,
        Algorithm::Bilstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Logreg => "logreg",
            Algorithm::LinearSvm => "linear_svm",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Mlp => "mlp",
            Algorithm::Bilstm => "bilstm",
        }
    }

    /// Whether scores are probabilities (otherwise SVM margins).
    pub fn is_probabilistic(self) -> bool {
        self != Algorithm::LinearSvm
    }

    pub fn default_threshold(self) -> f64 {
        if self.is_probabilistic() {
            0.5
        } else {
            0.0
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| {
                a.as_str() == s
                    || (s == "lr" && *a == Algorithm::Logreg)
                    || (s == "svm" && *a == Algorithm::LinearSvm)
                    || (s == "rf" && *a == Algorithm::RandomForest)
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TaskMode {
    Binary { provision: ProvisionId },
    Multiclass,
}

/// Classification task. Binary classes are `[provision, other]` (positive
/// class index 0); multi-class classes are the catalog ids in order followed
/// by `other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub mode: TaskMode,
    pub classes: Vec<String>,
}

impl TaskSpec {
    pub fn binary(provision: ProvisionId) -> Self {
        TaskSpec {
            classes: vec![provision.to_string(), OTHER.to_string()],
            mode: TaskMode::Binary { provision },
        }
    }

    pub fn multiclass(catalog: &ProvisionCatalog) -> Self {
        let mut classes: Vec<String> = catalog.ids().map(|p| p.to_string()).collect();
        classes.push(OTHER.to_string());
        TaskSpec {
            mode: TaskMode::Multiclass,
            classes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.mode, TaskMode::Binary { .. })
    }

    pub fn other_index(&self) -> usize {
        self.classes.len() - 1
    }

    /// Class of a sentence with the given gold labels. A multi-labelled
    /// sentence takes its first label in catalog order in multi-class mode.
    pub fn class_of(&self, labels: &BTreeSet<ProvisionId>) -> usize {
        match &self.mode {
            TaskMode::Binary { provision } => {
                if labels.contains(provision) {
                    0
                } else {
                    1
                }
            }
            TaskMode::Multiclass => self.classes[..self.other_index()]
                .iter()
                .position(|c| labels.iter().any(|l| l.as_str() == c))
                .unwrap_or(self.other_index()),
        }
    }

    /// Provision predicted by class index `class`, `None` for `other`.
    pub fn provision_of(&self, class: usize) -> Option<ProvisionId> {
        if class >= self.other_index() {
            return None;
        }
        ProvisionId::new(self.classes[class].clone()).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// L2 strength for the linear SVM.
    pub svm_l2: f64,
    pub hidden_sizes: Vec<usize>,
    pub lstm_hidden: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            batch_size: 32,
            epochs: 50,
            learning_rate: 0.01,
            dropout: 0.3,
            svm_l2: 1e-3,
            hidden_sizes: vec![64],
            lstm_hidden: 32,
            n_trees: 100,
            max_depth: 12,
            min_leaf: 1,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("hyperparameters: {m}")));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.svm_l2 < 0.0 {
            return bad("svm_l2 must be non-negative");
        }
        if self.hidden_sizes.contains(&0) || self.lstm_hidden == 0 {
            return bad("hidden sizes must be positive");
        }
        if self.n_trees == 0 || self.min_leaf == 0 {
            return bad("n_trees and min_leaf must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub epochs_run: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Linear(LinearParams),
    Forest(ForestParams),
    Mlp(MlpParams),
    BiLstm(BiLstmParams),
}

/// Input to a trained model: one sentence vector or a token-vector sequence.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Vector(&'a [f64]),
    Sequence(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub algorithm: Algorithm,
    pub task: TaskSpec,
    pub dim: usize,
    pub meta: TrainingMeta,
    pub params: ModelParams,
}

impl ClassifierModel {
    /// Per-class scores: probabilities summing to one, or SVM margins.
    pub fn predict_scores(&self, input: Input<'_>) -> Result<Vec<f64>> {
        let check = |v: &[f64]| {
            if v.len() != self.dim {
                Err(Error::DimMismatch {
                    expected: self.dim,
                    actual: v.len(),
                })
            } else {
                Ok(())
            }
        };
        match (&self.params, input) {
            (ModelParams::BiLstm(p), Input::Sequence(seq)) => {
                if seq.is_empty() {
                    return Err(Error::InvalidInput("empty token sequence".into()));
                }
                for v in seq {
                    check(v)?;
                }
                Ok(p.predict(seq))
            }
            (ModelParams::BiLstm(p), Input::Vector(v)) => {
                check(v)?;
                Ok(p.predict(&[v.to_vec()]))
            }
            (_, Input::Sequence(_)) => Err(Error::Capability(format!(
                "{} takes sentence vectors, not token sequences",
                self.algorithm
            ))),
            (ModelParams::Linear(p), Input::Vector(v)) => {
                check(v)?;
                Ok(p.scores(v))
            }
            (ModelParams::Forest(p), Input::Vector(v)) => {
                check(v)?;
                Ok(p.predict(v))
            }
            (ModelParams::Mlp(p), Input::Vector(v)) => {
                check(v)?;
                Ok(p.predict(v))
            }
        }
    }

    /// Decided class: binary positive (index 0) iff the positive score is
    /// above `threshold`; multi-class argmax with ties to the lowest index.
    pub fn decide(&self, scores: &[f64], threshold: f64) -> usize {
        if self.task.is_binary() {
            if scores[0] > threshold {
                0
            } else {
                1
            }
        } else {
            argmax(scores)
        }
    }

    pub fn predict_class(&self, input: Input<'_>, threshold: f64) -> Result<usize> {
        let scores = self.predict_scores(input)?;
        Ok(self.decide(&scores, threshold))
    }

    pub fn default_threshold(&self) -> f64 {
        self.algorithm.default_threshold()
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trains `algorithm` on vector features.
pub fn fit(
    algorithm: Algorithm,
    task: &TaskSpec,
    data: &FeatureMatrix,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    match algorithm {
        Algorithm::Logreg => linear::fit_linear(LinearKind::Logreg, task, data, hp, seed),
        Algorithm::LinearSvm => linear::fit_linear(LinearKind::Svm, task, data, hp, seed),
        Algorithm::RandomForest => forest::fit_forest(task, data, hp, seed),
        Algorithm::Mlp => mlp::fit_mlp(task, data, hp, seed),
        Algorithm::Bilstm => bilstm::fit_bilstm(task, &SequenceData::from_vectors(data), hp, seed),
    }
}

pub use bilstm::fit_bilstm;
pub use forest::fit_forest;
pub use linear::fit_linear;
pub use mlp::fit_mlp;

/// Errors unless every class of `task` has at least one example.
pub(crate) fn require_all_classes(task: &TaskSpec, labels: &[usize]) -> Result<()> {
    let mut seen = vec![false; task.n_classes()];
    for &l in labels {
        if l >= seen.len() {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {} classes",
                seen.len()
            )));
        }
        seen[l] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(Error::MissingClass(task.classes[i].clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::catalog;

    #[test]
    fn task_classes() {
        let cat = catalog(19);
        let mc = TaskSpec::multiclass(&cat);
        assert_eq!(mc.n_classes(), 20);
        assert_eq!(mc.classes.last().unwrap(), OTHER);
        let p3 = ProvisionId::new("PO3").unwrap();
        let p7 = ProvisionId::new("PO7").unwrap();
        assert_eq!(mc.class_of(&BTreeSet::from([p7.clone(), p3.clone()])), 2);
        assert_eq!(mc.class_of(&BTreeSet::new()), 19);
        let b = TaskSpec::binary(p7.clone());
        assert_eq!(b.n_classes(), 2);
        assert_eq!(b.class_of(&BTreeSet::from([p7])), 0);
        assert_eq!(b.class_of(&BTreeSet::from([p3])), 1);
        assert_eq!(mc.provision_of(19), None);
        assert_eq!(mc.provision_of(0).unwrap().as_str(), "PO1");
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&[0.7; 20]);
        for x in p {
            assert!((x - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = z.iter().map(|x| x + 17.0).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("svm".parse::<Algorithm>().unwrap(), Algorithm::LinearSvm);
        assert!("xgboost".parse::<Algorithm>().is_err());
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(Hyperparameters::default().validate().is_ok());
        let bad = Hyperparameters {
            dropout: 1.0,
            ..Hyperparameters::default()
        };
        assert!(bad.validate().is_err());
    }
}
