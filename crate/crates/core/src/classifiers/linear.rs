use serde::{Deserialize, Serialize};

use super::train::{concat, minibatch_descent, scatter, FlatParams};
use super::{
    require_all_classes, sigmoid, softmax, Algorithm, ClassifierModel, FeatureMatrix,
    Hyperparameters, ModelParams, TaskSpec, TrainingMeta,
};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    /// Cross-entropy with a sigmoid (binary) or softmax (multi-class) head.
    Logreg,
    /// L2-regularized hinge loss, one-vs-rest for multi-class.
    Svm,
}

/// Weights are `outputs x n_features`, row-major. Binary tasks have a single
/// output row scoring the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub kind: LinearKind,
    pub n_features: usize,
    pub n_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(kind: LinearKind, n_features: usize, n_classes: usize) -> Self {
        let outputs = if n_classes == 2 { 1 } else { n_classes };
        LinearParams {
            kind,
            n_features,
            n_classes,
            weights: vec![0.0; outputs * n_features],
            bias: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|k| {
                let row = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[k]
            })
            .collect()
    }

    /// Probabilities (logreg) or margins (svm) per class.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        match (self.kind, self.outputs()) {
            (LinearKind::Logreg, 1) => {
                let p = sigmoid(z[0]);
                vec![p, 1.0 - p]
            }
            (LinearKind::Logreg, _) => softmax(&z),
            (LinearKind::Svm, 1) => vec![z[0], -z[0]],
            (LinearKind::Svm, _) => z,
        }
    }

    /// Mean batch loss and its gradient (flat, weights then bias).
    pub fn loss_and_grad(&self, rows: &[&[f64]], labels: &[usize], svm_l2: f64) -> (f64, Vec<f64>) {
        let d = self.n_features;
        let n = rows.len() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let mut loss = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let z = self.logits(x);
            // dloss/dz for this example
            let dz: Vec<f64> = match (self.kind, self.outputs()) {
                (LinearKind::Logreg, 1) => {
                    let t = if y == 0 { 1.0 } else { 0.0 };
                    loss += softplus(z[0]) - t * z[0];
                    vec![sigmoid(z[0]) - t]
                }
                (LinearKind::Logreg, _) => {
                    let p = softmax(&z);
                    loss += -p[y].ln();
                    p.iter()
                        .enumerate()
                        .map(|(k, pk)| pk - if k == y { 1.0 } else { 0.0 })
                        .collect()
                }
                (LinearKind::Svm, outputs) => (0..outputs)
                    .map(|k| {
                        let positive = if outputs == 1 { y == 0 } else { y == k };
                        let sign = if positive { 1.0 } else { -1.0 };
                        let slack = 1.0 - sign * z[k];
                        if slack > 0.0 {
                            loss += slack;
                            -sign
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            };
            for (k, g) in dz.iter().enumerate() {
                for (gwj, xj) in gw[k * d..(k + 1) * d].iter_mut().zip(x.iter()) {
                    *gwj += g * xj;
                }
                gb[k] += g;
            }
        }
        loss /= n;
        gw.iter_mut().for_each(|g| *g /= n);
        gb.iter_mut().for_each(|g| *g /= n);
        if self.kind == LinearKind::Svm && svm_l2 > 0.0 {
            loss += 0.5 * svm_l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
            for (g, w) in gw.iter_mut().zip(&self.weights) {
                *g += svm_l2 * w;
            }
        }
        gw.extend(gb);
        (loss, gw)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl FlatParams for LinearParams {
    fn flat(&self) -> Vec<f64> {
        concat(&[&self.weights, &self.bias])
    }

    fn set_flat(&mut self, values: &[f64]) {
        scatter(values, &mut [&mut self.weights, &mut self.bias]);
    }
}

/// Logistic regression or linear SVM by mini-batch gradient descent from
/// zero weights.
pub fn fit_linear(
    kind: LinearKind,
    task: &TaskSpec,
    data: &FeatureMatrix,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    hp.validate()?;
    check_task(task, data)?;
    let mut params = LinearParams::zeros(kind, data.dim(), task.n_classes());
    let mut rng = rng::from_seed(seed);
    let outcome = minibatch_descent(&mut params, data.len(), hp, &mut rng, |p, batch, _| {
        let rows: Vec<&[f64]> = batch.iter().map(|&i| data.rows[i].as_slice()).collect();
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        p.loss_and_grad(&rows, &labels, hp.svm_l2)
    })?;
    Ok(ClassifierModel {
        algorithm: match kind {
            LinearKind::Logreg => Algorithm::Logreg,
            LinearKind::Svm => Algorithm::LinearSvm,
        },
        task: task.clone(),
        dim: data.dim(),
        meta: TrainingMeta {
            seed,
            hyperparameters: hp.clone(),
            epochs_run: outcome.epochs_run,
            final_loss: outcome.final_loss,
        },
        params: ModelParams::Linear(params),
    })
}

pub(crate) fn check_task(task: &TaskSpec, data: &FeatureMatrix) -> Result<()> {
    if data.n_classes != task.n_classes() {
        return Err(Error::InvalidInput(format!(
            "data has {} classes, task has {}",
            data.n_classes,
            task.n_classes()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    require_all_classes(task, &data.labels)
}
