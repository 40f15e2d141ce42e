use rand::Rng as _;

use super::linear::check_task;
use super::train::{minibatch_descent, FlatParams};
use super::{
    softmax, Algorithm, ClassifierModel, FeatureMatrix, Hyperparameters, ModelParams, TaskSpec,
    TrainingMeta,
};
use crate::rng::{self, Rng};
use crate::Result;

/// Fully connected ReLU network with a softmax output. Layer `l` maps
/// `sizes[l]` inputs to `sizes[l + 1]` outputs; weights are row-major
/// `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-example dropout masks, one per hidden layer (already scaled).
pub type DropoutMasks = Vec<Vec<f64>>;

struct Trace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.len() - 1;
        MlpParams {
            sizes: sizes.to_vec(),
            weights: (0..layers)
                .map(|l| vec![0.0; sizes[l] * sizes[l + 1]])
                .collect(),
            biases: (0..layers).map(|l| vec![0.0; sizes[l + 1]]).collect(),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Self {
        let mut p = Self::zeros(sizes);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            w.iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
        }
        p
    }

    fn layers(&self) -> usize {
        self.weights.len()
    }

    fn forward(&self, x: &[f64], masks: Option<&DropoutMasks>) -> Trace {
        let mut act = vec![x.to_vec()];
        let mut pre = Vec::new();
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = act.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    self.weights[l][o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(input)
                        .map(|(w, a)| w * a)
                        .sum::<f64>()
                        + self.biases[l][o]
                })
                .collect();
            if l + 1 == self.layers() {
                return Trace {
                    pre,
                    act,
                    logits: z,
                };
            }
            let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            if let Some(m) = masks {
                a.iter_mut().zip(&m[l]).for_each(|(v, k)| *v *= k);
            }
            pre.push(z);
            act.push(a);
        }
        unreachable!("network has at least one layer")
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.forward(x, None).logits)
    }

    /// Mean cross-entropy over the batch and its flat gradient.
    pub fn loss_and_grad(
        &self,
        rows: &[&[f64]],
        labels: &[usize],
        masks: Option<&[DropoutMasks]>,
    ) -> (f64, Vec<f64>) {
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;
        for (i, (x, &y)) in rows.iter().zip(labels).enumerate() {
            let mask = masks.map(|m| &m[i]);
            let t = self.forward(x, mask);
            let p = softmax(&t.logits);
            loss -= p[y].ln();
            let mut delta: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, pk)| pk - if k == y { 1.0 } else { 0.0 })
                .collect();
            for l in (0..self.layers()).rev() {
                let n_in = self.sizes[l];
                let input = &t.act[l];
                for (o, d) in delta.iter().enumerate() {
                    gb[l][o] += d;
                    for (g, a) in gw[l][o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut back = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (b, w) in back
                        .iter_mut()
                        .zip(&self.weights[l][o * n_in..(o + 1) * n_in])
                    {
                        *b += d * w;
                    }
                }
                let z = &t.pre[l - 1];
                for (j, b) in back.iter_mut().enumerate() {
                    let keep = mask.map_or(1.0, |m| m[l - 1][j]);
                    *b *= if z[j] > 0.0 { keep } else { 0.0 };
                }
                delta = back;
            }
        }
        let n = rows.len() as f64;
        let mut flat = Vec::new();
        for g in gw.iter().chain(gb.iter()) {
            flat.extend(g.iter().map(|v| v / n));
        }
        (loss / n, flat)
    }

    fn sample_masks(&self, dropout: f64, rng: &mut Rng) -> DropoutMasks {
        let scale = 1.0 / (1.0 - dropout);
        self.sizes[1..self.sizes.len() - 1]
            .iter()
            .map(|&h| {
                (0..h)
                    .map(|_| {
                        if rng.random::<f64>() < dropout {
                            0.0
                        } else {
                            scale
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

impl FlatParams for MlpParams {
    fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            let n = v.len();
            v.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        assert_eq!(at, values.len(), "flat parameter length mismatch");
    }
}

/// MLP with dropout on hidden activations during training only.
pub fn fit_mlp(
    task: &TaskSpec,
    data: &FeatureMatrix,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    hp.validate()?;
    check_task(task, data)?;
    let mut sizes = vec![data.dim()];
    sizes.extend(&hp.hidden_sizes);
    sizes.push(task.n_classes());
    let mut rng = rng::from_seed(seed);
    let mut params = MlpParams::init(&sizes, &mut rng);
    let outcome = minibatch_descent(&mut params, data.len(), hp, &mut rng, |p, batch, rng| {
        let rows: Vec<&[f64]> = batch.iter().map(|&i| data.rows[i].as_slice()).collect();
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        if hp.dropout > 0.0 {
            let masks: Vec<DropoutMasks> = batch
                .iter()
                .map(|_| p.sample_masks(hp.dropout, rng))
                .collect();
            p.loss_and_grad(&rows, &labels, Some(&masks))
        } else {
            p.loss_and_grad(&rows, &labels, None)
        }
    })?;
    Ok(ClassifierModel {
        algorithm: Algorithm::Mlp,
        task: task.clone(),
        dim: data.dim(),
        meta: TrainingMeta {
            seed,
            hyperparameters: hp.clone(),
            epochs_run: outcome.epochs_run,
            final_loss: outcome.final_loss,
        },
        params: ModelParams::Mlp(params),
    })
}
