use rand::Rng as _;

use super::train::{minibatch_descent, FlatParams};
use super::{
    require_all_classes, sigmoid, softmax, Algorithm, ClassifierModel, Hyperparameters,
    ModelParams, SequenceData, TaskSpec, TrainingMeta,
};
use crate::rng::{self, Rng};
use crate::{par, Error, Result};

/// One LSTM direction. Gate blocks are stacked in the order input, forget,
/// cell candidate, output: `w` is `4h x d`, `u` is `4h x h`, `b` has `4h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// Activations of one direction over one sequence, kept for backprop.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub xs: Vec<Vec<f64>>,
    /// Post-activation gates `[i, f, g, o]` per step, each of length `4h`.
    pub gates: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl LstmCache {
    pub fn last_hidden(&self) -> &[f64] {
        self.h.last().expect("non-empty sequence")
    }
}

impl LstmDirection {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmDirection {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(input, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for x in d.w.iter_mut().chain(d.u.iter_mut()) {
            *x = rng.random_range(-bound..bound);
        }
        d
    }

    /// Runs the cell over `xs` in the given order.
    pub fn run<'a, I>(&self, xs: I) -> LstmCache
    where
        I: IntoIterator<Item = &'a Vec<f64>>,
    {
        let (d, h) = (self.input, self.hidden);
        let mut cache = LstmCache {
            xs: Vec::new(),
            gates: Vec::new(),
            c: Vec::new(),
            h: Vec::new(),
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for x in xs {
            let mut a = self.b.clone();
            for (r, ar) in a.iter_mut().enumerate() {
                *ar +=
                    dot(&self.w[r * d..(r + 1) * d], x) + dot(&self.u[r * h..(r + 1) * h], &h_prev);
            }
            for (r, ar) in a.iter_mut().enumerate() {
                *ar = if (2 * h..3 * h).contains(&r) {
                    ar.tanh()
                } else {
                    sigmoid(*ar)
                };
            }
            let c: Vec<f64> = (0..h)
                .map(|j| a[h + j] * c_prev[j] + a[j] * a[2 * h + j])
                .collect();
            let hn: Vec<f64> = (0..h).map(|j| a[3 * h + j] * c[j].tanh()).collect();
            cache.xs.push(x.clone());
            cache.gates.push(a);
            cache.c.push(c.clone());
            cache.h.push(hn.clone());
            h_prev = hn;
            c_prev = c;
        }
        cache
    }

    /// Backpropagates a gradient on the final hidden state through time,
    /// accumulating into `g` (same layout as `self`).
    fn backward(&self, cache: &LstmCache, dh_last: &[f64], g: &mut LstmDirection) {
        let (d, h) = (self.input, self.hidden);
        let steps = cache.h.len();
        let zeros = vec![0.0; h];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        for t in (0..steps).rev() {
            let a = &cache.gates[t];
            let c = &cache.c[t];
            let c_prev = if t > 0 { &cache.c[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &cache.h[t - 1] } else { &zeros };
            let mut da = vec![0.0; 4 * h];
            for j in 0..h {
                let (i, f, gg, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                let di = dc[j] * gg;
                let dg = dc[j] * i;
                let df = dc[j] * c_prev[j];
                dc[j] *= f;
                da[j] = di * i * (1.0 - i);
                da[h + j] = df * f * (1.0 - f);
                da[2 * h + j] = dg * (1.0 - gg * gg);
                da[3 * h + j] = d_o * o * (1.0 - o);
            }
            let x = &cache.xs[t];
            let mut dh_prev = vec![0.0; h];
            for (r, &dr) in da.iter().enumerate() {
                g.b[r] += dr;
                axpy(&mut g.w[r * d..(r + 1) * d], dr, x);
                axpy(&mut g.u[r * h..(r + 1) * h], dr, h_prev);
                axpy(&mut dh_prev, dr, &self.u[r * h..(r + 1) * h]);
            }
            dh = dh_prev;
        }
    }

    fn parts(&self) -> [&[f64]; 3] {
        [&self.w, &self.u, &self.b]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Bidirectional LSTM; the final forward state and the backward state after
/// reading the first token are concatenated and fed to a softmax layer
/// (`wo` is `K x 2h`).
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    pub n_classes: usize,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
}

struct Pass {
    fwd: LstmCache,
    bwd: LstmCache,
    features: Vec<f64>,
    probs: Vec<f64>,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize, n_classes: usize) -> Self {
        BiLstmParams {
            fwd: LstmDirection::zeros(input, hidden),
            bwd: LstmDirection::zeros(input, hidden),
            n_classes,
            wo: vec![0.0; n_classes * 2 * hidden],
            bo: vec![0.0; n_classes],
        }
    }

    pub fn init(input: usize, hidden: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let fwd = LstmDirection::init(input, hidden, rng);
        let bwd = LstmDirection::init(input, hidden, rng);
        let bound = 1.0 / ((2 * hidden) as f64).sqrt();
        let wo = (0..n_classes * 2 * hidden)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        BiLstmParams {
            fwd,
            bwd,
            n_classes,
            wo,
            bo: vec![0.0; n_classes],
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    fn pass(&self, seq: &[Vec<f64>], mask: Option<&[f64]>) -> Pass {
        let fwd = self.fwd.run(seq);
        let bwd = self.bwd.run(seq.iter().rev());
        let mut features = [fwd.last_hidden(), bwd.last_hidden()].concat();
        if let Some(m) = mask {
            features.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        let width = features.len();
        let logits: Vec<f64> = (0..self.n_classes)
            .map(|k| dot(&self.wo[k * width..(k + 1) * width], &features) + self.bo[k])
            .collect();
        Pass {
            fwd,
            bwd,
            features,
            probs: softmax(&logits),
        }
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Vec<f64> {
        self.pass(seq, None).probs
    }

    fn example_grad(
        &self,
        seq: &[Vec<f64>],
        label: usize,
        mask: Option<&[f64]>,
    ) -> (f64, BiLstmParams) {
        let h = self.hidden();
        let p = self.pass(seq, mask);
        let mut g = BiLstmParams::zeros(self.fwd.input, h, self.n_classes);
        let mut dfeat = vec![0.0; 2 * h];
        for k in 0..self.n_classes {
            let dz = p.probs[k] - if k == label { 1.0 } else { 0.0 };
            g.bo[k] += dz;
            axpy(&mut g.wo[k * 2 * h..(k + 1) * 2 * h], dz, &p.features);
            axpy(&mut dfeat, dz, &self.wo[k * 2 * h..(k + 1) * 2 * h]);
        }
        if let Some(m) = mask {
            dfeat.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        self.fwd.backward(&p.fwd, &dfeat[..h], &mut g.fwd);
        self.bwd.backward(&p.bwd, &dfeat[h..], &mut g.bwd);
        (-p.probs[label].ln(), g)
    }

    /// Mean cross-entropy over the batch and its flat gradient. `masks`
    /// holds one scaled dropout mask over the `2h` features per example.
    pub fn loss_and_grad(
        &self,
        seqs: &[&[Vec<f64>]],
        labels: &[usize],
        masks: Option<&[Vec<f64>]>,
    ) -> (f64, Vec<f64>) {
        let per = par::map_range(seqs.len(), |i| {
            self.example_grad(seqs[i], labels[i], masks.map(|m| m[i].as_slice()))
        });
        let n = seqs.len() as f64;
        let mut loss = 0.0;
        let mut flat = vec![0.0; self.flat().len()];
        for (l, g) in per {
            loss += l;
            for (a, b) in flat.iter_mut().zip(g.flat()) {
                *a += b;
            }
        }
        flat.iter_mut().for_each(|v| *v /= n);
        (loss / n, flat)
    }
}

impl FlatParams for BiLstmParams {
    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.fwd.parts().into_iter().chain(self.bwd.parts()) {
            out.extend_from_slice(p);
        }
        out.extend_from_slice(&self.wo);
        out.extend_from_slice(&self.bo);
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        let [a, b, c] = self.fwd.parts_mut();
        let [d, e, f] = self.bwd.parts_mut();
        for v in [a, b, c, d, e, f, &mut self.wo, &mut self.bo] {
            let n = v.len();
            v.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        assert_eq!(at, values.len(), "flat parameter length mismatch");
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// BiLSTM over token-vector sequences; dropout on the concatenated final
/// states during training only.
pub fn fit_bilstm(
    task: &TaskSpec,
    data: &SequenceData,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    hp.validate()?;
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
    let dim = data.dim();
    if let Some(bad) = data.seqs.iter().position(|s| s.is_empty()) {
        return Err(Error::InvalidInput(format!("sequence {bad} is empty")));
    }
    if let Some(v) = data.seqs.iter().flatten().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    require_all_classes(task, &data.labels)?;
    let mut rng = rng::from_seed(seed);
    let mut params = BiLstmParams::init(dim, hp.lstm_hidden, task.n_classes(), &mut rng);
    let width = 2 * hp.lstm_hidden;
    let outcome = minibatch_descent(&mut params, data.len(), hp, &mut rng, |p, batch, rng| {
        let seqs: Vec<&[Vec<f64>]> = batch.iter().map(|&i| data.seqs[i].as_slice()).collect();
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        if hp.dropout > 0.0 {
            let scale = 1.0 / (1.0 - hp.dropout);
            let masks: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| {
                    (0..width)
                        .map(|_| {
                            if rng.random::<f64>() < hp.dropout {
                                0.0
                            } else {
                                scale
                            }
                        })
                        .collect()
                })
                .collect();
            p.loss_and_grad(&seqs, &labels, Some(&masks))
        } else {
            p.loss_and_grad(&seqs, &labels, None)
        }
    })?;
    Ok(ClassifierModel {
        algorithm: Algorithm::Bilstm,
        task: task.clone(),
        dim,
        meta: TrainingMeta {
            seed,
            hyperparameters: hp.clone(),
            epochs_run: outcome.epochs_run,
            final_loss: outcome.final_loss,
        },
        params: ModelParams::BiLstm(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::Input;
    use crate::corpus::ProvisionId;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / n(a).max(n(b)).max(1e-12)
    }

    fn random_seq(len: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::from_seed(11);
        for _ in 0..20 {
            let p = BiLstmParams::init(3, 4, 3, &mut rng);
            let seqs: Vec<Vec<Vec<f64>>> =
                (1..=3).map(|l| random_seq(l + 1, 3, &mut rng)).collect();
            let refs: Vec<&[Vec<f64>]> = seqs.iter().map(Vec::as_slice).collect();
            let labels = [2, 0, 1];
            let masks: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    (0..8)
                        .map(|_| {
                            if rng.random::<f64>() < 0.3 {
                                0.0
                            } else {
                                1.0 / 0.7
                            }
                        })
                        .collect()
                })
                .collect();
            for m in [None, Some(masks.as_slice())] {
                let (_, g) = p.loss_and_grad(&refs, &labels, m);
                let base = p.flat();
                let h = 1e-6;
                let numeric: Vec<f64> = (0..base.len())
                    .map(|i| {
                        let mut q = p.clone();
                        let mut v = base.clone();
                        v[i] += h;
                        q.set_flat(&v);
                        let up = q.loss_and_grad(&refs, &labels, m).0;
                        v[i] -= 2.0 * h;
                        q.set_flat(&v);
                        let down = q.loss_and_grad(&refs, &labels, m).0;
                        (up - down) / (2.0 * h)
                    })
                    .collect();
                assert!(
                    rel_err(&g, &numeric) < 1e-3,
                    "rel err {}",
                    rel_err(&g, &numeric)
                );
            }
        }
    }

    #[test]
    fn mirrored_weights_make_reversal_invisible() {
        let mut rng = rng::from_seed(5);
        let mut p = BiLstmParams::init(2, 3, 2, &mut rng);
        p.bwd = p.fwd.clone();
        for k in 0..2 {
            let row = &mut p.wo[k * 6..(k + 1) * 6];
            let (a, b) = row.split_at_mut(3);
            b.copy_from_slice(a);
        }
        let seq = random_seq(5, 2, &mut rng);
        let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let (x, y) = (p.predict(&seq), p.predict(&rev));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn learns_token_order() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let data = SequenceData {
            seqs: vec![vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]],
            labels: vec![0, 1],
            n_classes: 2,
        };
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let hp = Hyperparameters {
            lstm_hidden: 4,
            epochs: 400,
            batch_size: 2,
            learning_rate: 0.5,
            dropout: 0.0,
            ..Hyperparameters::default()
        };
        let m = fit_bilstm(&task, &data, &hp, 1).unwrap();
        assert_eq!(
            m.predict_class(Input::Sequence(&data.seqs[0]), 0.5)
                .unwrap(),
            0
        );
        assert_eq!(
            m.predict_class(Input::Sequence(&data.seqs[1]), 0.5)
                .unwrap(),
            1
        );
    }

    #[test]
    fn rejects_empty_sequences() {
        let data = SequenceData {
            seqs: vec![vec![vec![1.0]], vec![]],
            labels: vec![0, 1],
            n_classes: 2,
        };
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        assert!(fit_bilstm(&task, &data, &Hyperparameters::default(), 0).is_err());
    }
}
