//! Few-shot classification in two phases: a linear projection over frozen
//! sentence embeddings is trained on labelled sentence pairs so that
//! same-class pairs end up with cosine similarity 1 and cross-class pairs 0,
//! then a logistic-regression head is fitted on the projected vectors.
//!
//! The encoder itself stays fixed behind the embedding provider; only the
//! `d x d` projection and its bias are learned.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    fit, minibatch_descent, Algorithm, Blob, ClassifierModel, FeatureMatrix, FlatParams,
    Hyperparameters, Input, ModelContainer, TaskSpec,
};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub a: usize,
    pub b: usize,
    /// 1.0 for same-class pairs, 0.0 otherwise.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Same,
    Different,
}

/// An example that could not get its full quota of partners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub example: usize,
    pub kind: PairKind,
    pub wanted: usize,
    pub got: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<ContrastivePair>,
    pub shortfalls: Vec<Shortfall>,
}

/// For each example, `r` distinct same-class and `r` distinct cross-class
/// partners (fewer when the pool is smaller, recorded as a shortfall).
pub fn generate_pairs(labels: &[usize], r: usize, seed: u64) -> Result<PairSet> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidInput(
            "contrastive pairs need at least two classes".into(),
        ));
    }
    let mut out = PairSet::default();
    for (i, &l) in labels.iter().enumerate() {
        let same: Vec<usize> = by_class[&l].iter().copied().filter(|&j| j != i).collect();
        let diff: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != l).collect();
        for (kind, pool, target, stream) in [
            (PairKind::Same, same, 1.0, 0u64),
            (PairKind::Different, diff, 0.0, 1),
        ] {
            let got = r.min(pool.len());
            if got < r {
                out.shortfalls.push(Shortfall {
                    example: i,
                    kind,
                    wanted: r,
                    got,
                });
            }
            let mut rng = rng::keyed(seed, &[i as u64, stream]);
            for k in sample(&mut rng, pool.len(), got) {
                out.pairs.push(ContrastivePair {
                    a: i,
                    b: pool[k],
                    target,
                });
            }
        }
    }
    Ok(out)
}

/// Affine map `x -> W x + b` with `W` row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Projection {
            dim,
            w,
            b: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Projection {
            dim,
            w: vec![0.0; dim * dim],
            b: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                self.w[i * d..(i + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.b[i]
            })
            .collect()
    }

    /// Mean of `(cos(Pa, Pb) - t)^2` over `pairs` and its flat gradient.
    /// Pairs where either projection is the zero vector contribute a
    /// cosine of 0 and no gradient.
    pub fn loss_and_grad(&self, rows: &[Vec<f64>], pairs: &[ContrastivePair]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut gw = vec![0.0; d * d];
        let mut gb = vec![0.0; d];
        let mut loss = 0.0;
        for p in pairs {
            let (xa, xb) = (&rows[p.a], &rows[p.b]);
            let (u, v) = (self.apply(xa), self.apply(xb));
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                loss += p.target * p.target;
                continue;
            }
            let c = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
            loss += (c - p.target).powi(2);
            let k = 2.0 * (c - p.target);
            for i in 0..d {
                let du = k * (v[i] / (nu * nv) - c * u[i] / (nu * nu));
                let dv = k * (u[i] / (nu * nv) - c * v[i] / (nv * nv));
                let row = &mut gw[i * d..(i + 1) * d];
                for j in 0..d {
                    row[j] += du * xa[j] + dv * xb[j];
                }
                gb[i] += du + dv;
            }
        }
        let n = pairs.len().max(1) as f64;
        gw.extend(gb);
        (loss / n, gw.into_iter().map(|g| g / n).collect())
    }
}

impl FlatParams for Projection {
    fn flat(&self) -> Vec<f64> {
        [self.w.as_slice(), self.b.as_slice()].concat()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let (w, b) = values.split_at(self.w.len());
        self.w.copy_from_slice(w);
        self.b.copy_from_slice(b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FewShotConfig {
    pub pairs_per_example: usize,
    pub contrastive_epochs: usize,
    pub contrastive_lr: f64,
    pub contrastive_batch: usize,
    pub head: Hyperparameters,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            pairs_per_example: 2,
            contrastive_epochs: 20,
            contrastive_lr: 0.05,
            contrastive_batch: 16,
            head: Hyperparameters {
                epochs: 200,
                batch_size: 8,
                learning_rate: 0.1,
                ..Hyperparameters::default()
            },
        }
    }
}

/// Starting from the identity, minimizes the pair loss by mini-batch
/// gradient descent. Zero epochs returns the identity.
pub fn train_projection(
    rows: &[Vec<f64>],
    pairs: &[ContrastivePair],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(Projection, f64)> {
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::InvalidInput("no embeddings to project".into()));
    }
    if let Some(p) = pairs
        .iter()
        .find(|p| p.a >= rows.len() || p.b >= rows.len())
    {
        return Err(Error::InvalidInput(format!(
            "pair ({}, {}) refers to a missing example",
            p.a, p.b
        )));
    }
    let mut proj = Projection::identity(dim);
    if epochs == 0 || pairs.is_empty() {
        return Ok((proj.clone(), proj.loss_and_grad(rows, pairs).0));
    }
    let hp = Hyperparameters {
        epochs,
        learning_rate: lr,
        batch_size: batch_size.max(1),
        ..Hyperparameters::default()
    };
    let mut rng = rng::keyed(seed, &[0x4653]);
    let out = minibatch_descent(&mut proj, pairs.len(), &hp, &mut rng, |p, batch, _| {
        let sub: Vec<ContrastivePair> = batch.iter().map(|&i| pairs[i]).collect();
        p.loss_and_grad(rows, &sub)
    })?;
    Ok((proj, out.final_loss))
}

/// How the few-shot training set was drawn from the full training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ShotSpec {
    PerClass(usize),
    Fraction(f64),
}

impl std::fmt::Display for ShotSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShotSpec::PerClass(k) => write!(f, "{k}/class"),
            ShotSpec::Fraction(x) => write!(f, "{}%", (x * 100.0).round()),
        }
    }
}

impl std::str::FromStr for ShotSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidInput(format!(
                "shots {s:?}: expected a count per class (10) or a percentage (30%)"
            ))
        };
        if let Some(p) = s.strip_suffix('%') {
            let x: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(x > 0.0 && x <= 100.0) {
                return Err(bad());
            }
            Ok(ShotSpec::Fraction(x / 100.0))
        } else {
            let k: usize = s.trim().parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            Ok(ShotSpec::PerClass(k))
        }
    }
}

/// Stratified sample of example indices: `k` per class (all of a smaller
/// class) or `ceil(f * n_c)` per class. Returned in ascending order.
pub fn sample_shots(labels: &[usize], spec: ShotSpec, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut out = Vec::new();
    for (c, members) in by_class {
        let want = match spec {
            ShotSpec::PerClass(k) => k,
            ShotSpec::Fraction(f) => (f * members.len() as f64).ceil() as usize,
        }
        .min(members.len());
        let mut rng = rng::keyed(seed, &[0x5348, c as u64]);
        out.extend(
            sample(&mut rng, members.len(), want)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotMeta {
    /// E.g. "10/class" or "30%".
    pub shots: String,
    pub pairs_per_example: usize,
    pub seed: u64,
    pub n_examples: usize,
    pub n_pairs: usize,
    pub shortfalls: usize,
    pub contrastive_epochs: usize,
    pub contrastive_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotModel {
    pub projection: Projection,
    pub head: ClassifierModel,
    pub meta: FewShotMeta,
}

/// Phase 1 (projection on contrastive pairs) then phase 2 (logistic
/// regression head on projected vectors, same seed).
pub fn fit_fewshot(
    data: &FeatureMatrix,
    task: &TaskSpec,
    cfg: &FewShotConfig,
    shots: &str,
    seed: u64,
) -> Result<FewShotModel> {
    let pairs = generate_pairs(&data.labels, cfg.pairs_per_example, seed)?;
    let (projection, loss) = train_projection(
        &data.rows,
        &pairs.pairs,
        cfg.contrastive_epochs,
        cfg.contrastive_lr,
        cfg.contrastive_batch,
        seed,
    )?;
    let projected = FeatureMatrix::new(
        data.rows.iter().map(|x| projection.apply(x)).collect(),
        data.labels.clone(),
        data.n_classes,
    )?;
    let head = fit(Algorithm::Logreg, task, &projected, &cfg.head, seed)?;
    Ok(FewShotModel {
        projection,
        head,
        meta: FewShotMeta {
            shots: shots.to_string(),
            pairs_per_example: cfg.pairs_per_example,
            seed,
            n_examples: data.len(),
            n_pairs: pairs.pairs.len(),
            shortfalls: pairs.shortfalls.len(),
            contrastive_epochs: cfg.contrastive_epochs,
            contrastive_loss: loss,
        },
    })
}

impl FewShotModel {
    pub fn task(&self) -> &TaskSpec {
        &self.head.task
    }

    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.projection.dim {
            return Err(Error::DimMismatch {
                expected: self.projection.dim,
                actual: x.len(),
            });
        }
        self.head
            .predict_scores(Input::Vector(&self.projection.apply(x)))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let s = self.predict_scores(x)?;
        Ok(self.head.decide(&s, self.head.default_threshold()))
    }

    pub fn to_container(&self) -> ModelContainer {
        let d = self.projection.dim;
        let mut c = ModelContainer::from_model(&self.head);
        c.extra.insert(
            "fewshot".into(),
            serde_json::to_value(&self.meta).expect("meta serializes"),
        );
        c.blobs.push(Blob::new(
            "projection.w",
            vec![d, d],
            self.projection.w.clone(),
        ));
        c.blobs.push(Blob::new(
            "projection.b",
            vec![d],
            self.projection.b.clone(),
        ));
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        let meta = c
            .extra
            .get("fewshot")
            .ok_or_else(|| Error::Validation("model file has no few-shot section".into()))?;
        let meta: FewShotMeta = serde_json::from_value(meta.clone())
            .map_err(|e| Error::Validation(format!("few-shot section: {e}")))?;
        let d = c.dim;
        let w = c.blob("projection.w")?;
        let b = c.blob("projection.b")?;
        if w.shape != [d, d] || b.shape != [d] {
            return Err(Error::Validation(format!(
                "projection blobs do not match dim {d}"
            )));
        }
        Ok(FewShotModel {
            projection: Projection {
                dim: d,
                w: w.data.clone(),
                b: b.data.clone(),
            },
            head: c.to_model()?,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&ModelContainer::load(path)?)
    }

    pub fn digest(&self) -> String {
        self.to_container().digest()
    }
}
