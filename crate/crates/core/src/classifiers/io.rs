//! Binary model container.
//!
//! ```text
//! magic      8 bytes  "DPAMODEL"
//! version    u32 LE
//! header_len u32 LE
//! header     JSON (algorithm, task, dim, meta, extra, blob names and shapes)
//! blobs      f64 LE values, concatenated in header order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Algorithm, BiLstmParams, ClassifierModel, ForestParams, LinearKind, LinearParams,
    LstmDirection, MlpParams, ModelParams, Node, TaskSpec, TrainingMeta, Tree,
};
use crate::digest::sha256_hex;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"DPAMODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Blob {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Blob {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BlobHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    algorithm: Algorithm,
    task: TaskSpec,
    dim: usize,
    meta: TrainingMeta,
    #[serde(default)]
    extra: serde_json::Map<String, serde_json::Value>,
    blobs: Vec<BlobHeader>,
}

/// A serialized classifier: JSON-describable metadata plus named numeric
/// blobs. Extra keys and blobs let wrappers (e.g. a learned projection)
/// travel in the same file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub algorithm: Algorithm,
    pub task: TaskSpec,
    pub dim: usize,
    pub meta: TrainingMeta,
    pub extra: serde_json::Map<String, serde_json::Value>,
    pub blobs: Vec<Blob>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Validation(format!("model file: {}", message.into()))
}

impl ModelContainer {
    pub fn from_model(model: &ClassifierModel) -> Self {
        let mut extra = serde_json::Map::new();
        let mut blobs = Vec::new();
        match &model.params {
            ModelParams::Linear(p) => {
                extra.insert("n_classes".into(), p.n_classes.into());
                blobs.push(Blob::new(
                    "weights",
                    vec![p.outputs(), p.n_features],
                    p.weights.clone(),
                ));
                blobs.push(Blob::new("bias", vec![p.outputs()], p.bias.clone()));
            }
            ModelParams::Mlp(p) => {
                extra.insert("sizes".into(), serde_json::json!(p.sizes));
                for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
                    blobs.push(Blob::new(
                        format!("w{l}"),
                        vec![p.sizes[l + 1], p.sizes[l]],
                        w.clone(),
                    ));
                    blobs.push(Blob::new(format!("b{l}"), vec![p.sizes[l + 1]], b.clone()));
                }
            }
            ModelParams::BiLstm(p) => {
                let (h, d, k) = (p.hidden(), p.fwd.input, p.n_classes);
                for (tag, dir) in [("fwd", &p.fwd), ("bwd", &p.bwd)] {
                    blobs.push(Blob::new(format!("{tag}.w"), vec![4 * h, d], dir.w.clone()));
                    blobs.push(Blob::new(format!("{tag}.u"), vec![4 * h, h], dir.u.clone()));
                    blobs.push(Blob::new(format!("{tag}.b"), vec![4 * h], dir.b.clone()));
                }
                blobs.push(Blob::new("wo", vec![k, 2 * h], p.wo.clone()));
                blobs.push(Blob::new("bo", vec![k], p.bo.clone()));
            }
            ModelParams::Forest(f) => {
                let k = f.n_classes;
                for (t, tree) in f.trees.iter().enumerate() {
                    let mut data = Vec::with_capacity(tree.nodes.len() * (4 + k));
                    for node in &tree.nodes {
                        match node {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                data.extend([
                                    *feature as f64,
                                    *threshold,
                                    *left as f64,
                                    *right as f64,
                                ]);
                                data.extend(std::iter::repeat_n(0.0, k));
                            }
                            Node::Leaf { counts } => {
                                data.extend([-1.0, 0.0, 0.0, 0.0]);
                                data.extend(counts);
                            }
                        }
                    }
                    blobs.push(Blob::new(
                        format!("tree{t}"),
                        vec![tree.nodes.len(), 4 + k],
                        data,
                    ));
                }
            }
        }
        ModelContainer {
            algorithm: model.algorithm,
            task: model.task.clone(),
            dim: model.dim,
            meta: model.meta.clone(),
            extra,
            blobs,
        }
    }

    pub fn blob(&self, name: &str) -> Result<&Blob> {
        self.blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| bad(format!("missing blob {name}")))
    }

    fn blob_shaped(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let b = self.blob(name)?;
        if b.shape != shape {
            return Err(bad(format!(
                "blob {name} has shape {:?}, expected {:?}",
                b.shape, shape
            )));
        }
        Ok(b.data.clone())
    }

    pub fn to_model(&self) -> Result<ClassifierModel> {
        let k = self.task.n_classes();
        let d = self.dim;
        let params = match self.algorithm {
            Algorithm::Logreg | Algorithm::LinearSvm => {
                let kind = if self.algorithm == Algorithm::Logreg {
                    LinearKind::Logreg
                } else {
                    LinearKind::Svm
                };
                let mut p = LinearParams::zeros(kind, d, k);
                p.weights = self.blob_shaped("weights", &[p.outputs(), d])?;
                p.bias = self.blob_shaped("bias", &[p.outputs()])?;
                ModelParams::Linear(p)
            }
            Algorithm::Mlp => {
                let sizes: Vec<usize> = self
                    .extra
                    .get("sizes")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .ok_or_else(|| bad("mlp without layer sizes"))?;
                if sizes.len() < 2 || sizes[0] != d || *sizes.last().unwrap() != k {
                    return Err(bad(format!(
                        "layer sizes {sizes:?} disagree with dim {d} and {k} classes"
                    )));
                }
                let mut p = MlpParams::zeros(&sizes);
                for l in 0..sizes.len() - 1 {
                    p.weights[l] = self.blob_shaped(&format!("w{l}"), &[sizes[l + 1], sizes[l]])?;
                    p.biases[l] = self.blob_shaped(&format!("b{l}"), &[sizes[l + 1]])?;
                }
                ModelParams::Mlp(p)
            }
            Algorithm::Bilstm => {
                let h = self.blob("fwd.b")?.data.len() / 4;
                if h == 0 {
                    return Err(bad("bilstm with zero hidden units"));
                }
                let dir = |tag: &str| -> Result<LstmDirection> {
                    Ok(LstmDirection {
                        input: d,
                        hidden: h,
                        w: self.blob_shaped(&format!("{tag}.w"), &[4 * h, d])?,
                        u: self.blob_shaped(&format!("{tag}.u"), &[4 * h, h])?,
                        b: self.blob_shaped(&format!("{tag}.b"), &[4 * h])?,
                    })
                };
                ModelParams::BiLstm(BiLstmParams {
                    fwd: dir("fwd")?,
                    bwd: dir("bwd")?,
                    n_classes: k,
                    wo: self.blob_shaped("wo", &[k, 2 * h])?,
                    bo: self.blob_shaped("bo", &[k])?,
                })
            }
            Algorithm::RandomForest => {
                let mut trees = Vec::new();
                for b in self.blobs.iter().filter(|b| b.name.starts_with("tree")) {
                    trees.push(decode_tree(b, k, d)?);
                }
                if trees.is_empty() {
                    return Err(bad("forest without trees"));
                }
                ModelParams::Forest(ForestParams {
                    n_classes: k,
                    trees,
                })
            }
        };
        Ok(ClassifierModel {
            algorithm: self.algorithm,
            task: self.task.clone(),
            dim: d,
            meta: self.meta.clone(),
            params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            algorithm: self.algorithm,
            task: self.task.clone(),
            dim: self.dim,
            meta: self.meta.clone(),
            extra: self.extra.clone(),
            blobs: self
                .blobs
                .iter()
                .map(|b| BlobHeader {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for b in &self.blobs {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let json = bytes
            .get(16..16 + len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
        let mut at = 16 + len;
        let mut blobs = Vec::with_capacity(header.blobs.len());
        for bh in header.blobs {
            let n: usize = bh.shape.iter().product();
            let raw = bytes
                .get(at..at + 8 * n)
                .ok_or_else(|| bad(format!("truncated blob {}", bh.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blobs.push(Blob {
                name: bh.name,
                shape: bh.shape,
                data,
            });
            at += 8 * n;
        }
        if at != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - at)));
        }
        Ok(ModelContainer {
            algorithm: header.algorithm,
            task: header.task,
            dim: header.dim,
            meta: header.meta,
            extra: header.extra,
            blobs,
        })
    }

    /// SHA-256 of the serialized container.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn decode_tree(b: &Blob, k: usize, d: usize) -> Result<Tree> {
    if b.shape.len() != 2 || b.shape[1] != 4 + k || b.shape[0] == 0 {
        return Err(bad(format!("blob {} has shape {:?}", b.name, b.shape)));
    }
    let n = b.shape[0];
    let index = |v: f64, limit: usize| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 && (v as usize) < limit {
            Ok(v as usize)
        } else {
            Err(bad(format!("blob {}: index {v} out of range", b.name)))
        }
    };
    let mut nodes = Vec::with_capacity(n);
    for (i, row) in b.data.chunks_exact(4 + k).enumerate() {
        if row[0] < 0.0 {
            nodes.push(Node::Leaf {
                counts: row[4..].to_vec(),
            });
        } else {
            let (left, right) = (index(row[2], n)?, index(row[3], n)?);
            if left <= i || right <= i {
                return Err(bad(format!(
                    "blob {}: child before parent at node {i}",
                    b.name
                )));
            }
            nodes.push(Node::Split {
                feature: index(row[0], d)?,
                threshold: row[1],
                left,
                right,
            });
        }
    }
    Ok(Tree { nodes })
}

impl ClassifierModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        ModelContainer::from_model(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelContainer::load(path)?.to_model()
    }

    pub fn digest(&self) -> String {
        ModelContainer::from_model(self).digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit, FeatureMatrix, Hyperparameters, Input};
    use crate::corpus::ProvisionId;

    fn data() -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 3) as f64, (i as f64 * 0.37).sin(), (i / 10) as f64])
            .collect();
        let labels = (0..30).map(|i| i / 10).collect();
        FeatureMatrix::new(rows, labels, 3).unwrap()
    }

    #[test]
    fn every_algorithm_round_trips_bit_exactly() {
        let cat = crate::corpus::tests::catalog(2);
        let task = TaskSpec::multiclass(&cat);
        let data = data();
        let hp = Hyperparameters {
            epochs: 3,
            n_trees: 4,
            hidden_sizes: vec![5, 4],
            lstm_hidden: 3,
            ..Hyperparameters::default()
        };
        let dir = tempfile::tempdir().unwrap();
        for a in Algorithm::ALL {
            let m = fit(a, &task, &data, &hp, 7).unwrap();
            let path = dir.path().join(format!("{a}.model"));
            m.save(&path).unwrap();
            let back = ClassifierModel::load(&path).unwrap();
            assert_eq!(back, m, "{a}");
            for x in &data.rows {
                let (s, t) = (
                    m.predict_scores(Input::Vector(x)).unwrap(),
                    back.predict_scores(Input::Vector(x)).unwrap(),
                );
                assert!(s.iter().zip(&t).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn binary_linear_round_trip() {
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let d = FeatureMatrix::new(vec![vec![1.0], vec![-1.0]], vec![0, 1], 2).unwrap();
        let m = fit(
            Algorithm::LinearSvm,
            &task,
            &d,
            &Hyperparameters::default(),
            0,
        )
        .unwrap();
        let c = ModelContainer::from_model(&m);
        assert_eq!(ModelContainer::from_bytes(&c.to_bytes()).unwrap(), c);
        assert_eq!(c.to_model().unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let d = FeatureMatrix::new(vec![vec![1.0], vec![-1.0]], vec![0, 1], 2).unwrap();
        let bytes = ModelContainer::from_model(
            &fit(Algorithm::Logreg, &task, &d, &Hyperparameters::default(), 0).unwrap(),
        )
        .to_bytes();
        assert!(ModelContainer::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelContainer::from_bytes(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(ModelContainer::from_bytes(&magic).is_err());
    }
}
