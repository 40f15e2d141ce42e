use std::collections::BTreeSet;
use std::path::Path;

use super::{
    fit, fit_bilstm, Algorithm, ClassifierModel, FeatureMatrix, Hyperparameters, SequenceData,
    TaskSpec,
};
use crate::corpus::{ProvisionCatalog, ProvisionId};
use crate::{par, Error, Result};

/// Training inputs shared by every model of a suite.
#[derive(Debug, Clone, Copy)]
pub enum SuiteFeatures<'a> {
    Vectors(&'a [Vec<f64>]),
    Sequences(&'a [Vec<Vec<f64>>]),
}

impl SuiteFeatures<'_> {
    fn len(&self) -> usize {
        match self {
            SuiteFeatures::Vectors(v) => v.len(),
            SuiteFeatures::Sequences(s) => s.len(),
        }
    }
}

/// One binary model per catalog provision (catalog order) and optionally a
/// multi-class model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSuite {
    pub binaries: Vec<(ProvisionId, ClassifierModel)>,
    pub multiclass: Option<ClassifierModel>,
}

pub fn fit_task(
    algorithm: Algorithm,
    task: &TaskSpec,
    features: SuiteFeatures<'_>,
    gold: &[BTreeSet<ProvisionId>],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    let labels: Vec<usize> = gold.iter().map(|g| task.class_of(g)).collect();
    match features {
        SuiteFeatures::Vectors(rows) => {
            let data = FeatureMatrix::new(rows.to_vec(), labels, task.n_classes())?;
            fit(algorithm, task, &data, hp, seed)
        }
        SuiteFeatures::Sequences(seqs) => {
            if algorithm != Algorithm::Bilstm {
                return Err(Error::Capability(format!(
                    "{algorithm} takes sentence vectors, not token sequences"
                )));
            }
            let data = SequenceData {
                seqs: seqs.to_vec(),
                labels,
                n_classes: task.n_classes(),
            };
            fit_bilstm(task, &data, hp, seed)
        }
    }
}

/// Trains the binary models in parallel (negatives are all sentences not
/// labelled with the provision) and, if asked, the multi-class model.
pub fn train_suite(
    algorithm: Algorithm,
    catalog: &ProvisionCatalog,
    features: SuiteFeatures<'_>,
    gold: &[BTreeSet<ProvisionId>],
    hp: &Hyperparameters,
    seed: u64,
    with_multiclass: bool,
) -> Result<ModelSuite> {
    if features.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} label sets",
            features.len(),
            gold.len()
        )));
    }
    let ids: Vec<ProvisionId> = catalog.ids().cloned().collect();
    let binaries = par::try_map(&ids, |id| {
        fit_task(
            algorithm,
            &TaskSpec::binary(id.clone()),
            features,
            gold,
            hp,
            seed,
        )
        .map(|m| (id.clone(), m))
    })?;
    let multiclass = if with_multiclass {
        Some(fit_task(
            algorithm,
            &TaskSpec::multiclass(catalog),
            features,
            gold,
            hp,
            seed,
        )?)
    } else {
        None
    };
    Ok(ModelSuite {
        binaries,
        multiclass,
    })
}

impl ModelSuite {
    /// Writes `<id>.model` per provision and `multiclass.model`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (id, m) in &self.binaries {
            m.save(&dir.join(format!("{id}.model")))?;
        }
        if let Some(m) = &self.multiclass {
            m.save(&dir.join("multiclass.model"))?;
        }
        Ok(())
    }

    /// Loads the models written by [`ModelSuite::save_dir`] for `catalog`.
    /// Binary models must exist for every provision unless the directory
    /// holds only a multi-class model.
    pub fn load_dir(dir: &Path, catalog: &ProvisionCatalog) -> Result<Self> {
        let multi = dir.join("multiclass.model");
        let multiclass = if multi.exists() {
            Some(ClassifierModel::load(&multi)?)
        } else {
            None
        };
        let present: Vec<bool> = catalog
            .ids()
            .map(|id| dir.join(format!("{id}.model")).exists())
            .collect();
        let binaries = if present.iter().any(|&p| p) || multiclass.is_none() {
            catalog
                .ids()
                .map(|id| {
                    let path = dir.join(format!("{id}.model"));
                    if !path.exists() {
                        return Err(Error::Validation(format!(
                            "no binary model for {id} in {}",
                            dir.display()
                        )));
                    }
                    Ok((id.clone(), ClassifierModel::load(&path)?))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(ModelSuite {
            binaries,
            multiclass,
        })
    }

    /// Digest over every model, in file order.
    pub fn digest(&self) -> String {
        let mut all = String::new();
        for (_, m) in &self.binaries {
            all.push_str(&m.digest());
        }
        if let Some(m) = &self.multiclass {
            all.push_str(&m.digest());
        }
        crate::digest::sha256_hex(all.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::catalog;

    #[test]
    fn one_binary_per_provision_plus_multiclass() {
        let cat = catalog(19);
        let mut rows = Vec::new();
        let mut gold = Vec::new();
        for i in 0..=19usize {
            for j in 0..3 {
                let mut v = vec![0.0; 20];
                v[i] = 1.0 + j as f64 * 0.1;
                rows.push(v);
                gold.push(if i < 19 {
                    BTreeSet::from([ProvisionId::new(format!("PO{}", i + 1)).unwrap()])
                } else {
                    BTreeSet::new()
                });
            }
        }
        let hp = Hyperparameters {
            epochs: 2,
            ..Hyperparameters::default()
        };
        let suite = train_suite(
            Algorithm::Logreg,
            &cat,
            SuiteFeatures::Vectors(&rows),
            &gold,
            &hp,
            1,
            true,
        )
        .unwrap();
        assert_eq!(suite.binaries.len(), 19);
        assert_eq!(suite.multiclass.as_ref().unwrap().task.n_classes(), 20);
        let dir = tempfile::tempdir().unwrap();
        suite.save_dir(dir.path()).unwrap();
        assert_eq!(ModelSuite::load_dir(dir.path(), &cat).unwrap(), suite);
    }

    #[test]
    fn missing_provision_is_named() {
        let cat = catalog(2);
        let rows = vec![vec![1.0], vec![0.0]];
        let gold = vec![
            BTreeSet::from([ProvisionId::new("PO1").unwrap()]),
            BTreeSet::new(),
        ];
        let err = train_suite(
            Algorithm::Logreg,
            &cat,
            SuiteFeatures::Vectors(&rows),
            &gold,
            &Hyperparameters::default(),
            0,
            false,
        )
        .unwrap_err();
        assert!(err.to_string().contains("PO2"));
    }
}
