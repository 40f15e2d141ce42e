use std::collections::BTreeSet;

use super::TaskSpec;
use crate::corpus::ProvisionId;
use crate::embedding::EmbeddingProvider;
use crate::{par, Error, Result};

/// One sentence vector per row with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(first) = rows.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::InvalidInput("zero-width feature rows".into()));
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != d) {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: bad.len(),
                });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {n_classes} classes"
            )));
        }
        Ok(FeatureMatrix {
            rows,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Token-vector sequences per sentence with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub seqs: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl SequenceData {
    /// Length-1 sequences of the sentence vectors.
    pub fn from_vectors(m: &FeatureMatrix) -> Self {
        SequenceData {
            seqs: m.rows.iter().map(|r| vec![r.clone()]).collect(),
            labels: m.labels.clone(),
            n_classes: m.n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.seqs
            .first()
            .and_then(|s| s.first())
            .map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    /// Per-token vectors from the provider's token section.
    Tokens,
    /// Length-1 sequences of the sentence vector.
    SentenceFallback,
}

/// Looks up sentence vectors for `(text, gold labels)` items.
pub fn build_matrix<'a, I>(
    items: I,
    task: &TaskSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureMatrix>
where
    I: IntoIterator<Item = (&'a str, &'a BTreeSet<ProvisionId>)>,
{
    let items: Vec<(&str, &BTreeSet<ProvisionId>)> = items.into_iter().collect();
    let texts: Vec<String> = items.iter().map(|(t, _)| t.to_string()).collect();
    let rows = provider
        .embed_batch(&texts)?
        .iter()
        .map(|v| v.to_f64())
        .collect();
    let labels = items.iter().map(|(_, l)| task.class_of(l)).collect();
    FeatureMatrix::new(rows, labels, task.n_classes())
}

pub fn build_sequences<'a, I>(
    items: I,
    task: &TaskSpec,
    provider: &dyn EmbeddingProvider,
    mode: SequenceMode,
) -> Result<SequenceData>
where
    I: IntoIterator<Item = (&'a str, &'a BTreeSet<ProvisionId>)>,
{
    let items: Vec<(&str, &BTreeSet<ProvisionId>)> = items.into_iter().collect();
    let seqs = par::try_map(&items, |(text, _)| -> Result<Vec<Vec<f64>>> {
        match mode {
            SequenceMode::Tokens => Ok(provider
                .embed_tokens(text)?
                .iter()
                .map(|v| v.to_f64())
                .collect()),
            SequenceMode::SentenceFallback => Ok(vec![provider.embed(text)?.to_f64()]),
        }
    })?;
    Ok(SequenceData {
        seqs,
        labels: items.iter().map(|(_, l)| task.class_of(l)).collect(),
        n_classes: task.n_classes(),
    })
}
