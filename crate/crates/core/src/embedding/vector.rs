use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

/// Dense embedding; all components finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation(
                "embedding must have positive dimension".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "embedding has non-finite component".into(),
            ));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. Errors if either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 =
        a.0.iter()
            .zip(&b.0)
            .map(|(&x, &y)| f64::from(x) * f64::from(y))
            .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Exhaustive top-`k` scan over `(key, vector)` items, descending similarity,
/// ties by ascending key. Zero vectors and excluded keys are skipped.
pub fn top_k_by_cosine<K, F>(
    items: &[(K, &EmbeddingVector)],
    query: &EmbeddingVector,
    k: usize,
    exclude: F,
) -> Result<Vec<(K, f64)>>
where
    K: Ord + Clone + Send + Sync,
    F: Fn(&K) -> bool + Sync + Send,
{
    if query.norm() == 0.0 {
        return Err(Error::ZeroVector);
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let scored = par::map(items, |(key, v)| {
        if exclude(key) || v.norm() == 0.0 {
            return Ok(None);
        }
        cosine(query, v).map(|s| Some((key.clone(), s)))
    });
    let mut hits: Vec<(K, f64)> = scored
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    hits.truncate(k);
    Ok(hits)
}

/// Nearest sentence embeddings in `store`, keyed by content hash.
pub fn nearest_neighbors(
    store: &super::EmbeddingStore,
    query: &EmbeddingVector,
    k: usize,
    exclude: &std::collections::HashSet<u64>,
) -> Result<Vec<(u64, f64)>> {
    if query.dim() != store.dim() {
        return Err(Error::DimMismatch {
            expected: store.dim(),
            actual: query.dim(),
        });
    }
    let items: Vec<(u64, &EmbeddingVector)> = store.entries().map(|(h, v)| (*h, v)).collect();
    top_k_by_cosine(&items, query, k, |h| exclude.contains(h))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::embedding::EmbeddingStore;

    fn v(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(
            cosine(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // 4 / (sqrt5 * sqrt5)
        assert_abs_diff_eq!(
            cosine(&v(&[1.0, 2.0]), &v(&[2.0, 1.0])).unwrap(),
            0.8,
            epsilon = 1e-12
        );
        assert!(matches!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    fn two_vector_store() -> (EmbeddingStore, u64, u64) {
        let mut s = EmbeddingStore::new(2, "toy");
        let (x, y) = (1u64, 2u64);
        s.insert_hash(x, v(&[1.0, 0.0])).unwrap();
        s.insert_hash(y, v(&[0.0, 1.0])).unwrap();
        (s, x, y)
    }

    #[test]
    fn nearest_and_exclusion() {
        let (s, x, y) = two_vector_store();
        let q = v(&[1.0, 0.0]);
        assert_eq!(
            nearest_neighbors(&s, &q, 1, &HashSet::new()).unwrap(),
            vec![(x, 1.0)]
        );
        assert_eq!(
            nearest_neighbors(&s, &q, 1, &HashSet::from([x])).unwrap(),
            vec![(y, 0.0)]
        );
        let empty = EmbeddingStore::new(2, "toy");
        assert!(nearest_neighbors(&empty, &q, 3, &HashSet::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = crate::rng::from_seed(11);
        let mut s = EmbeddingStore::new(4, "toy");
        for h in 0..10u64 {
            let vals: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            s.insert_hash(h * 7919, v(&vals)).unwrap();
        }
        let q = v(&[0.3, -0.2, 0.9, 0.1]);
        let got = nearest_neighbors(&s, &q, 3, &HashSet::new()).unwrap();
        // oracle: score everything with an independent dot/norm loop and sort
        let qv: Vec<f64> = q.to_f64();
        let mut all: Vec<(u64, f64)> = s
            .entries()
            .map(|(h, e)| {
                let ev = e.to_f64();
                let dot: f64 = qv.iter().zip(&ev).map(|(a, b)| a * b).sum();
                let n = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
                (*h, dot / (n(&qv) * n(&ev)))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip(&all) {
            assert_eq!(g.0, w.0);
            assert_abs_diff_eq!(g.1, w.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn ties_break_by_key() {
        let a = v(&[1.0, 1.0]);
        let b = v(&[2.0, 2.0]);
        let items = vec![(9u64, &a), (3u64, &b)];
        let got = top_k_by_cosine(&items, &v(&[1.0, 1.0]), 2, |_| false).unwrap();
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), vec![3, 9]);
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f32..10.0, 5),
            b in proptest::collection::vec(-10.0f32..10.0, 5),
            lambda in 0.01f32..100.0,
        ) {
            let (va, vb) = (v(&a), v(&b));
            prop_assume!(va.norm() > 1e-3 && vb.norm() > 1e-3);
            let ab = cosine(&va, &vb).unwrap();
            prop_assert_eq!(ab, cosine(&vb, &va).unwrap());
            let scaled = v(&a.iter().map(|x| x * lambda).collect::<Vec<_>>());
            prop_assert!((cosine(&scaled, &vb).unwrap() - ab).abs() < 1e-5);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
