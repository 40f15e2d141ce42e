use rand::seq::index::sample;
use rand::Rng as _;

use super::{Dataset, Origin};
use crate::classifiers::TaskSpec;
use crate::{rng, Error, Result};

const UNDERSAMPLE: u64 = 0x5255;
const OVERSAMPLE: u64 = 0x524f;

fn members_by_class(data: &Dataset, task: &TaskSpec) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); task.n_classes()];
    for (i, e) in data.examples.iter().enumerate() {
        members[task.class_of(&e.gold_labels)].push(i);
    }
    Ok(members)
}

fn require_minorities(task: &TaskSpec, members: &[Vec<usize>]) -> Result<()> {
    match members[..task.other_index()].iter().position(Vec::is_empty) {
        Some(c) => Err(Error::MissingClass(task.classes[c].clone())),
        None => Ok(()),
    }
}

/// Randomly drops `other` examples down to the size of the largest
/// provision class. Everything else is kept, in input order.
pub fn random_undersample(data: &Dataset, task: &TaskSpec, seed: u64) -> Result<Dataset> {
    let members = members_by_class(data, task)?;
    require_minorities(task, &members)?;
    let other = &members[task.other_index()];
    let target = members[..task.other_index()]
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    if other.len() <= target {
        return Ok(data.clone());
    }
    let mut rng = rng::keyed(seed, &[UNDERSAMPLE]);
    let mut drop = vec![true; other.len()];
    for k in sample(&mut rng, other.len(), target) {
        drop[k] = false;
    }
    let dropped: std::collections::HashSet<usize> = other
        .iter()
        .zip(&drop)
        .filter(|(_, d)| **d)
        .map(|(i, _)| *i)
        .collect();
    Ok(Dataset {
        examples: data
            .examples
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, e)| e.clone())
            .collect(),
    })
}

/// Appends duplicates (drawn with replacement) of every smaller class until
/// each matches the largest class.
pub fn random_oversample(data: &Dataset, task: &TaskSpec, seed: u64) -> Result<Dataset> {
    let members = members_by_class(data, task)?;
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass(task.classes[c].clone()));
    }
    let max = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng::keyed(seed, &[OVERSAMPLE]);
    let mut out = data.clone();
    for m in &members {
        for _ in m.len()..max {
            let mut e = data.examples[m[rng.random_range(0..m.len())]].clone();
            e.origin = Origin::Duplicate;
            out.examples.push(e);
        }
    }
    Ok(out)
}

/// Undersamples `other`, then oversamples the remaining provision classes,
/// leaving every class at the size of the largest provision class.
pub fn under_oversample(data: &Dataset, task: &TaskSpec, seed: u64) -> Result<Dataset> {
    let under = random_undersample(data, task, seed)?;
    random_oversample(&under, task, seed)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::super::tests::dataset;
    use super::*;
    use crate::corpus::tests::catalog;
    use crate::corpus::ProvisionId;

    fn counts(d: &Dataset, t: &TaskSpec) -> BTreeMap<String, usize> {
        d.class_counts(t)
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .collect()
    }

    fn map(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn binary_undersample_to_positive_count() {
        let d = dataset(&[("PO1", 187), ("other", 2000)]);
        let t = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let u = random_undersample(&d, &t, 3).unwrap();
        assert_eq!(counts(&u, &t), map(&[("PO1", 187), ("other", 187)]));
        assert_eq!(u, random_undersample(&d, &t, 3).unwrap());
    }

    #[test]
    fn multiclass_resampling_counts() {
        let t = TaskSpec::multiclass(&catalog(6));
        let d = dataset(&[("other", 1000), ("PO6", 200), ("PO1", 50)]);
        // classes without examples must not exist for resampling
        assert!(random_undersample(&d, &t, 0).is_err());
        let t = TaskSpec {
            classes: vec!["PO1".into(), "PO6".into(), "other".into()],
            ..t
        };
        assert_eq!(
            counts(&random_undersample(&d, &t, 0).unwrap(), &t),
            map(&[("other", 200), ("PO6", 200), ("PO1", 50)])
        );
        let d2 = dataset(&[("other", 1000), ("PO1", 50), ("PO6", 30)]);
        assert_eq!(
            counts(&random_oversample(&d2, &t, 0).unwrap(), &t),
            map(&[("other", 1000), ("PO1", 1000), ("PO6", 1000)])
        );
        let d3 = dataset(&[("other", 1000), ("PO6", 200), ("PO1", 50)]);
        assert_eq!(
            counts(&under_oversample(&d3, &t, 0).unwrap(), &t),
            map(&[("other", 200), ("PO6", 200), ("PO1", 200)])
        );
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let t = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let d = dataset(&[("PO1", 10), ("other", 10)]);
        assert_eq!(random_undersample(&d, &t, 1).unwrap(), d);
        assert_eq!(random_oversample(&d, &t, 1).unwrap(), d);
        assert_eq!(under_oversample(&d, &t, 1).unwrap(), d);
    }

    #[test]
    fn duplicate_multiset_for_three_to_one() {
        let t = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let d = dataset(&[("other", 3), ("PO1", 1)]);
        let o = random_oversample(&d, &t, 7).unwrap();
        let dups: Vec<_> = o
            .examples
            .iter()
            .filter(|e| e.origin == Origin::Duplicate)
            .collect();
        assert_eq!(dups.len(), 2);
        assert!(dups
            .iter()
            .all(|e| e.text == d.examples[3].text && e.gold_labels == d.examples[3].gold_labels));
        assert_eq!(&o.examples[..4], &d.examples[..]);
    }

    proptest! {
        #[test]
        fn ruos_equalizes_at_max_minority(a in 1usize..30, b in 1usize..30, c in 1usize..30, other in 0usize..80, seed in 0u64..50) {
            let t = TaskSpec {
                classes: vec!["PO1".into(), "PO2".into(), "PO3".into(), "other".into()],
                mode: crate::classifiers::TaskMode::Multiclass,
            };
            let d = dataset(&[("PO1", a), ("PO2", b), ("PO3", c), ("other", other)]);
            let target = a.max(b).max(c);
            let u = random_undersample(&d, &t, seed).unwrap();
            let cu = u.class_counts(&t);
            prop_assert_eq!(cu["other"], other.min(target));
            prop_assert_eq!((cu["PO1"], cu["PO2"], cu["PO3"]), (a, b, c));
            if other > 0 {
                let r = under_oversample(&d, &t, seed).unwrap();
                for n in r.class_counts(&t).values() {
                    prop_assert_eq!(*n, target);
                }
                // originals survive oversampling untouched
                let o = random_oversample(&d, &t, seed).unwrap();
                prop_assert_eq!(&o.examples[..d.len()], &d.examples[..]);
            }
        }
    }
}
