use std::collections::BTreeMap;

use crate::{Error, Result};

/// Cohen's kappa between two annotators' labels for the same items. When
/// chance agreement is certain (both annotators constant on the same label)
/// kappa is 1 for perfect observed agreement and an error otherwise.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "annotations have {} and {} items",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no annotated items".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let p_o = agree / n;
    let mut marg: BTreeMap<&T, (f64, f64)> = BTreeMap::new();
    for x in a {
        marg.entry(x).or_default().0 += 1.0;
    }
    for y in b {
        marg.entry(y).or_default().1 += 1.0;
    }
    let p_e: f64 = marg.values().map(|(ca, cb)| (ca / n) * (cb / n)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return if p_o == 1.0 {
            Ok(1.0)
        } else {
            Err(Error::InvalidInput(
                "kappa undefined: chance agreement is 1".into(),
            ))
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Conventional verbal interpretation of a kappa value.
pub fn kappa_band(kappa: f64) -> &'static str {
    if kappa <= 0.0 {
        "no agreement"
    } else if kappa <= 0.20 {
        "slight agreement"
    } else if kappa <= 0.40 {
        "fair agreement"
    } else if kappa <= 0.60 {
        "moderate agreement"
    } else if kappa <= 0.80 {
        "substantial agreement"
    } else {
        "almost perfect agreement"
    }
}
