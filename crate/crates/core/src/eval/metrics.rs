use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{ProvisionCatalog, ProvisionId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merged(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

/// Per-provision confusion counts over `items` evaluated units (DPAs or
/// sentences), in catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionConfusion {
    pub items: usize,
    pub cells: Vec<(ProvisionId, Confusion)>,
}

impl ProvisionConfusion {
    pub fn get(&self, id: &ProvisionId) -> Option<&Confusion> {
        self.cells.iter().find(|(p, _)| p == id).map(|(_, c)| c)
    }

    pub fn pooled(&self) -> Confusion {
        self.cells
            .iter()
            .fold(Confusion::default(), |acc, (_, c)| acc.merged(c))
    }
}

/// Confusion over parallel lists of gold and predicted label sets.
pub fn label_confusion(
    gold: &[BTreeSet<ProvisionId>],
    predicted: &[BTreeSet<ProvisionId>],
    catalog: &ProvisionCatalog,
) -> Result<ProvisionConfusion> {
    if gold.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold items but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    for id in gold.iter().chain(predicted).flatten() {
        if catalog.index_of(id).is_none() {
            return Err(Error::UnknownProvision(id.to_string()));
        }
    }
    let cells = catalog
        .ids()
        .map(|id| {
            let mut c = Confusion::default();
            for (g, p) in gold.iter().zip(predicted) {
                c.record(g.contains(id), p.contains(id));
            }
            (id.clone(), c)
        })
        .collect();
    Ok(ProvisionConfusion {
        items: gold.len(),
        cells,
    })
}

/// Per DPA and provision: TP if satisfied in both gold and prediction, FP if
/// predicted only, FN if gold only, TN otherwise. Both maps must cover the
/// same DPA ids.
pub fn dpa_confusion(
    gold: &BTreeMap<String, BTreeSet<ProvisionId>>,
    predicted: &BTreeMap<String, BTreeSet<ProvisionId>>,
    catalog: &ProvisionCatalog,
) -> Result<ProvisionConfusion> {
    let missing: Vec<&String> = gold
        .keys()
        .filter(|k| !predicted.contains_key(*k))
        .collect();
    let extra: Vec<&String> = predicted
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::InvalidInput(format!(
            "DPA ids differ: no prediction for {missing:?}, no gold for {extra:?}"
        )));
    }
    let g: Vec<BTreeSet<ProvisionId>> = gold.values().cloned().collect();
    let p: Vec<BTreeSet<ProvisionId>> = predicted.values().cloned().collect();
    label_confusion(&g, &p, catalog)
}

/// `(1 + β²)PR / (β²P + R)`, zero when both are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// A ratio whose denominator may be empty; then `value` is 0 and
/// `undefined` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    fn of(num: u64, den: u64) -> Ratio {
        if den == 0 {
            Ratio {
                value: 0.0,
                undefined: true,
            }
        } else {
            Ratio {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub counts: Confusion,
    pub accuracy: Ratio,
    pub precision: Ratio,
    pub recall: Ratio,
    /// Undefined only when there are no gold or predicted positives at all.
    pub f_beta: Ratio,
}

impl ClassMetrics {
    fn from_counts(c: Confusion, beta: f64) -> Self {
        let precision = Ratio::of(c.tp, c.tp + c.fp);
        let recall = Ratio::of(c.tp, c.tp + c.fn_);
        ClassMetrics {
            counts: c,
            accuracy: Ratio::of(c.tp + c.tn, c.total()),
            precision,
            recall,
            f_beta: Ratio {
                value: f_beta(precision.value, recall.value, beta),
                undefined: c.tp + c.fp + c.fn_ == 0,
            },
        }
    }
}

/// Unweighted means over provisions; undefined cells are skipped and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub skipped_precision: usize,
    pub skipped_recall: usize,
    pub skipped_f_beta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub beta: f64,
    pub items: usize,
    pub per_provision: Vec<(ProvisionId, ClassMetrics)>,
    pub micro: ClassMetrics,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
}

fn defined_mean<'a>(xs: impl Iterator<Item = &'a Ratio>) -> (f64, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for r in xs {
        if r.undefined {
            skipped += 1;
        } else {
            sum += r.value;
            n += 1;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, skipped)
}

pub fn compute_metrics(conf: &ProvisionConfusion, beta: f64) -> Result<MetricsSummary> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let per: Vec<(ProvisionId, ClassMetrics)> = conf
        .cells
        .iter()
        .map(|(id, c)| (id.clone(), ClassMetrics::from_counts(*c, beta)))
        .collect();
    let metrics = || per.iter().map(|(_, m)| m);
    let (accuracy, _) = defined_mean(metrics().map(|m| &m.accuracy));
    let (precision, skipped_precision) = defined_mean(metrics().map(|m| &m.precision));
    let (recall, skipped_recall) = defined_mean(metrics().map(|m| &m.recall));
    let (f, skipped_f_beta) = defined_mean(metrics().map(|m| &m.f_beta));
    Ok(MetricsSummary {
        beta,
        items: conf.items,
        micro: ClassMetrics::from_counts(conf.pooled(), beta),
        macro_avg: MacroMetrics {
            accuracy,
            precision,
            recall,
            f_beta: f,
            skipped_precision,
            skipped_recall,
            skipped_f_beta,
        },
        per_provision: per,
    })
}

impl MetricsSummary {
    /// Tab-separated table; `*` marks an undefined (0/0) ratio.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "provision\ttp\tfp\tfn\ttn\taccuracy\tprecision\trecall\tf{}\n",
            self.beta
        );
        let cell = |r: &Ratio| {
            if r.undefined {
                format!("{:.4}*", r.value)
            } else {
                format!("{:.4}", r.value)
            }
        };
        let mut row = |name: &str, m: &ClassMetrics| {
            let c = m.counts;
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                cell(&m.accuracy),
                cell(&m.precision),
                cell(&m.recall),
                cell(&m.f_beta)
            );
        };
        for (id, m) in &self.per_provision {
            row(id.as_str(), m);
        }
        row("micro", &self.micro);
        let m = &self.macro_avg;
        let _ = writeln!(
            out,
            "macro\t\t\t\t\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            m.accuracy, m.precision, m.recall, m.f_beta
        );
        if m.skipped_precision + m.skipped_recall + m.skipped_f_beta > 0 {
            let _ = writeln!(
                out,
                "# * undefined (0/0), reported as 0; macro skips {} precision, {} recall, {} f cells",
                m.skipped_precision, m.skipped_recall, m.skipped_f_beta
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::corpus::tests::catalog;

    fn id(s: &str) -> ProvisionId {
        ProvisionId::new(s).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<ProvisionId> {
        ids.iter().map(|s| id(s)).collect()
    }

    #[test]
    fn single_dpa_examples() {
        let cat = catalog(19);
        let gold = BTreeMap::from([("d".to_string(), set(&["PO1"]))]);
        let hit = dpa_confusion(
            &gold,
            &BTreeMap::from([("d".to_string(), set(&["PO1"]))]),
            &cat,
        )
        .unwrap();
        assert_eq!(hit.get(&id("PO1")).unwrap().tp, 1);
        for (p, c) in &hit.cells[1..] {
            assert_eq!(
                *c,
                Confusion {
                    tn: 1,
                    ..Default::default()
                },
                "{p}"
            );
        }
        let miss =
            dpa_confusion(&gold, &BTreeMap::from([("d".to_string(), set(&[]))]), &cat).unwrap();
        assert_eq!(miss.get(&id("PO1")).unwrap().fn_, 1);
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let cat = catalog(3);
        let a = BTreeMap::from([("x".to_string(), set(&[]))]);
        let b = BTreeMap::from([("y".to_string(), set(&[]))]);
        assert!(dpa_confusion(&a, &b, &cat).is_err());
    }

    #[test]
    fn matches_cell_enumeration_on_random_dpas() {
        let cat = catalog(5);
        let mut rng = crate::rng::from_seed(8);
        for _ in 0..20 {
            let mut draw = || -> BTreeMap<String, BTreeSet<ProvisionId>> {
                (0..3)
                    .map(|d| {
                        let s = (1..=5)
                            .filter(|_| rng.random_bool(0.5))
                            .map(|i| id(&format!("PO{i}")))
                            .collect();
                        (format!("d{d}"), s)
                    })
                    .collect()
            };
            let (gold, pred) = (draw(), draw());
            let conf = dpa_confusion(&gold, &pred, &cat).unwrap();
            for i in 1..=5 {
                let p = id(&format!("PO{i}"));
                let mut want = [0u64; 4];
                for d in gold.keys() {
                    let cell = match (gold[d].contains(&p), pred[d].contains(&p)) {
                        (true, true) => 0,
                        (false, true) => 1,
                        (true, false) => 2,
                        (false, false) => 3,
                    };
                    want[cell] += 1;
                }
                let c = conf.get(&p).unwrap();
                assert_eq!([c.tp, c.fp, c.fn_, c.tn], want);
            }
        }
    }

    #[test]
    fn reported_f2_values() {
        assert_abs_diff_eq!(f_beta(0.751, 0.901, 2.0), 0.866, epsilon = 0.002);
        assert_abs_diff_eq!(f_beta(0.698, 0.966, 2.0), 0.897, epsilon = 0.001);
        assert_eq!(f_beta(1.0, 1.0, 2.0), 1.0);
        assert_eq!(f_beta(0.7, 0.0, 2.0), 0.0);
    }

    #[test]
    fn undefined_ratios_are_flagged_and_skipped() {
        let conf = ProvisionConfusion {
            items: 4,
            cells: vec![
                (
                    id("PO1"),
                    Confusion {
                        tp: 2,
                        fp: 1,
                        fn_: 1,
                        tn: 0,
                    },
                ),
                (
                    id("PO2"),
                    Confusion {
                        tn: 4,
                        ..Default::default()
                    },
                ),
            ],
        };
        let m = compute_metrics(&conf, 2.0).unwrap();
        let po2 = &m.per_provision[1].1;
        assert!(po2.precision.undefined && po2.recall.undefined && po2.f_beta.undefined);
        assert_eq!(po2.precision.value, 0.0);
        assert_eq!(m.macro_avg.skipped_precision, 1);
        assert_abs_diff_eq!(m.macro_avg.precision, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_avg.accuracy, (0.5 + 1.0) / 2.0, epsilon = 1e-12);
        assert!(m.to_tsv().contains("0.0000*"));
        assert!(compute_metrics(&conf, 0.0).is_err());
    }

    fn confusion() -> impl Strategy<Value = Confusion> {
        (0u64..50, 0u64..50, 0u64..50, 0u64..50).prop_map(|(tp, fp, fn_, tn)| Confusion {
            tp,
            fp,
            fn_,
            tn,
        })
    }

    proptest! {
        #[test]
        fn scale_free(cells in prop::collection::vec(confusion(), 1..6), k in 1u64..9) {
            let mk = |scale: u64| ProvisionConfusion {
                items: 0,
                cells: cells.iter().enumerate().map(|(i, c)| (id(&format!("PO{}", i + 1)), Confusion {
                    tp: c.tp * scale, fp: c.fp * scale, fn_: c.fn_ * scale, tn: c.tn * scale,
                })).collect(),
            };
            let (a, b) = (compute_metrics(&mk(1), 2.0).unwrap(), compute_metrics(&mk(k), 2.0).unwrap());
            for ((_, x), (_, y)) in a.per_provision.iter().zip(&b.per_provision) {
                prop_assert!((x.precision.value - y.precision.value).abs() < 1e-12);
                prop_assert!((x.recall.value - y.recall.value).abs() < 1e-12);
                prop_assert!((x.f_beta.value - y.f_beta.value).abs() < 1e-12);
                prop_assert!((x.accuracy.value - y.accuracy.value).abs() < 1e-12);
            }
        }

        #[test]
        fn micro_f_is_formula_of_micro_p_and_r(cells in prop::collection::vec(confusion(), 1..6), beta in 0.25f64..4.0) {
            let conf = ProvisionConfusion {
                items: 0,
                cells: cells.iter().enumerate().map(|(i, c)| (id(&format!("PO{}", i + 1)), *c)).collect(),
            };
            let m = compute_metrics(&conf, beta).unwrap();
            let want = f_beta(m.micro.precision.value, m.micro.recall.value, beta);
            prop_assert!((m.micro.f_beta.value - want).abs() < 1e-12);
            for (_, c) in &m.per_provision {
                for r in [c.accuracy, c.precision, c.recall, c.f_beta] {
                    prop_assert!((0.0..=1.0).contains(&r.value));
                }
            }
        }

        #[test]
        fn totals_cover_every_cell(sets in prop::collection::vec((0u8..8, 0u8..8), 1..10)) {
            let cat = catalog(3);
            let to_set = |bits: u8| -> BTreeSet<ProvisionId> {
                (0..3).filter(|b| bits & (1 << b) != 0).map(|b| id(&format!("PO{}", b + 1))).collect()
            };
            let gold: BTreeMap<String, _> = sets.iter().enumerate().map(|(i, (g, _))| (format!("d{i}"), to_set(*g))).collect();
            let pred: BTreeMap<String, _> = sets.iter().enumerate().map(|(i, (_, p))| (format!("d{i}"), to_set(*p))).collect();
            let conf = dpa_confusion(&gold, &pred, &cat).unwrap();
            let total: u64 = conf.cells.iter().map(|(_, c)| c.total()).sum();
            prop_assert_eq!(total as usize, 3 * sets.len());
        }
    }
}
