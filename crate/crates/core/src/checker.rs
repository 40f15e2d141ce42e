//! Sentence predictions to per-provision verdicts: a provision is satisfied
//! when at least one sentence supports it, and a DPA is complete when no
//! provision is violated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{ProvisionCatalog, ProvisionId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sentence_index: u32,
    pub text: String,
    /// Union of binary decisions, or at most one label in multi-class mode.
    pub predicted: BTreeSet<ProvisionId>,
    /// Confidence per predicted label.
    pub scores: BTreeMap<ProvisionId, f64>,
}

impl SentencePrediction {
    pub fn score(&self, id: &ProvisionId) -> f64 {
        self.scores.get(id).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub sentence_index: u32,
    pub text: String,
    pub score: f64,
}

/// Supporting sentences per provision, catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub provisions: Vec<(ProvisionId, Vec<Support>)>,
}

impl Aggregation {
    pub fn get(&self, id: &ProvisionId) -> Option<&[Support]> {
        self.provisions
            .iter()
            .find(|(p, _)| p == id)
            .map(|(_, s)| s.as_slice())
    }
}

/// Groups sentences by predicted provision, keeping only predictions scored
/// at least `floor` (a floor of 0 or below keeps everything, margins
/// included). Each list is sorted by descending score, then index.
pub fn aggregate(
    predictions: &[SentencePrediction],
    catalog: &ProvisionCatalog,
    floor: f64,
) -> Result<Aggregation> {
    let mut groups: BTreeMap<&ProvisionId, Vec<Support>> =
        catalog.ids().map(|id| (id, Vec::new())).collect();
    for p in predictions {
        for id in &p.predicted {
            let score = p.score(id);
            if floor > 0.0 && score < floor {
                continue;
            }
            groups
                .get_mut(id)
                .ok_or_else(|| Error::UnknownProvision(id.to_string()))?
                .push(Support {
                    sentence_index: p.sentence_index,
                    text: p.text.clone(),
                    score,
                });
        }
    }
    Ok(Aggregation {
        provisions: catalog
            .ids()
            .map(|id| {
                let mut s = groups.remove(id).unwrap_or_default();
                s.sort_by(|a, b| {
                    b.score
                        .total_cmp(&a.score)
                        .then(a.sentence_index.cmp(&b.sentence_index))
                });
                (id.clone(), s)
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionVerdict {
    pub id: ProvisionId,
    pub title: String,
    pub status: Status,
    pub supporting: Vec<Support>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub satisfied_count: usize,
    pub violation_count: usize,
    pub complete: bool,
}

/// Identifies what produced a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub tool_version: String,
    pub model_digest: String,
    pub catalog_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub dpa_id: String,
    pub provisions: Vec<ProvisionVerdict>,
    pub summary: Summary,
    pub audit: Audit,
}

impl CompletenessReport {
    pub fn violations(&self) -> impl Iterator<Item = &ProvisionVerdict> {
        self.provisions
            .iter()
            .filter(|v| v.status == Status::Violated)
    }

    pub fn satisfied(&self) -> BTreeSet<ProvisionId> {
        self.provisions
            .iter()
            .filter(|v| v.status == Status::Satisfied)
            .map(|v| v.id.clone())
            .collect()
    }
}

pub fn check_completeness(
    dpa_id: &str,
    agg: &Aggregation,
    catalog: &ProvisionCatalog,
    model_digest: &str,
) -> CompletenessReport {
    let provisions: Vec<ProvisionVerdict> = catalog
        .provisions
        .iter()
        .map(|p| {
            let supporting = agg.get(&p.id).map(<[Support]>::to_vec).unwrap_or_default();
            ProvisionVerdict {
                id: p.id.clone(),
                title: p.title.clone(),
                status: if supporting.is_empty() {
                    Status::Violated
                } else {
                    Status::Satisfied
                },
                supporting,
            }
        })
        .collect();
    let violation_count = provisions
        .iter()
        .filter(|v| v.status == Status::Violated)
        .count();
    CompletenessReport {
        dpa_id: dpa_id.to_string(),
        summary: Summary {
            satisfied_count: provisions.len() - violation_count,
            violation_count,
            complete: violation_count == 0,
        },
        provisions,
        audit: Audit {
            tool_version: crate::TOOL_VERSION.to_string(),
            model_digest: model_digest.to_string(),
            catalog_digest: catalog.digest(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Human,
    Machine,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" | "text" => Ok(ReportFormat::Human),
            "machine" | "json" => Ok(ReportFormat::Machine),
            _ => Err(Error::InvalidInput(format!("unknown report format {s:?}"))),
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plain-text report: violations first (catalog order), then satisfied
/// provisions with their supporting excerpts.
pub fn render_human(r: &CompletenessReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "DPA: {}", r.dpa_id);
    let _ = writeln!(out, "COMPLETE: {}", yes_no(r.summary.complete));
    for v in r.violations() {
        let _ = writeln!(out, "VIOLATION {} {}", v.id, v.title);
    }
    for v in r
        .provisions
        .iter()
        .filter(|v| v.status == Status::Satisfied)
    {
        let _ = writeln!(out, "SATISFIED {} {}", v.id, v.title);
        for s in &v.supporting {
            let _ = writeln!(
                out,
                "    [{}] ({:.3}) {}",
                s.sentence_index, s.score, s.text
            );
        }
    }
    let _ = writeln!(
        out,
        "SUMMARY satisfied={} violations={} complete={}",
        r.summary.satisfied_count,
        r.summary.violation_count,
        yes_no(r.summary.complete)
    );
    let _ = writeln!(out, "tool: {}", r.audit.tool_version);
    let _ = writeln!(out, "model: {}", r.audit.model_digest);
    let _ = writeln!(out, "catalog: {}", r.audit.catalog_digest);
    out
}

pub fn render_machine(r: &CompletenessReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_report(r: &CompletenessReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Human => render_human(r),
        ReportFormat::Machine => render_machine(r),
    }
}

pub fn parse_machine_report(text: &str) -> Result<CompletenessReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: "report".into(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::tests::catalog;

    fn id(s: &str) -> ProvisionId {
        ProvisionId::new(s).unwrap()
    }

    fn pred(i: u32, labels: &[(&str, f64)]) -> SentencePrediction {
        SentencePrediction {
            sentence_index: i,
            text: format!("sentence {i}"),
            predicted: labels.iter().map(|(l, _)| id(l)).collect(),
            scores: labels.iter().map(|(l, s)| (id(l), *s)).collect(),
        }
    }

    #[test]
    fn support_is_ordered_by_score() {
        let cat = catalog(3);
        let agg = aggregate(
            &[
                pred(0, &[("PO1", 0.6)]),
                pred(1, &[("PO1", 0.9)]),
                pred(2, &[("PO1", 0.9)]),
            ],
            &cat,
            0.0,
        )
        .unwrap();
        let s: Vec<u32> = agg
            .get(&id("PO1"))
            .unwrap()
            .iter()
            .map(|s| s.sentence_index)
            .collect();
        assert_eq!(s, [1, 2, 0]);
        let empty = aggregate(&[], &cat, 0.0).unwrap();
        assert!(empty.provisions.iter().all(|(_, s)| s.is_empty()));
        assert!(aggregate(&[pred(0, &[("PO9", 1.0)])], &cat, 0.0).is_err());
    }

    #[test]
    fn verdicts() {
        let cat = catalog(19);
        let all: Vec<SentencePrediction> = (1..=19)
            .map(|i| pred(i, &[(&format!("PO{i}"), 0.8)]))
            .collect();
        let r = check_completeness("d", &aggregate(&all, &cat, 0.0).unwrap(), &cat, "m");
        assert!(r.summary.complete);
        assert_eq!(r.summary.violation_count, 0);
        let text = render_human(&r);
        assert!(text.lines().any(|l| l == "COMPLETE: yes"));
        assert!(!text.contains("VIOLATION"));

        let r = check_completeness("d", &aggregate(&[], &cat, 0.0).unwrap(), &cat, "m");
        assert_eq!(r.summary.violation_count, 19);
        assert!(!r.summary.complete);

        let some = [pred(0, &[("PO1", 0.7), ("PO3", 0.6)])];
        let r = check_completeness("d", &aggregate(&some, &cat, 0.0).unwrap(), &cat, "m");
        let expected: Vec<ProvisionId> = cat
            .ids()
            .filter(|p| !["PO1", "PO3"].contains(&p.as_str()))
            .cloned()
            .collect();
        let got: Vec<ProvisionId> = r.violations().map(|v| v.id.clone()).collect();
        assert_eq!(got, expected);
        let text = render_human(&r);
        assert_eq!(
            text.lines().filter(|l| l.starts_with("VIOLATION")).count(),
            17
        );
        let first_sat = text
            .lines()
            .position(|l| l.starts_with("SATISFIED"))
            .unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let last_vio = lines
            .iter()
            .rposition(|l| l.starts_with("VIOLATION"))
            .unwrap();
        assert!(last_vio < first_sat);
        assert!(text.contains("catalog: ") && text.contains("model: m"));
        assert_eq!(parse_machine_report(&render_machine(&r)).unwrap(), r);
    }

    #[test]
    fn confidence_floor() {
        let cat = catalog(2);
        let p = [pred(0, &[("PO1", 0.4)]), pred(1, &[("PO2", 0.9)])];
        let r = check_completeness("d", &aggregate(&p, &cat, 0.5).unwrap(), &cat, "m");
        assert_eq!(r.satisfied(), BTreeSet::from([id("PO2")]));
    }

    fn arb_preds() -> impl Strategy<Value = Vec<SentencePrediction>> {
        prop::collection::vec(
            (prop::collection::btree_set(1usize..=6, 0..3), 0.0f64..1.0),
            0..12,
        )
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (labels, s))| {
                    let ls: Vec<(String, f64)> =
                        labels.iter().map(|l| (format!("PO{l}"), s)).collect();
                    let refs: Vec<(&str, f64)> = ls.iter().map(|(l, s)| (l.as_str(), *s)).collect();
                    pred(i as u32, &refs)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn grouping_matches_regrouping(preds in arb_preds()) {
            let cat = catalog(6);
            let agg = aggregate(&preds, &cat, 0.0).unwrap();
            for pid in cat.ids() {
                let mut want: Vec<u32> = preds.iter().filter(|p| p.predicted.contains(pid)).map(|p| p.sentence_index).collect();
                let mut got: Vec<u32> = agg.get(pid).unwrap().iter().map(|s| s.sentence_index).collect();
                want.sort_unstable();
                got.sort_unstable();
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn adding_predictions_is_monotone(preds in arb_preds(), extra in arb_preds()) {
            let cat = catalog(6);
            let before = check_completeness("d", &aggregate(&preds, &cat, 0.0).unwrap(), &cat, "m");
            let mut more = preds.clone();
            more.extend(extra);
            let after = check_completeness("d", &aggregate(&more, &cat, 0.0).unwrap(), &cat, "m");
            prop_assert!(before.satisfied().is_subset(&after.satisfied()));
            prop_assert_eq!(after.summary.complete, after.summary.violation_count == 0);
        }

        #[test]
        fn verdict_ignores_scores(preds in arb_preds(), s in 0.0f64..1.0) {
            let cat = catalog(6);
            let rescored: Vec<SentencePrediction> = preds.iter().cloned().map(|mut p| {
                p.scores.values_mut().for_each(|v| *v = s);
                p
            }).collect();
            let a = check_completeness("d", &aggregate(&preds, &cat, 0.0).unwrap(), &cat, "m");
            let b = check_completeness("d", &aggregate(&rescored, &cat, 0.0).unwrap(), &cat, "m");
            prop_assert_eq!(a.satisfied(), b.satisfied());
        }
    }
}
