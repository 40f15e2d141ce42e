use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{fit, Algorithm, ClassifierModel, FeatureMatrix, Hyperparameters, Input, TaskSpec};
use crate::eval::{f_beta, Confusion};
use crate::{par, Error, Result};

/// Candidate values per hyperparameter; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub hidden_sizes: Vec<Vec<usize>>,
    pub n_trees: Vec<usize>,
    pub max_depths: Vec<usize>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl HyperGrid {
    /// Cartesian product in nested-loop order, first field outermost.
    pub fn cells(&self, base: &Hyperparameters) -> Vec<Hyperparameters> {
        let mut out = Vec::new();
        for &batch_size in &axis(&self.batch_sizes, base.batch_size) {
            for &epochs in &axis(&self.epochs, base.epochs) {
                for &learning_rate in &axis(&self.learning_rates, base.learning_rate) {
                    for hidden in &axis(&self.hidden_sizes, base.hidden_sizes.clone()) {
                        for &n_trees in &axis(&self.n_trees, base.n_trees) {
                            for &max_depth in &axis(&self.max_depths, base.max_depth) {
                                out.push(Hyperparameters {
                                    batch_size,
                                    epochs,
                                    learning_rate,
                                    hidden_sizes: hidden.clone(),
                                    n_trees,
                                    max_depth,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub hyperparameters: Hyperparameters,
    /// Validation F2, `None` when fitting failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl Leaderboard {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn best_hyperparameters(&self) -> &Hyperparameters {
        &self.best_cell().hyperparameters
    }

    /// Cells in enumeration order, tab-separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("cell\tbatch_size\tepochs\tlearning_rate\thidden_sizes\tn_trees\tmax_depth\tval_f2\tbest\tnote\n");
        for c in &self.cells {
            let h = &c.hyperparameters;
            let hidden: Vec<String> = h.hidden_sizes.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.index,
                h.batch_size,
                h.epochs,
                h.learning_rate,
                hidden.join(","),
                h.n_trees,
                h.max_depth,
                c.score.map_or("-".into(), |s| format!("{s:.6}")),
                if c.index == self.best { "*" } else { "" },
                c.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Evaluates every cell with `evaluate(hp)` (in parallel) and keeps the one
/// with the highest score; ties go to the earliest cell. Failing cells are
/// recorded, and only an all-failing grid is an error.
pub fn grid_search_with<F>(
    grid: &HyperGrid,
    base: &Hyperparameters,
    evaluate: F,
) -> Result<Leaderboard>
where
    F: Fn(&Hyperparameters) -> Result<f64> + Sync + Send,
{
    let hps = grid.cells(base);
    let results = par::map(&hps, |hp| evaluate(hp));
    let cells: Vec<GridCell> = hps
        .into_iter()
        .zip(results)
        .enumerate()
        .map(|(index, (hyperparameters, r))| match r {
            Ok(s) => GridCell {
                index,
                hyperparameters,
                score: Some(s),
                error: None,
            },
            Err(e) => GridCell {
                index,
                hyperparameters,
                score: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for c in &cells {
        if let Some(s) = c.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c.index, s));
            }
        }
    }
    match best {
        Some((best, _)) => Ok(Leaderboard { cells, best }),
        None => Err(Error::Validation(format!(
            "every grid cell failed; first error: {}",
            cells
                .first()
                .and_then(|c| c.error.clone())
                .unwrap_or_default()
        ))),
    }
}

/// Grid search over vector features with validation F2 as the criterion.
pub fn grid_search(
    algorithm: Algorithm,
    task: &TaskSpec,
    grid: &HyperGrid,
    base: &Hyperparameters,
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    seed: u64,
) -> Result<Leaderboard> {
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    grid_search_with(grid, base, |hp| {
        let model = fit(algorithm, task, train, hp, seed)?;
        validation_f2(&model, val)
    })
}

/// Binary: F2 of the positive class. Multi-class: mean F2 over provision
/// classes (excluding `other`) that have any gold or predicted example.
pub fn validation_f2(model: &ClassifierModel, val: &FeatureMatrix) -> Result<f64> {
    let threshold = model.default_threshold();
    let predicted = val
        .rows
        .iter()
        .map(|x| model.predict_class(Input::Vector(x), threshold))
        .collect::<Result<Vec<usize>>>()?;
    Ok(f2_from_classes(&model.task, &val.labels, &predicted))
}

pub(crate) fn f2_from_classes(task: &TaskSpec, gold: &[usize], predicted: &[usize]) -> f64 {
    let classes: Vec<usize> = if task.is_binary() {
        vec![0]
    } else {
        (0..task.other_index()).collect()
    };
    let mut scores = Vec::new();
    for k in classes {
        let mut c = Confusion::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            c.record(g == k, p == k);
        }
        if c.tp + c.fp + c.fn_ == 0 {
            continue;
        }
        let prec = if c.tp + c.fp == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let rec = if c.tp + c.fn_ == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fn_) as f64
        };
        scores.push(f_beta(prec, rec, 2.0));
    }
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}
