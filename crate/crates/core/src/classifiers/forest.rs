use rand::seq::index::sample;
use rand::Rng as _;

use super::linear::check_task;
use super::{
    argmax, Algorithm, ClassifierModel, FeatureMatrix, Hyperparameters, ModelParams, TaskSpec,
    TrainingMeta,
};
use crate::rng::{self, Rng};
use crate::{par, Result};

/// Gini impurity of a class-count vector; zero for an empty node.
pub fn gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<f64>,
    },
}

/// Nodes stored in creation order, root first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lowest index.
    pub fn vote(&self, x: &[f64]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl ForestParams {
    /// Fraction of trees voting for each class.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.vote(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.into_iter().map(|v| v / n).collect()
    }
}

struct Grower<'a> {
    data: &'a FeatureMatrix,
    hp: &'a Hyperparameters,
    m_try: usize,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.data.n_classes];
        for &r in rows {
            c[self.data.labels[r]] += 1.0;
        }
        c
    }

    /// Best `(feature, threshold, weighted child impurity)` among `m_try`
    /// random features, or `None` when no split lowers the impurity.
    fn best_split(&self, rows: &[usize], parent: f64, rng: &mut Rng) -> Option<(usize, f64)> {
        let k = self.data.n_classes;
        let n = rows.len() as f64;
        let min_leaf = self.hp.min_leaf;
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in sample(rng, self.data.dim(), self.m_try).into_iter() {
            let mut vals: Vec<(f64, usize)> = rows
                .iter()
                .map(|&r| (self.data.rows[r][feature], self.data.labels[r]))
                .collect();
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0.0; k];
            let mut right = self.counts(rows);
            for i in 0..vals.len() - 1 {
                left[vals[i].1] += 1.0;
                right[vals[i].1] -= 1.0;
                if vals[i].0 == vals[i + 1].0 || i + 1 < min_leaf || vals.len() - i - 1 < min_leaf {
                    continue;
                }
                let nl = (i + 1) as f64;
                let score = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                if score < parent - 1e-12 && best.is_none_or(|b| score < b.2) {
                    best = Some((feature, 0.5 * (vals[i].0 + vals[i + 1].0), score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&self, rows: Vec<usize>, rng: &mut Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { counts: Vec::new() }];
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((slot, rows, depth)) = stack.pop() {
            let counts = self.counts(&rows);
            let parent = gini(&counts);
            let split =
                if depth >= self.hp.max_depth || parent == 0.0 || rows.len() < 2 * self.hp.min_leaf
                {
                    None
                } else {
                    self.best_split(&rows, parent, rng)
                };
            match split {
                None => nodes[slot] = Node::Leaf { counts },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|&&i| self.data.rows[i][feature] <= threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}

/// Random forest of Gini trees on bootstrap samples with `sqrt(d)` candidate
/// features per split. Tree `t` draws from its own stream of `seed`, so the
/// forest does not depend on how trees are scheduled.
pub fn fit_forest(
    task: &TaskSpec,
    data: &FeatureMatrix,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ClassifierModel> {
    hp.validate()?;
    check_task(task, data)?;
    let grower = Grower {
        data,
        hp,
        m_try: ((data.dim() as f64).sqrt().round() as usize).clamp(1, data.dim()),
    };
    let n = data.len();
    let trees = par::map_range(hp.n_trees, |t| {
        let mut rng = rng::stream(seed, t as u64);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        grower.grow(rows, &mut rng)
    });
    let params = ForestParams {
        n_classes: task.n_classes(),
        trees,
    };
    Ok(ClassifierModel {
        algorithm: Algorithm::RandomForest,
        task: task.clone(),
        dim: data.dim(),
        meta: TrainingMeta {
            seed,
            hyperparameters: hp.clone(),
            epochs_run: 0,
            final_loss: 0.0,
        },
        params: ModelParams::Forest(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::Input;
    use crate::corpus::ProvisionId;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5.0, 0.0]), 0.0);
        assert!((gini(&[2.0, 2.0]) - 0.5).abs() < 1e-15);
        assert!((gini(&[1.0, 1.0, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0]), 0.0);
    }

    fn stripes() -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 / 40.0, ((i * 7) % 11) as f64])
            .collect();
        let labels = (0..40).map(|i| usize::from(i >= 20)).collect();
        FeatureMatrix::new(rows, labels, 2).unwrap()
    }

    #[test]
    fn single_stump_finds_midpoint() {
        let data = FeatureMatrix::new(
            vec![vec![0.0], vec![1.0], vec![3.0], vec![4.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let hp = Hyperparameters::default();
        let g = Grower {
            data: &data,
            hp: &hp,
            m_try: 1,
        };
        let t = g.grow(vec![0, 1, 2, 3], &mut rng::from_seed(0));
        assert_eq!(t.nodes.len(), 3);
        assert!(
            matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 2.0)
        );
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn forest_separates_threshold_data() {
        let data = stripes();
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let hp = Hyperparameters {
            n_trees: 25,
            ..Hyperparameters::default()
        };
        let m = fit_forest(&task, &data, &hp, 3).unwrap();
        let correct = data
            .rows
            .iter()
            .zip(&data.labels)
            .filter(|(x, &y)| m.predict_class(Input::Vector(x), 0.5).unwrap() == y)
            .count();
        assert!(correct >= 38, "{correct}/40");
        let s = m.predict_scores(Input::Vector(&data.rows[0])).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_depth_and_min_leaf_hold() {
        let data = stripes();
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let hp = Hyperparameters {
            n_trees: 5,
            max_depth: 2,
            min_leaf: 3,
            ..Hyperparameters::default()
        };
        let ModelParams::Forest(f) = fit_forest(&task, &data, &hp, 1).unwrap().params else {
            unreachable!()
        };
        for t in &f.trees {
            assert!(t.depth() <= 2);
            for n in &t.nodes {
                if let Node::Leaf { counts } = n {
                    assert!(counts.iter().sum::<f64>() >= 3.0);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let data = stripes();
        let task = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let hp = Hyperparameters {
            n_trees: 8,
            ..Hyperparameters::default()
        };
        assert_eq!(
            fit_forest(&task, &data, &hp, 9).unwrap(),
            fit_forest(&task, &data, &hp, 9).unwrap()
        );
    }
}
