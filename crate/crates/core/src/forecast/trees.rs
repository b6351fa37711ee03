//! CART regression trees and the two ensembles built on them.
//!
//! All three models share [`best_split`]: for every feature (ascending) the
//! samples are sorted by value, and every midpoint between consecutive
//! distinct values is scored by the reduction in squared error. Targets are
//! centered on the node mean before accumulation so the gain keeps full
//! relative precision even when the node is almost pure. A split is made
//! only if it strictly reduces squared error (relative margin
//! [`GAIN_TOLERANCE`]); among equally good candidates the lowest feature
//! index, then the lowest threshold, wins.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CdriError, Result};
use crate::rng::{derive_seed, generator};

/// Relative margin (against the node's squared error) a split must clear.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(4),
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;
}

/// Uniform prediction entry point for trees, forests and boosted models.
pub fn predict_ensemble<M: Regressor + ?Sized>(model: &M, x: &[f64]) -> f64 {
    model.predict(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction in squared error.
    pub gain: f64,
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(CdriError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(CdriError::InvalidHyperparameter(format!(
            "{} feature rows for {} targets",
            x.len(),
            y.len()
        )));
    }
    let width = x[0].len();
    if width == 0 || x.iter().any(|row| row.len() != width) {
        return Err(CdriError::InvalidHyperparameter("ragged or empty feature rows".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(CdriError::InvalidHyperparameter("non-finite training value".into()));
    }
    Ok(width)
}

fn mean_of(y: &[f64], indices: &[usize]) -> f64 {
    indices.iter().fold(0.0, |acc, &i| acc + y[i]) / indices.len() as f64
}

/// Best SSE-reducing split of the samples in `indices`, if any.
pub fn best_split(x: &[Vec<f64>], y: &[f64], indices: &[usize], min_samples_leaf: usize) -> Option<Split> {
    let n = indices.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mean = mean_of(y, indices);
    let parent_sse: f64 = indices.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    if parent_sse <= 0.0 {
        return None;
    }
    let total: f64 = indices.iter().map(|&i| y[i] - mean).sum();
    let base = total * total / n as f64;
    let margin = GAIN_TOLERANCE * parent_sse;

    let mut best: Option<Split> = None;
    let mut order = indices.to_vec();
    for feature in 0..x[indices[0]].len() {
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]] - mean;
            let left_n = k + 1;
            let right_n = n - left_n;
            let here = x[order[k]][feature];
            let next = x[order[k + 1]][feature];
            if here == next || left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - base;
            if gain <= margin {
                continue;
            }
            if best.is_none_or(|b| gain > b.gain + margin) {
                best = Some(Split {
                    feature,
                    threshold: 0.5 * (here + next),
                    gain,
                });
            }
        }
    }
    best
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf {
            value: mean_of(self.y, &indices),
            samples: indices.len(),
        };
        self.nodes.push(leaf);
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(split) = best_split(self.x, self.y, &indices, self.params.min_samples_leaf) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Greedy CART fit on rows `x` (samples x features) and targets `y`.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Result<RegressionTree> {
    check_inputs(x, y)?;
    Ok(grow_tree(x, y, params))
}

fn grow_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> RegressionTree {
    let mut grower = Grower {
        x,
        y,
        params,
        nodes: Vec::new(),
    };
    grower.grow((0..y.len()).collect(), 0);
    RegressionTree {
        nodes: grower.nodes,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    }
}

impl RegressionTree {
    /// Feature and threshold of the root split, `None` for a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            TreeNode::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Regressor for RegressionTree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub bootstrap: bool,
    pub master_seed: u64,
    /// `tree_seeds[k] = derive_seed(master_seed, k)`.
    pub tree_seeds: Vec<u64>,
}

/// Bagged regression trees. Trees are grown in parallel; each one draws its
/// bootstrap sample from its own pre-assigned seed so the result does not
/// depend on scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: ForestParams, master_seed: u64) -> Result<ForestModel> {
    check_inputs(x, y)?;
    if params.n_trees == 0 {
        return Err(CdriError::InvalidHyperparameter("n_trees must be at least 1".into()));
    }
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|k| derive_seed(master_seed, k))
        .collect();
    let n = y.len();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            if !params.bootstrap {
                return grow_tree(x, y, params.tree);
            }
            let mut rng = generator(seed);
            let picks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let xs: Vec<Vec<f64>> = picks.iter().map(|&i| x[i].clone()).collect();
            let ys: Vec<f64> = picks.iter().map(|&i| y[i]).collect();
            grow_tree(&xs, &ys, params.tree)
        })
        .collect();
    Ok(ForestModel {
        trees,
        bootstrap: params.bootstrap,
        master_seed,
        tree_seeds,
    })
}

impl Regressor for ForestModel {
    fn predict(&self, x: &[f64]) -> f64 {
        let total = self.trees.iter().fold(0.0, |acc, t| acc + t.predict(x));
        total / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_stages: 50,
            learning_rate: 0.1,
            tree: TreeParams {
                max_depth: Some(2),
                min_samples_leaf: 2,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostStage {
    pub tree: RegressionTree,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub initial: f64,
    pub stages: Vec<BoostStage>,
    /// Training MSE after 0, 1, ..., n stages (length `stages.len() + 1`).
    pub train_mse: Vec<f64>,
}

/// Stagewise least-squares boosting: start from the target mean, then fit
/// each tree to the current residuals and add it scaled by the learning rate.
pub fn fit_boost(x: &[Vec<f64>], y: &[f64], params: BoostParams) -> Result<BoostModel> {
    check_inputs(x, y)?;
    let lr = params.learning_rate;
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(CdriError::InvalidHyperparameter(format!(
            "learning rate {lr} is outside (0, 1]"
        )));
    }
    let n = y.len() as f64;
    let initial = y.iter().sum::<f64>() / n;
    let mut fitted = vec![initial; y.len()];
    let mse = |fitted: &[f64]| y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let mut train_mse = vec![mse(&fitted)];
    let mut stages = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = grow_tree(x, &residuals, params.tree);
        for (f, row) in fitted.iter_mut().zip(x) {
            *f += lr * tree.predict(row);
        }
        train_mse.push(mse(&fitted));
        stages.push(BoostStage {
            tree,
            learning_rate: lr,
        });
    }
    Ok(BoostModel {
        initial,
        stages,
        train_mse,
    })
}

impl Regressor for BoostModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.stages
            .iter()
            .fold(self.initial, |acc, s| acc + s.learning_rate * s.tree.predict(x))
    }
}
