use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// A node with at most this many samples becomes a leaf.
    pub min_leaf: usize,
    /// Candidate features drawn per split.
    pub features_per_split: usize,
    /// `None` grows trees until the leaf rules stop them.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            features_per_split: 7,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u16,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub leaf_value: f64,
    pub is_leaf: bool,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
            leaf_value: value,
            is_leaf: true,
        }
    }
}

/// A regression tree stored as a node array; node 0 is the root and children always
/// come after their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf {
                return node.leaf_value;
            }
            i = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf {
                1
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub feature_dim: usize,
    pub seed: u64,
    pub config: ForestConfig,
}

impl ForestModel {
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.feature_dim,
                x.len()
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::ModelMissing);
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_slice(&self, x: &[f64]) -> Result<f64> {
        self.predict(ArrayView1::from(x))
    }
}

fn mean(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best variance-reduction split of `idx` on `feature`, scanning sorted values.
fn best_split_on(x: ArrayView2<f64>, y: &[f64], idx: &[usize], feature: usize) -> Option<Split> {
    let mut order: Vec<(f64, f64)> = idx.iter().map(|&i| (x[[i, feature]], y[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = order.len() as f64;
    let total: f64 = order.iter().map(|p| p.1).sum();
    let mut left_sum = 0.0;
    let mut best: Option<Split> = None;
    for j in 0..order.len() - 1 {
        left_sum += order[j].1;
        if order[j].0 == order[j + 1].0 {
            continue;
        }
        let nl = (j + 1) as f64;
        let nr = n - nl;
        let right_sum = total - left_sum;
        // SSE reduction up to a constant: sum_l^2/n_l + sum_r^2/n_r - total^2/n
        let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / n;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            let threshold = order[j].0 + (order[j + 1].0 - order[j].0) / 2.0;
            // the midpoint can round onto the upper value for adjacent floats
            let threshold = if threshold >= order[j + 1].0 { order[j].0 } else { threshold };
            best = Some(Split { feature, threshold, gain });
        }
    }
    best
}

fn build_tree(x: ArrayView2<f64>, y: &[f64], config: &ForestConfig, seed: u64) -> Tree {
    let mut rng = seeding::rng(seed);
    let n = x.nrows();
    let dim = x.ncols();
    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mtry = config.features_per_split.clamp(1, dim);
    let mut nodes = vec![Node::leaf(0.0)];
    let mut stack = vec![(0usize, sample, 0usize)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let value = mean(y, &idx);
        let constant = idx.iter().all(|&i| y[i] == y[idx[0]]);
        let depth_capped = config.max_depth.is_some_and(|d| depth >= d);
        if idx.len() <= config.min_leaf || constant || depth_capped {
            nodes[slot] = Node::leaf(value);
            continue;
        }
        let features = index::sample(&mut rng, dim, mtry).into_vec();
        let mut best: Option<Split> = None;
        for f in features {
            if let Some(s) = best_split_on(x, y, &idx, f) {
                if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            nodes[slot] = Node::leaf(value);
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[[i, split.feature]] <= split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::leaf(0.0));
        nodes.push(Node::leaf(0.0));
        nodes[slot] = Node {
            feature: split.feature as u16,
            threshold: split.threshold,
            left: l as u32,
            right: r as u32,
            leaf_value: value,
            is_leaf: false,
        };
        stack.push((r, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

/// Trains a bagged regression forest. Each tree draws from its own stream derived from
/// `seed`, so the model is identical for any thread count.
pub fn train_forest(x: ArrayView2<f64>, y: &[f64], config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows for {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.ncols() == 0 || x.ncols() > u16::MAX as usize {
        return Err(Error::DimensionMismatch(format!("{} feature columns", x.ncols())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("training data contains NaN or infinite values".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| build_tree(x, y, config, seeding::derive(seed, t as u64)))
        .collect();
    Ok(ForestModel {
        trees,
        feature_dim: x.ncols(),
        seed,
        config: *config,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
