//! Least-squares gradient boosting over size-limited regression trees.

use super::{LsBoostParams, RegressorError, Result};
use serde::{Deserialize, Serialize};

/// Flat tree node. Internal nodes send `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    /// Mean residual of the training rows reaching this node; the output at leaves.
    pub value: f64,
    /// Training rows reaching this node.
    pub count: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }

    /// Child reached by `x`, or `None` at a leaf.
    pub fn next(&self, x: &[f64]) -> Option<usize> {
        let (f, t) = (self.feature?, self.threshold?);
        if x[f] <= t {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(next) = node.next(x) {
            node = &self.nodes[next];
        }
        node.value
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best variance-reducing split of `rows`, scanning features in index order and
/// thresholds (midpoints between consecutive distinct values) in ascending order.
/// Only a strictly larger gain replaces the incumbent, so ties go to the lowest
/// feature index, then the lowest threshold.
fn best_split(
    columns: &[Vec<f64>],
    sorted: &[Vec<usize>],
    in_node: &[bool],
    residual: &[f64],
    count: usize,
    total: f64,
    min_leaf: usize,
) -> Option<Split> {
    if count < 2 * min_leaf {
        return None;
    }
    let parent = total * total / count as f64;
    let mut best: Option<Split> = None;
    for (f, order) in sorted.iter().enumerate() {
        let col = &columns[f];
        let mut left_n = 0usize;
        let mut left_sum = 0.0;
        let mut prev: Option<usize> = None;
        #[allow(clippy::explicit_counter_loop)]
        for &i in order.iter().filter(|&&i| in_node[i]) {
            if let Some(p) = prev {
                let (a, b) = (col[p], col[i]);
                let right_n = count - left_n;
                if b > a && left_n >= min_leaf && right_n >= min_leaf {
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
                    if gain > best.as_ref().map_or(0.0, |s| s.gain) {
                        let mut threshold = 0.5 * (a + b);
                        if threshold >= b {
                            threshold = a;
                        }
                        best = Some(Split {
                            feature: f,
                            threshold,
                            gain,
                        });
                    }
                }
            }
            left_n += 1;
            left_sum += residual[i];
            prev = Some(i);
        }
    }
    best
}

struct Open {
    node: usize,
    rows: Vec<usize>,
    split: Option<Split>,
}

/// Grows a tree best-first on `residual`: the open leaf with the largest gain is
/// split next, until `max_splits` splits exist or no split keeps `min_leaf` rows
/// on both sides. `columns` is column-major, `sorted[f]` orders all rows by feature `f`.
pub fn fit_tree(
    columns: &[Vec<f64>],
    sorted: &[Vec<usize>],
    rows: &[usize],
    residual: &[f64],
    max_splits: usize,
    min_leaf: usize,
) -> RegressionTree {
    let n = residual.len();
    let mut in_node = vec![false; n];
    let open_split = |rows: &[usize], in_node: &mut Vec<bool>| -> (f64, Option<Split>) {
        let total: f64 = rows.iter().map(|&i| residual[i]).sum();
        if max_splits == 0 {
            return (total, None);
        }
        for &i in rows {
            in_node[i] = true;
        }
        let s = best_split(columns, sorted, in_node, residual, rows.len(), total, min_leaf);
        for &i in rows {
            in_node[i] = false;
        }
        (total, s)
    };

    let (total, split) = open_split(rows, &mut in_node);
    let mut nodes = vec![TreeNode {
        id: 0,
        feature: None,
        threshold: None,
        left: None,
        right: None,
        value: total / rows.len() as f64,
        count: rows.len(),
    }];
    let mut open = vec![Open {
        node: 0,
        rows: rows.to_vec(),
        split,
    }];

    let mut splits = 0;
    while splits < max_splits {
        let Some(pick) = open
            .iter()
            .enumerate()
            .filter_map(|(k, o)| o.split.as_ref().map(|s| (k, s.gain, o.node)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)))
            .map(|(k, _, _)| k)
        else {
            break;
        };
        let Open { node, rows, split } = open.swap_remove(pick);
        let split = split.expect("picked a splittable leaf");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| columns[split.feature][i] <= split.threshold);
        for child_rows in [left_rows, right_rows] {
            let (total, s) = open_split(&child_rows, &mut in_node);
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                feature: None,
                threshold: None,
                left: None,
                right: None,
                value: total / child_rows.len() as f64,
                count: child_rows.len(),
            });
            open.push(Open {
                node: id,
                rows: child_rows,
                split: s,
            });
        }
        let (l, r) = (nodes.len() - 2, nodes.len() - 1);
        let parent = &mut nodes[node];
        parent.feature = Some(split.feature);
        parent.threshold = Some(split.threshold);
        parent.left = Some(l);
        parent.right = Some(r);
        splits += 1;
    }
    RegressionTree { nodes }
}

/// `initial + learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub n_features: usize,
    pub initial: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.initial;
        for t in &self.trees {
            acc += self.learning_rate * t.predict(x);
        }
        acc
    }

    /// Boosts on squared loss. Returns the ensemble and the training MSE after every
    /// cycle. A cycle whose tree would raise the training loss (possible only through
    /// rounding) is dropped, so the trace never increases.
    pub fn fit(params: &LsBoostParams, x: &[Vec<f64>], y: &[f64]) -> Result<(Self, Vec<f64>)> {
        let n = y.len();
        let need = if params.max_splits == 0 { 1 } else { 2 * params.min_leaf };
        if n < need {
            return Err(RegressorError::TooFewRows { need, got: n });
        }
        let width = x[0].len();
        let columns: Vec<Vec<f64>> = (0..width).map(|f| x.iter().map(|r| r[f]).collect()).collect();
        let sorted: Vec<Vec<usize>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let all: Vec<usize> = (0..n).collect();

        let initial = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![initial; n];
        let mse_of = |p: &[f64]| p.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n as f64;
        let mut loss = mse_of(&pred);
        let mut trees = Vec::with_capacity(params.cycles);
        let mut trace = Vec::with_capacity(params.cycles);
        let mut residual = vec![0.0; n];
        let mut candidate = vec![0.0; n];

        for _ in 0..params.cycles {
            for i in 0..n {
                residual[i] = y[i] - pred[i];
            }
            let tree = fit_tree(&columns, &sorted, &all, &residual, params.max_splits, params.min_leaf);
            for i in 0..n {
                candidate[i] = pred[i] + params.learning_rate * tree.predict(&x[i]);
            }
            let new_loss = mse_of(&candidate);
            if new_loss <= loss {
                std::mem::swap(&mut pred, &mut candidate);
                loss = new_loss;
                trees.push(tree);
            }
            trace.push(loss);
        }
        let ensemble = TreeEnsemble {
            n_features: width,
            initial,
            learning_rate: params.learning_rate,
            trees,
        };
        Ok((ensemble, trace))
    }
}
