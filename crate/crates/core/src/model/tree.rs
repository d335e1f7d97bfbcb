//! Exact greedy CART for regression.
//!
//! Candidate thresholds are midpoints between consecutive distinct observed
//! values of a feature among the node's rows. Rows missing that feature are
//! sent, while scoring, to whichever side gives the lower squared error, and
//! that side is stored as the node's default direction.
//!
//! Rows are processed in a canonical order (by target, then feature cells)
//! so that every sum, and therefore the fitted tree, is independent of the
//! input row order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

use super::{ModelError, Predictor, TrainParams, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        prediction: f64,
        n_rows: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        default_direction: Direction,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Follows the row to a leaf. Observed values below the threshold go
    /// left; missing values take the default direction.
    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_direction,
                    left,
                    right,
                } => {
                    let go_left = match row[*feature] {
                        Some(v) => v < *threshold,
                        None => *default_direction == Direction::Left,
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Every (feature, threshold) pair in pre-order.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = node
            {
                out.push((*feature, *threshold));
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: TreeNode,
    pub n_features: usize,
}

impl Predictor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError> {
        self.check_arity(row)?;
        Ok(self.root.predict(row))
    }
}

pub fn fit_tree(ds: &Dataset, params: &TrainParams) -> Result<RegressionTree, ModelError> {
    params.validate()?;
    let data = TrainingData::from_dataset(ds)?;
    let needed = params.min_leaf_rows.max(1);
    if data.n_rows < needed {
        return Err(ModelError::TooFewRows {
            needed,
            found: data.n_rows,
        });
    }
    let grower = Grower::new(&data);
    Ok(RegressionTree {
        root: grower.grow(&data.targets, params),
        n_features: data.n_features,
    })
}

/// Best split found at one node.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    direction: Direction,
    /// Σ_L²/n_L + Σ_R²/n_R; larger is a lower child SSE.
    score: f64,
}

struct NodeRows {
    /// Node rows in canonical order.
    rows: Vec<u32>,
    /// Per feature, observed rows sorted by value (ties canonical).
    sorted: Vec<Vec<u32>>,
    /// Per feature, rows missing that feature, canonical order.
    missing: Vec<Vec<u32>>,
}

/// Presorted training layout shared by every tree grown on the same
/// feature matrix.
pub(crate) struct Grower<'a> {
    data: &'a TrainingData,
    root: NodeRows,
}

fn cmp_cell(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

impl<'a> Grower<'a> {
    pub(crate) fn new(data: &'a TrainingData) -> Self {
        let mut canonical: Vec<u32> = (0..data.n_rows as u32).collect();
        canonical.sort_by(|&a, &b| {
            let (a, b) = (a as usize, b as usize);
            data.targets[a].total_cmp(&data.targets[b]).then_with(|| {
                (0..data.n_features)
                    .map(|f| cmp_cell(data.get(a, f), data.get(b, f)))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
        });
        let mut sorted = Vec::with_capacity(data.n_features);
        let mut missing = Vec::with_capacity(data.n_features);
        for f in 0..data.n_features {
            let (mut obs, miss): (Vec<u32>, Vec<u32>) = canonical
                .iter()
                .partition(|&&r| data.get(r as usize, f).is_some());
            // stable: equal values keep canonical order
            obs.sort_by(|&a, &b| cmp_cell(data.get(a as usize, f), data.get(b as usize, f)));
            sorted.push(obs);
            missing.push(miss);
        }
        Self {
            data,
            root: NodeRows {
                rows: canonical,
                sorted,
                missing,
            },
        }
    }

    pub(crate) fn grow(&self, targets: &[f64], params: &TrainParams) -> TreeNode {
        let mut side = vec![false; self.data.n_rows];
        self.grow_node(
            NodeRows {
                rows: self.root.rows.clone(),
                sorted: self.root.sorted.clone(),
                missing: self.root.missing.clone(),
            },
            targets,
            params,
            0,
            &mut side,
        )
    }

    fn grow_node(
        &self,
        node: NodeRows,
        targets: &[f64],
        params: &TrainParams,
        depth: usize,
        side: &mut [bool],
    ) -> TreeNode {
        let n = node.rows.len();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for &r in &node.rows {
            let t = targets[r as usize];
            sum += t;
            sum_sq += t * t;
        }
        let leaf = TreeNode::Leaf {
            prediction: sum / n as f64,
            n_rows: n,
        };
        if depth >= params.max_depth || n < 2 * params.min_leaf_rows {
            return leaf;
        }
        let Some(best) = self.best_split(&node, targets, params.min_leaf_rows) else {
            return leaf;
        };
        let gain = best.score - sum * sum / n as f64;
        if !(gain > 1e-12 * sum_sq.max(f64::MIN_POSITIVE)) {
            return leaf;
        }

        for &r in &node.rows {
            side[r as usize] = match self.data.get(r as usize, best.feature) {
                Some(v) => v < best.threshold,
                None => best.direction == Direction::Left,
            };
        }
        let split = |list: &[u32]| -> (Vec<u32>, Vec<u32>) { list.iter().partition(|&&r| side[r as usize]) };
        let (l_rows, r_rows) = split(&node.rows);
        let mut l_sorted = Vec::with_capacity(self.data.n_features);
        let mut r_sorted = Vec::with_capacity(self.data.n_features);
        let mut l_missing = Vec::with_capacity(self.data.n_features);
        let mut r_missing = Vec::with_capacity(self.data.n_features);
        for f in 0..self.data.n_features {
            let (a, b) = split(&node.sorted[f]);
            l_sorted.push(a);
            r_sorted.push(b);
            let (a, b) = split(&node.missing[f]);
            l_missing.push(a);
            r_missing.push(b);
        }
        drop(node);
        let left = self.grow_node(
            NodeRows {
                rows: l_rows,
                sorted: l_sorted,
                missing: l_missing,
            },
            targets,
            params,
            depth + 1,
            side,
        );
        let right = self.grow_node(
            NodeRows {
                rows: r_rows,
                sorted: r_sorted,
                missing: r_missing,
            },
            targets,
            params,
            depth + 1,
            side,
        );
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            default_direction: best.direction,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Scans every midpoint of every feature. Ties keep the earliest
    /// candidate: lowest feature index, then smallest threshold.
    fn best_split(&self, node: &NodeRows, targets: &[f64], min_leaf: usize) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for f in 0..self.data.n_features {
            let obs = &node.sorted[f];
            if obs.len() < 2 {
                continue;
            }
            let m_cnt = node.missing[f].len();
            let m_sum: f64 = node.missing[f].iter().map(|&r| targets[r as usize]).sum();
            let o_sum: f64 = obs.iter().map(|&r| targets[r as usize]).sum();
            let value = |r: u32| self.data.get(r as usize, f).expect("sorted rows are observed");

            let mut left_sum = 0.0;
            for t in 1..obs.len() {
                left_sum += targets[obs[t - 1] as usize];
                let (lo, hi) = (value(obs[t - 1]), value(obs[t]));
                if lo >= hi {
                    continue;
                }
                let threshold = lo + (hi - lo) / 2.0;
                if !(lo < threshold && threshold < hi) {
                    continue;
                }
                let right_sum = o_sum - left_sum;
                let n_obs_right = obs.len() - t;
                let score = |nl: usize, sl: f64, nr: usize, sr: f64| -> Option<f64> {
                    (nl >= min_leaf && nr >= min_leaf).then(|| sl * sl / nl as f64 + sr * sr / nr as f64)
                };
                let miss_left = score(t + m_cnt, left_sum + m_sum, n_obs_right, right_sum);
                let miss_right = score(t, left_sum, n_obs_right + m_cnt, right_sum + m_sum);
                let choice = if m_cnt == 0 {
                    // both options coincide; default to the larger child
                    let dir = if t >= n_obs_right {
                        Direction::Left
                    } else {
                        Direction::Right
                    };
                    miss_left.map(|s| (s, dir))
                } else {
                    match (miss_left, miss_right) {
                        (Some(a), Some(b)) if b > a => Some((b, Direction::Right)),
                        (Some(a), _) => Some((a, Direction::Left)),
                        (None, Some(b)) => Some((b, Direction::Right)),
                        (None, None) => None,
                    }
                };
                if let Some((score, direction)) = choice {
                    if best.is_none_or(|b| score > b.score) {
                        best = Some(Candidate {
                            feature: f,
                            threshold,
                            direction,
                            score,
                        });
                    }
                }
            }
        }
        best
    }
}
