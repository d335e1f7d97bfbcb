use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

use super::tree::{Grower, TreeNode};
use super::{ModelError, Predictor, TrainParams, TrainingData};

/// Squared-error gradient boosting: `base + learning_rate · Σ tree(row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    pub n_features: usize,
    /// Training MSE before any tree, then after each tree.
    pub loss_curve: Vec<f64>,
}

impl Predictor for BoostedEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError> {
        self.check_arity(row)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(self.base_prediction + self.learning_rate * sum)
    }
}

pub fn fit_boosted(ds: &Dataset, params: &TrainParams) -> Result<BoostedEnsemble, ModelError> {
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
    let n = data.n_rows as f64;
    let base = data.targets.iter().sum::<f64>() / n;
    // per-row Σ tree outputs, kept unscaled so the final prediction matches
    // predict_row exactly
    let mut tree_sum = vec![0.0; data.n_rows];
    let mse = |tree_sum: &[f64]| {
        data.targets
            .iter()
            .zip(tree_sum)
            .map(|(y, s)| (y - (base + params.learning_rate * s)).powi(2))
            .sum::<f64>()
            / n
    };
    let mut loss_curve = vec![mse(&tree_sum)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut residuals = vec![0.0; data.n_rows];
    for _ in 0..params.n_trees {
        for (i, r) in residuals.iter_mut().enumerate() {
            *r = data.targets[i] - (base + params.learning_rate * tree_sum[i]);
        }
        let tree = grower.grow(&residuals, params);
        for (i, s) in tree_sum.iter_mut().enumerate() {
            *s += tree.predict(data.row(i));
        }
        loss_curve.push(mse(&tree_sum));
        trees.push(tree);
    }
    Ok(BoostedEnsemble {
        base_prediction: base,
        learning_rate: params.learning_rate,
        trees,
        n_features: data.n_features,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fit_tree;
    use crate::sim::{synth_generate, SynthSpec};

    #[test]
    fn single_tree_unit_rate_is_base_plus_tree() {
        let ds = synth_generate(&SynthSpec::linear(80, vec![1.0, -2.0], 0.3, 4)).unwrap();
        let p = TrainParams {
            n_trees: 1,
            learning_rate: 1.0,
            max_depth: 3,
            min_leaf_rows: 2,
            seed: 0,
        };
        let b = fit_boosted(&ds, &p).unwrap();
        assert_eq!(b.trees.len(), 1);
        let mean = (0..80).map(|i| ds.get(i, 2).unwrap()).sum::<f64>() / 80.0;
        for i in 0..80 {
            let row = ds.feature_row(i);
            let want = b.base_prediction + b.trees[0].predict(&row);
            assert_eq!(b.predict_row(&row).unwrap(), want);
        }
        assert!((b.base_prediction - mean).abs() < 1e-12);
        // a unit-rate single tree on residuals y - mean has the same splits
        // as a tree on y directly
        let t = fit_tree(&ds, &p).unwrap();
        for i in 0..80 {
            let row = ds.feature_row(i);
            assert!((t.predict_row(&row).unwrap() - b.predict_row(&row).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_curve_is_monotone() {
        let ds = synth_generate(&SynthSpec::linear(300, vec![1.5, 0.5, -1.0], 1.0, 8)).unwrap();
        let b = fit_boosted(&ds, &TrainParams::default()).unwrap();
        assert_eq!(b.loss_curve.len(), 101);
        for w in b.loss_curve.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn converges_on_noiseless_law() {
        let ds = synth_generate(&SynthSpec::linear(400, vec![2.0], 0.0, 12)).unwrap();
        let p = TrainParams {
            max_depth: 3,
            n_trees: 50,
            learning_rate: 0.3,
            ..TrainParams::default()
        };
        let b = fit_boosted(&ds, &p).unwrap();
        let y: Vec<f64> = (0..400).map(|i| ds.get(i, 1).unwrap()).collect();
        let m = y.iter().sum::<f64>() / 400.0;
        let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 399.0).sqrt();
        let mae = (0..400)
            .map(|i| (b.predict_row(&ds.feature_row(i)).unwrap() - y[i]).abs())
            .sum::<f64>()
            / 400.0;
        assert!(mae < 0.1 * sd, "mae {mae} vs sd {sd}");
    }
}
