use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ColumnStats;
use crate::impute::CellOrigin;
use crate::linalg::least_squares;
use crate::model::Predictor;

use super::{stamp_provenance, Attribution, ExplainError, ExplainMethod, Explanation, DEFAULT_TOP_K};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimeParams {
    #[serde(default = "LimeParams::default_n_samples")]
    pub n_samples: usize,
    /// Defaults to `0.75 · sqrt(n_features)` when unset.
    #[serde(default)]
    pub kernel_width: Option<f64>,
    #[serde(default = "LimeParams::default_scale")]
    pub perturbation_std_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl LimeParams {
    fn default_n_samples() -> usize {
        1000
    }
    fn default_scale() -> f64 {
        1.0
    }

    pub fn kernel_width_for(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }

    pub fn validate(&self, n_features: usize) -> Result<(), ExplainError> {
        if self.n_samples < n_features + 2 {
            return Err(ExplainError::InvalidParams(format!(
                "n_samples {} < n_features + 2 = {}",
                self.n_samples,
                n_features + 2
            )));
        }
        if !(self.kernel_width_for(n_features) > 0.0) {
            return Err(ExplainError::InvalidParams("kernel_width must be > 0".into()));
        }
        if !(self.perturbation_std_scale > 0.0) {
            return Err(ExplainError::InvalidParams(
                "perturbation_std_scale must be > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            n_samples: Self::default_n_samples(),
            kernel_width: None,
            perturbation_std_scale: Self::default_scale(),
            seed: 0,
        }
    }
}

/// Local weighted-linear surrogate around `row`.
///
/// Samples are gaussian perturbations of the row with per-feature standard
/// deviation `scale · std`. The surrogate is regressed on the standardized
/// offsets `(z − x) / std`, so each coefficient is already the importance
/// (slope in raw units times the feature's std) and the intercept is the
/// surrogate's value at the row. Features with zero spread get importance 0.
pub fn lime_local<P: Predictor + ?Sized>(
    model: &P,
    names: &[String],
    row: &[f64],
    stats: &[ColumnStats],
    params: &LimeParams,
    provenance: &[CellOrigin],
) -> Result<Explanation, ExplainError> {
    let n = row.len();
    for (what, len) in [
        ("feature stats", stats.len()),
        ("feature names", names.len()),
        ("model features", model.n_features()),
    ] {
        if len != n {
            return Err(ExplainError::Arity {
                what,
                expected: n,
                found: len,
            });
        }
    }
    params.validate(n)?;
    let active: Vec<usize> = (0..n).filter(|&j| stats[j].std > 0.0).collect();
    let width = params.kernel_width_for(n);
    let scale = params.perturbation_std_scale;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = active.len() + 1;
    let mut design = Vec::with_capacity(params.n_samples * p);
    let mut outputs = Vec::with_capacity(params.n_samples);
    let mut weights = Vec::with_capacity(params.n_samples);
    let mut z = vec![None; n];
    let mut offsets = vec![0.0; n];
    for _ in 0..params.n_samples {
        // one draw per feature keeps the stream aligned across rows
        for (j, o) in offsets.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *o = if stats[j].std > 0.0 { scale * e } else { 0.0 };
            z[j] = Some(row[j] + *o * stats[j].std);
        }
        let d2: f64 = active.iter().map(|&j| offsets[j] * offsets[j]).sum();
        weights.push((-d2 / (width * width)).exp());
        outputs.push(model.predict_row(&z)?);
        design.push(1.0);
        design.extend(active.iter().map(|&j| offsets[j]));
    }
    let coef = least_squares(&design, p, &outputs, Some(&weights))
        .map_err(|_| ExplainError::SingularSurrogate)?;

    let mut importance = vec![0.0; n];
    for (t, &j) in active.iter().enumerate() {
        importance[j] = coef[t + 1];
    }
    let row_opt: Vec<Option<f64>> = row.iter().map(|v| Some(*v)).collect();
    let model_output = model.predict_row(&row_opt)?;
    let attributions = (0..n)
        .map(|j| Attribution {
            feature: names[j].clone(),
            feature_index: j,
            value_used: Some(row[j]),
            importance: importance[j],
            imputed: false,
        })
        .collect();
    let expl = Explanation::new(ExplainMethod::Lime, attributions, coef[0], model_output);
    stamp_provenance(expl, provenance, DEFAULT_TOP_K)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnPredictor, LinearModel};

    fn stats(stds: &[f64]) -> Vec<ColumnStats> {
        stds.iter()
            .map(|&s| ColumnStats {
                mean: 0.0,
                median: 0.0,
                truncated_mean: 0.0,
                trim: 0.1,
                std: s,
                min: -1.0,
                max: 1.0,
                n_observed: 10,
            })
            .collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn recovers_linear_coefficients() {
        let m = LinearModel {
            intercept: 0.5,
            coefficients: vec![3.0, -1.0, 0.25],
        };
        let sd = [2.0, 0.5, 4.0];
        let params = LimeParams {
            n_samples: 5000,
            seed: 3,
            ..LimeParams::default()
        };
        let e = lime_local(&m, &names(3), &[1.0, 2.0, 3.0], &stats(&sd), &params, &[CellOrigin::Observed; 3]).unwrap();
        let imp = e.importances_by_feature();
        for j in 0..3 {
            let recovered = imp[j] / sd[j];
            let w = m.coefficients[j];
            assert!(((recovered - w) / w).abs() < 0.05, "{recovered} vs {w}");
        }
        let order: Vec<usize> = e.attributions.iter().map(|a| a.feature_index).collect();
        assert_eq!(order, vec![0, 2, 1]);
    }

    #[test]
    fn constant_model_has_no_signal() {
        let m = FnPredictor::new(2, |_: &[f64]| 7.0);
        let e = lime_local(&m, &names(2), &[0.0, 1.0], &stats(&[1.0, 1.0]), &LimeParams::default(), &[CellOrigin::Observed; 2]).unwrap();
        assert!(e.attributions.iter().all(|a| a.importance.abs() < 1e-6));
        assert!((e.baseline_value - 7.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_per_seed_and_zero_std() {
        let m = FnPredictor::new(2, |x: &[f64]| x[0].powi(2) + x[1]);
        let st = stats(&[1.0, 0.0]);
        let a = lime_local(&m, &names(2), &[0.5, 1.0], &st, &LimeParams::default(), &[CellOrigin::Observed; 2]).unwrap();
        let b = lime_local(&m, &names(2), &[0.5, 1.0], &st, &LimeParams::default(), &[CellOrigin::Observed; 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.importances_by_feature()[1], 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = FnPredictor::new(3, |_: &[f64]| 0.0);
        let params = LimeParams {
            n_samples: 4,
            ..LimeParams::default()
        };
        assert!(matches!(
            lime_local(&m, &names(3), &[0.0; 3], &stats(&[1.0; 3]), &params, &[CellOrigin::Observed; 3]),
            Err(ExplainError::InvalidParams(_))
        ));
    }
}
