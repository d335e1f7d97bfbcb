use rayon::prelude::*;

use crate::impute::CellOrigin;
use crate::model::Predictor;

use super::{stamp_provenance, Attribution, ExplainError, ExplainMethod, Explanation, DEFAULT_TOP_K};

pub const MAX_EXACT_FEATURES: usize = 16;

/// Exact Shapley values by enumerating all 2^n coalitions.
///
/// A coalition `S` is scored on the hybrid row that takes the explained
/// row's cells on `S` and the baseline elsewhere. The value function is
/// evaluated once per coalition and each attribution is accumulated in
/// ascending coalition order, so results do not depend on thread count.
pub fn shapley_exact<P: Predictor + Sync + ?Sized>(
    model: &P,
    names: &[String],
    row: &[Option<f64>],
    baseline: &[f64],
    provenance: &[CellOrigin],
) -> Result<Explanation, ExplainError> {
    let n = row.len();
    if n > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures {
            max: MAX_EXACT_FEATURES,
            found: n,
        });
    }
    for (what, len) in [("baseline", baseline.len()), ("feature names", names.len())] {
        if len != n {
            return Err(ExplainError::Arity {
                what,
                expected: n,
                found: len,
            });
        }
    }
    if model.n_features() != n {
        return Err(ExplainError::Arity {
            what: "row",
            expected: model.n_features(),
            found: n,
        });
    }

    let n_coalitions = 1usize << n;
    let value: Vec<f64> = (0..n_coalitions)
        .into_par_iter()
        .map(|mask| {
            let hybrid: Vec<Option<f64>> = (0..n)
                .map(|j| if mask >> j & 1 == 1 { row[j] } else { Some(baseline[j]) })
                .collect();
            model.predict_row(&hybrid)
        })
        .collect::<Result<_, _>>()?;

    // weight for a coalition of size s not containing i: s!(n-s-1)!/n!
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..n_coalitions {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                acc += weights[s] * (value[mask | bit] - value[mask]);
            }
        }
        *p = acc;
    }

    let attributions = phi
        .iter()
        .enumerate()
        .map(|(j, &importance)| Attribution {
            feature: names[j].clone(),
            feature_index: j,
            value_used: row[j],
            importance,
            imputed: false,
        })
        .collect();
    let expl = Explanation::new(
        ExplainMethod::Shapley,
        attributions,
        value[0],
        value[n_coalitions - 1],
    );
    stamp_provenance(expl, provenance, DEFAULT_TOP_K)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
