use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::linalg::{least_squares, LstsqError};

use super::{ModelError, Predictor, TrainingData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError> {
        self.check_arity(row)?;
        let mut acc = self.intercept;
        for (j, (w, x)) in self.coefficients.iter().zip(row).enumerate() {
            acc += w * x.ok_or(ModelError::MissingInput(j))?;
        }
        Ok(acc)
    }
}

/// Ordinary least squares with an intercept. Rank deficiency is an error.
pub fn fit_linear(ds: &Dataset) -> Result<LinearModel, ModelError> {
    let data = TrainingData::from_dataset(ds)?;
    let k = data.n_features;
    if data.n_rows < k + 1 {
        return Err(ModelError::TooFewRows {
            needed: k + 1,
            found: data.n_rows,
        });
    }
    let mut design = Vec::with_capacity(data.n_rows * (k + 1));
    for i in 0..data.n_rows {
        design.push(1.0);
        for (f, v) in data.row(i).iter().enumerate() {
            design.push(v.ok_or_else(|| ModelError::MissingFeature(data.names[f].clone()))?);
        }
    }
    let coef = least_squares(&design, k + 1, &data.targets, None).map_err(|e| match e {
        LstsqError::RankDeficient { column: 0 } => ModelError::RankDeficient("intercept".into()),
        LstsqError::RankDeficient { column } => ModelError::RankDeficient(data.names[column - 1].clone()),
        LstsqError::Underdetermined { rows, cols } => ModelError::TooFewRows {
            needed: cols,
            found: rows,
        },
    })?;
    Ok(LinearModel {
        intercept: coef[0],
        coefficients: coef[1..].to_vec(),
    })
}
