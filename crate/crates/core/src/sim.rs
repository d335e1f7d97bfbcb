//! Synthetic ground-truth data and MCAR / MAR / NMAR masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnMeta, ColumnRole, Dataset, DatasetError};

pub const TARGET_NAME: &str = "y";
pub const GROUP_NAME: &str = "group";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("column '{0}' already has missing cells")]
    AlreadyMissing(String),
    #[error("driver column '{0}' has missing cells")]
    DriverMissing(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

pub fn feature_name(j: usize) -> String {
    format!("x{j}")
}

/// Optional binary group attribute: members get `target_shift` added to the
/// target and `feature_shift` added to every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub fraction: f64,
    pub target_shift: f64,
    #[serde(default)]
    pub feature_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
    pub noise_std: f64,
    /// Equicorrelation between the standard-normal features, in [0, 1).
    #[serde(default)]
    pub feature_correlation: f64,
    #[serde(default)]
    pub group: Option<GroupSpec>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn linear(n_rows: usize, coefficients: Vec<f64>, noise_std: f64, seed: u64) -> Self {
        Self {
            n_rows,
            coefficients,
            intercept: 0.0,
            noise_std,
            feature_correlation: 0.0,
            group: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_rows < 1 {
            return Err(invalid("n_rows", "must be at least 1"));
        }
        if self.coefficients.is_empty() {
            return Err(invalid("coefficients", "need at least one feature"));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) || !self.intercept.is_finite() {
            return Err(invalid("coefficients", "must be finite"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std", "must be a finite value >= 0"));
        }
        if !(0.0..1.0).contains(&self.feature_correlation) {
            return Err(invalid("feature_correlation", "must be in [0, 1)"));
        }
        if let Some(g) = &self.group {
            if !(0.0..=1.0).contains(&g.fraction) {
                return Err(invalid("group.fraction", "must be in [0, 1]"));
            }
            if !g.target_shift.is_finite() || !g.feature_shift.is_finite() {
                return Err(invalid("group", "shifts must be finite"));
            }
        }
        Ok(())
    }

    /// The noiseless part of the generating law for one feature row.
    pub fn linear_part(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

/// Generates a fully observed dataset: features `x0..`, target `y`, and a
/// `group` label column when requested.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset, SimError> {
    spec.validate()?;
    let k = spec.coefficients.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = spec.feature_correlation.sqrt();
    let own = (1.0 - spec.feature_correlation).sqrt();

    let mut columns: Vec<ColumnMeta> = (0..k)
        .map(|j| ColumnMeta::new(feature_name(j), ColumnRole::Feature))
        .collect();
    columns.push(ColumnMeta::new(TARGET_NAME, ColumnRole::Target));
    if spec.group.is_some() {
        columns.push(ColumnMeta::new(GROUP_NAME, ColumnRole::GroupLabel));
    }
    let n_cols = columns.len();

    let mut values = Vec::with_capacity(spec.n_rows * n_cols);
    let mut x = vec![0.0; k];
    for _ in 0..spec.n_rows {
        let member = match &spec.group {
            Some(g) => rng.random::<f64>() < g.fraction,
            None => false,
        };
        let common: f64 = rng.sample(StandardNormal);
        for xj in x.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *xj = shared * common + own * e;
        }
        let noise: f64 = rng.sample(StandardNormal);
        let mut y = spec.linear_part(&x) + spec.noise_std * noise;
        if let (true, Some(g)) = (member, &spec.group) {
            for xj in x.iter_mut() {
                *xj += g.feature_shift;
            }
            y += g.target_shift + g.feature_shift * spec.coefficients.iter().sum::<f64>();
        }
        values.extend_from_slice(&x);
        values.push(y);
        if spec.group.is_some() {
            values.push(if member { 1.0 } else { 0.0 });
        }
    }
    let missing = vec![false; values.len()];
    Ok(Dataset::from_parts(columns, values, missing)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Mechanism {
    Mcar {
        rate: f64,
    },
    Mar {
        driver: String,
        threshold: f64,
        rate_below: f64,
        rate_above: f64,
    },
    Nmar {
        rate_low: f64,
        rate_high: f64,
        self_threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub columns: Vec<String>,
}

impl MissingnessSpec {
    pub fn mcar(rate: f64, columns: &[&str]) -> Self {
        Self {
            mechanism: Mechanism::Mcar { rate },
            columns: columns.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let rate = |field: &str, r: f64| {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(invalid(field, format!("{r} is outside [0, 1]")))
            }
        };
        let finite = |field: &str, t: f64| {
            if t.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        match &self.mechanism {
            Mechanism::Mcar { rate: r } => rate("rate", *r)?,
            Mechanism::Mar {
                driver,
                threshold,
                rate_below,
                rate_above,
            } => {
                rate("rate_below", *rate_below)?;
                rate("rate_above", *rate_above)?;
                finite("threshold", *threshold)?;
                if self.columns.iter().any(|c| c == driver) {
                    return Err(invalid("driver", "driver column cannot also be masked"));
                }
            }
            Mechanism::Nmar {
                rate_low,
                rate_high,
                self_threshold,
            } => {
                rate("rate_low", *rate_low)?;
                rate("rate_high", *rate_high)?;
                finite("self_threshold", *self_threshold)?;
            }
        }
        Ok(())
    }

    /// Probability that cell `value` in a row whose driver reads `driver`
    /// is removed.
    fn removal_probability(&self, value: f64, driver: Option<f64>) -> f64 {
        match &self.mechanism {
            Mechanism::Mcar { rate } => *rate,
            Mechanism::Mar {
                threshold,
                rate_below,
                rate_above,
                ..
            } => {
                if driver.expect("driver resolved for MAR") > *threshold {
                    *rate_above
                } else {
                    *rate_below
                }
            }
            Mechanism::Nmar {
                rate_low,
                rate_high,
                self_threshold,
            } => {
                if value > *self_threshold {
                    *rate_high
                } else {
                    *rate_low
                }
            }
        }
    }
}

/// Masks the listed columns. Returns `(masked, ground_truth)`.
///
/// One uniform draw is consumed per (row, masked column) in row-major order
/// whatever the mechanism, so two specs with the same seed share the same
/// random stream.
pub fn apply_missingness(
    ds: &Dataset,
    spec: &MissingnessSpec,
    seed: u64,
) -> Result<(Dataset, Dataset), SimError> {
    spec.validate()?;
    let mut targets = Vec::with_capacity(spec.columns.len());
    for name in &spec.columns {
        let j = ds.require_column(name)?;
        if ds.has_missing(j) {
            return Err(SimError::AlreadyMissing(name.clone()));
        }
        targets.push(j);
    }
    let driver = match &spec.mechanism {
        Mechanism::Mar { driver, .. } => {
            let d = ds.require_column(driver)?;
            if ds.has_missing(d) {
                return Err(SimError::DriverMissing(driver.clone()));
            }
            Some(d)
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remove = vec![false; ds.n_rows() * ds.n_cols()];
    for i in 0..ds.n_rows() {
        let d = driver.and_then(|d| ds.get(i, d));
        for &j in &targets {
            let u: f64 = rng.random();
            let value = ds.get(i, j).expect("target columns are fully observed");
            if u < spec.removal_probability(value, d) {
                remove[i * ds.n_cols() + j] = true;
            }
        }
    }
    let n_cols = ds.n_cols();
    let masked = ds.map_cells(|i, j, v| if remove[i * n_cols + j] { None } else { v });
    Ok((masked, ds.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_law_is_exact() {
        let ds = synth_generate(&SynthSpec::linear(50, vec![2.0, 0.0], 0.0, 3)).unwrap();
        for i in 0..ds.n_rows() {
            assert_eq!(ds.get(i, 2).unwrap(), 2.0 * ds.get(i, 0).unwrap());
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec::linear(100, vec![1.0, -1.0, 0.5], 1.0, 11);
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
    }

    #[test]
    fn noise_std_is_recovered() {
        // sample std of n=10000 N(0,1) draws has sd ~ 1/sqrt(2n) = 0.007,
        // so [0.95, 1.05] is a ~7 sigma window
        let spec = SynthSpec::linear(10_000, vec![1.0, 2.0], 1.0, 5);
        let ds = synth_generate(&spec).unwrap();
        let resid: Vec<f64> = (0..ds.n_rows())
            .map(|i| ds.get(i, 2).unwrap() - spec.linear_part(&[ds.get(i, 0).unwrap(), ds.get(i, 1).unwrap()]))
            .collect();
        let m = resid.iter().sum::<f64>() / resid.len() as f64;
        let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (resid.len() - 1) as f64).sqrt();
        assert!((0.95..=1.05).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn group_fraction_and_shift() {
        let mut spec = SynthSpec::linear(4000, vec![1.0], 0.0, 9);
        spec.group = Some(GroupSpec {
            fraction: 0.25,
            target_shift: 3.0,
            feature_shift: 0.0,
        });
        let ds = synth_generate(&spec).unwrap();
        let g = ds.require_column(GROUP_NAME).unwrap();
        assert_eq!(ds.column(g).role, ColumnRole::GroupLabel);
        let members = (0..ds.n_rows()).filter(|&i| ds.get(i, g) == Some(1.0)).count();
        let frac = members as f64 / ds.n_rows() as f64;
        assert!((frac - 0.25).abs() < 0.03, "{frac}");
        for i in 0..ds.n_rows() {
            let shift = if ds.get(i, g) == Some(1.0) { 3.0 } else { 0.0 };
            let want = ds.get(i, 0).unwrap() + shift;
            assert!((ds.get(i, 1).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(synth_generate(&SynthSpec::linear(0, vec![1.0], 0.0, 1)).is_err());
        assert!(synth_generate(&SynthSpec::linear(5, vec![1.0], -1.0, 1)).is_err());
        assert!(MissingnessSpec::mcar(1.5, &["x0"]).validate().is_err());
        let mar = MissingnessSpec {
            mechanism: Mechanism::Mar {
                driver: "x0".into(),
                threshold: 0.0,
                rate_below: 0.0,
                rate_above: 1.0,
            },
            columns: vec!["x0".into()],
        };
        assert!(mar.validate().is_err());
    }

    #[test]
    fn mcar_extremes() {
        let ds = synth_generate(&SynthSpec::linear(200, vec![1.0, 1.0], 0.1, 2)).unwrap();
        let (m0, truth) = apply_missingness(&ds, &MissingnessSpec::mcar(0.0, &["x0", "x1"]), 1).unwrap();
        assert_eq!(m0, ds);
        assert_eq!(truth, ds);
        let (m1, _) = apply_missingness(&ds, &MissingnessSpec::mcar(1.0, &["x0"]), 1).unwrap();
        assert_eq!(m1.missing_count(0), 200);
        assert_eq!(m1.missing_count(1), 0);
    }

    #[test]
    fn mar_step_is_exact() {
        let rows: Vec<Vec<Option<f64>>> = [-1.0, 1.0, 1.0, -1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, a)| vec![Some(*a), Some(i as f64), Some(0.0)])
            .collect();
        let ds = Dataset::from_rows(
            vec![
                ColumnMeta::new("A", ColumnRole::Feature),
                ColumnMeta::new("B", ColumnRole::Feature),
                ColumnMeta::new("y", ColumnRole::Target),
            ],
            &rows,
        )
        .unwrap();
        let spec = MissingnessSpec {
            mechanism: Mechanism::Mar {
                driver: "A".into(),
                threshold: 0.0,
                rate_below: 0.0,
                rate_above: 1.0,
            },
            columns: vec!["B".into()],
        };
        let (masked, _) = apply_missingness(&ds, &spec, 99).unwrap();
        let got: Vec<bool> = (0..5).map(|i| masked.is_missing(i, 1)).collect();
        assert_eq!(got, vec![false, true, true, false, true]);
    }

    #[test]
    fn masking_preconditions() {
        let ds = synth_generate(&SynthSpec::linear(20, vec![1.0, 1.0], 0.1, 2)).unwrap();
        let (masked, _) = apply_missingness(&ds, &MissingnessSpec::mcar(0.5, &["x0"]), 1).unwrap();
        assert!(matches!(
            apply_missingness(&masked, &MissingnessSpec::mcar(0.5, &["x0"]), 1),
            Err(SimError::AlreadyMissing(_))
        ));
        let mar = MissingnessSpec {
            mechanism: Mechanism::Mar {
                driver: "x0".into(),
                threshold: 0.0,
                rate_below: 0.0,
                rate_above: 1.0,
            },
            columns: vec!["x1".into()],
        };
        assert!(matches!(
            apply_missingness(&masked, &mar, 1),
            Err(SimError::DriverMissing(_))
        ));
    }
}
