//! Missing-data strategies. Every transform returns the completed data
//! together with a [`ProvenanceMask`] marking exactly which cells were
//! fabricated.
//!
//! Strategies are split into a fit step (statistics or regressions learned
//! from one dataset) and an apply step, so that test rows can be filled from
//! training information only.

mod central;
mod mice;
mod provenance;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnMeta, ColumnRole, ColumnTransform, Dataset, DatasetError, DEFAULT_TRIM};

pub use central::{central_impute, CentralFill};
pub use mice::{mice_impute, MiceFit, MiceTrace, SweepRecord};
pub use provenance::{CellOrigin, ProvenanceMask, ProvenanceParseError, StrategyId};

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("no row is free of missing feature cells")]
    NoCompleteRows,
    #[error("column '{0}' is not a feature column")]
    NotAFeature(String),
    #[error("column '{0}' still has missing cells and is not selected for indicator encoding")]
    UnselectedMissing(String),
    #[error("column '{column}' has no observed cells{}", cohort_suffix(.cohort))]
    NoObserved {
        column: String,
        cohort: Option<f64>,
    },
    #[error("cohort key column '{0}' has missing cells")]
    CohortKeyMissing(String),
    #[error("MICE needs at least 2 feature columns, found {0}")]
    TooFewFeatures(usize),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn cohort_suffix(cohort: &Option<f64>) -> String {
    match cohort {
        Some(c) => format!(" in cohort {c}"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralMeasure {
    Mean,
    Median,
    TruncatedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiceParams {
    pub max_iter: usize,
    /// Convergence bound on the largest per-sweep change of an imputed cell,
    /// in units of that column's observed standard deviation.
    pub tol: f64,
    /// Reserved for stochastic variants; the regression-mean procedure does
    /// not draw from it.
    pub seed: u64,
}

impl Default for MiceParams {
    fn default() -> Self {
        Self {
            max_iter: 10,
            tol: 1e-3,
            seed: 0,
        }
    }
}

impl MiceParams {
    pub fn validate(&self) -> Result<(), ImputeError> {
        if self.max_iter < 1 {
            return Err(ImputeError::InvalidParams("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ImputeError::InvalidParams("tol must be > 0".into()));
        }
        Ok(())
    }
}

fn default_trim() -> f64 {
    DEFAULT_TRIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImputationStrategy {
    CompleteCase,
    Indicator {
        /// Keep the source column and add `<name>_observed` beside it
        /// instead of replacing it.
        #[serde(default)]
        append: bool,
    },
    Central {
        measure: CentralMeasure,
        #[serde(default)]
        cohort_key: Option<String>,
        #[serde(default = "default_trim")]
        trim: f64,
    },
    Mice {
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_max_iter() -> usize {
    MiceParams::default().max_iter
}

fn default_tol() -> f64 {
    MiceParams::default().tol
}

impl ImputationStrategy {
    pub fn indicator() -> Self {
        Self::Indicator { append: false }
    }

    pub fn mean() -> Self {
        Self::Central {
            measure: CentralMeasure::Mean,
            cohort_key: None,
            trim: DEFAULT_TRIM,
        }
    }

    pub fn mice_default() -> Self {
        let p = MiceParams::default();
        Self::Mice {
            max_iter: p.max_iter,
            tol: p.tol,
            seed: p.seed,
        }
    }

    /// Short stable label used in reports.
    pub fn label(&self) -> String {
        match self {
            Self::CompleteCase => "complete-case".into(),
            Self::Indicator { append: false } => "indicator".into(),
            Self::Indicator { append: true } => "indicator-appended".into(),
            Self::Central {
                measure,
                cohort_key,
                ..
            } => {
                let m = match measure {
                    CentralMeasure::Mean => "mean",
                    CentralMeasure::Median => "median",
                    CentralMeasure::TruncatedMean => "truncated-mean",
                };
                match cohort_key {
                    Some(k) => format!("{m}-by-{k}"),
                    None => m.to_string(),
                }
            }
            Self::Mice { .. } => "mice".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ImputeError> {
        match self {
            Self::Central { trim, .. } if !(0.0..0.5).contains(trim) => Err(
                ImputeError::InvalidParams(format!("trim {trim} outside [0, 0.5)")),
            ),
            Self::Mice {
                max_iter,
                tol,
                seed,
            } => MiceParams {
                max_iter: *max_iter,
                tol: *tol,
                seed: *seed,
            }
            .validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDataset {
    pub data: Dataset,
    pub provenance: ProvenanceMask,
    pub strategy: ImputationStrategy,
    pub trace: Option<MiceTrace>,
}

/// Keeps the rows with no missing feature cell, in order.
pub fn complete_case(ds: &Dataset) -> Result<ImputedDataset, ImputeError> {
    let features = ds.feature_indices();
    let keep: Vec<usize> = (0..ds.n_rows())
        .filter(|&i| features.iter().all(|&j| !ds.is_missing(i, j)))
        .collect();
    if keep.is_empty() {
        return Err(ImputeError::NoCompleteRows);
    }
    let data = ds.select_rows(&keep);
    Ok(ImputedDataset {
        provenance: ProvenanceMask::all_observed(data.n_rows(), data.n_cols()),
        data,
        strategy: ImputationStrategy::CompleteCase,
        trace: None,
    })
}

/// Replaces each selected column with its presence indicator (1 observed,
/// 0 missing). Unselected feature columns must already be complete.
/// Columns already marked as indicators are left as they are.
pub fn indicator_encode(ds: &Dataset, columns: &[String]) -> Result<ImputedDataset, ImputeError> {
    let mut selected = Vec::with_capacity(columns.len());
    for name in columns {
        let j = ds.require_column(name)?;
        if ds.column(j).role != ColumnRole::Feature {
            return Err(ImputeError::NotAFeature(name.clone()));
        }
        selected.push(j);
    }
    for j in ds.feature_indices() {
        if !selected.contains(&j) && ds.has_missing(j) {
            return Err(ImputeError::UnselectedMissing(ds.column(j).name.clone()));
        }
    }
    selected.retain(|&j| ds.column(j).transform != Some(ColumnTransform::Indicator));
    let mut provenance = ProvenanceMask::all_observed(ds.n_rows(), ds.n_cols());
    for i in 0..ds.n_rows() {
        for &j in &selected {
            if ds.is_missing(i, j) {
                provenance.set(i, j, CellOrigin::Indicator);
            }
        }
    }
    let mut data = ds.map_cells(|_, j, v| {
        if selected.contains(&j) {
            Some(if v.is_some() { 1.0 } else { 0.0 })
        } else {
            v
        }
    });
    for &j in &selected {
        data = data.with_transform(j, Some(ColumnTransform::Indicator));
    }
    Ok(ImputedDataset {
        data,
        provenance,
        strategy: ImputationStrategy::indicator(),
        trace: None,
    })
}

/// Suffix of the companion column added by [`indicator_append`].
pub const OBSERVED_SUFFIX: &str = "_observed";

/// Adds a presence indicator `<name>_observed` after the existing columns
/// for each selected column; the source columns keep their missing cells.
/// Companions that already exist are not added again.
pub fn indicator_append(ds: &Dataset, columns: &[String]) -> Result<ImputedDataset, ImputeError> {
    let mut selected = Vec::with_capacity(columns.len());
    for name in columns {
        let j = ds.require_column(name)?;
        if ds.column(j).role != ColumnRole::Feature {
            return Err(ImputeError::NotAFeature(name.clone()));
        }
        if ds.column_index(&format!("{name}{OBSERVED_SUFFIX}")).is_none() {
            selected.push(j);
        }
    }
    let mut metas: Vec<ColumnMeta> = ds.columns().to_vec();
    for &j in &selected {
        let mut meta = ColumnMeta::new(format!("{}{OBSERVED_SUFFIX}", ds.column(j).name), ColumnRole::Feature);
        meta.transform = Some(ColumnTransform::Indicator);
        metas.push(meta);
    }
    let rows: Vec<Vec<Option<f64>>> = (0..ds.n_rows())
        .map(|i| {
            let mut row = ds.row(i);
            row.extend(selected.iter().map(|&j| Some(if ds.is_missing(i, j) { 0.0 } else { 1.0 })));
            row
        })
        .collect();
    let data = Dataset::from_rows(metas, &rows)?;
    let mut provenance = ProvenanceMask::all_observed(data.n_rows(), data.n_cols());
    for i in 0..ds.n_rows() {
        for (k, &j) in selected.iter().enumerate() {
            if ds.is_missing(i, j) {
                provenance.set(i, ds.n_cols() + k, CellOrigin::Indicator);
            }
        }
    }
    Ok(ImputedDataset {
        data,
        provenance,
        strategy: ImputationStrategy::Indicator { append: true },
        trace: None,
    })
}

/// Names of feature columns holding at least one missing cell.
pub fn gappy_features(ds: &Dataset) -> Vec<String> {
    ds.feature_indices()
        .into_iter()
        .filter(|&j| ds.has_missing(j))
        .map(|j| ds.column(j).name.clone())
        .collect()
}

/// Imputation state learned from one dataset and replayable on another with
/// the same columns.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedImputer {
    CompleteCase,
    Indicator { columns: Vec<String>, append: bool },
    Central(CentralFill),
    Mice(MiceFit),
}

impl FittedImputer {
    /// Learns from `train` and returns the imputer with `train`'s own
    /// completed form. Indicator selection is every gappy feature of `train`.
    pub fn fit(
        strategy: &ImputationStrategy,
        train: &Dataset,
    ) -> Result<(Self, ImputedDataset), ImputeError> {
        strategy.validate()?;
        match strategy {
            ImputationStrategy::CompleteCase => Ok((Self::CompleteCase, complete_case(train)?)),
            ImputationStrategy::Indicator { append } => {
                let imputer = Self::Indicator {
                    columns: gappy_features(train),
                    append: *append,
                };
                let out = imputer.apply(train)?;
                Ok((imputer, out))
            }
            ImputationStrategy::Central {
                measure,
                cohort_key,
                trim,
            } => {
                let fill = CentralFill::fit(train, *measure, cohort_key.as_deref(), *trim)?;
                let out = fill.apply(train)?;
                Ok((Self::Central(fill), out))
            }
            ImputationStrategy::Mice {
                max_iter,
                tol,
                seed,
            } => {
                let params = MiceParams {
                    max_iter: *max_iter,
                    tol: *tol,
                    seed: *seed,
                };
                let (fit, out) = MiceFit::fit(train, params)?;
                Ok((Self::Mice(fit), out))
            }
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<ImputedDataset, ImputeError> {
        match self {
            Self::CompleteCase => complete_case(ds),
            Self::Indicator { columns, append: false } => indicator_encode(ds, columns),
            Self::Indicator { columns, append: true } => indicator_append(ds, columns),
            Self::Central(fill) => fill.apply(ds),
            Self::Mice(fit) => fit.apply(ds),
        }
    }
}

/// One-shot imputation of a single dataset.
pub fn impute(ds: &Dataset, strategy: &ImputationStrategy) -> Result<ImputedDataset, ImputeError> {
    FittedImputer::fit(strategy, ds).map(|(_, out)| out)
}
