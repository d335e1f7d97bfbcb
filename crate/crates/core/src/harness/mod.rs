//! Experiments over the imputation strategies: the strategy comparison
//! table, explanation drift against ground truth, train/test missingness
//! shift, and group disparity.
//!
//! Every experiment uses one shared train/test split. Imputation state is
//! learned on training rows only and replayed on test rows.

mod experiments;
mod metrics;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{drop_high_missing, load_csv, split_indices, ColumnStats, Dataset, DatasetError};
use crate::explain::{lime_local, shapley_exact, stamp_provenance, ExplainError, Explanation, LimeParams};
use crate::impute::{gappy_features, CellOrigin, FittedImputer, ImputationStrategy, ImputeError, ImputedDataset, ProvenanceMask};
use crate::model::{ModelError, ModelFamily, Predictor, TrainParams};
use crate::sim::{apply_missingness, synth_generate, MissingnessSpec, SimError, SynthSpec};

pub use experiments::{
    explanation_drift, group_fairness, missingness_shift, run_strategy_comparison, CellResult, ComparisonReport,
    DriftReport, MetricsRow, ShiftReport,
};
pub use metrics::{average_ranks, group_disparity, mae, mse, spearman, top_k_indices, GroupFairnessReport, GroupStats};

/// Label of the column-restricted row of the comparison.
pub const NO_MISSING_LABEL: &str = "no-missing-variables";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("experiment needs ground truth; use synthetic data")]
    MissingGroundTruth,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synth(SynthSpec),
    Csv {
        path: PathBuf,
        target: String,
        missing_token: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainerKind {
    Shapley,
    Lime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub missingness: Option<MissingnessSpec>,
    pub strategies: Vec<ImputationStrategy>,
    pub models: Vec<ModelFamily>,
    pub explainer: ExplainerKind,
    pub train: TrainParams,
    pub lime: LimeParams,
    pub top_k: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Feature columns missing more than this fraction are dropped before
    /// modelling.
    pub drop_threshold: Option<f64>,
    /// Test rows explained per cell (warning counts, drift).
    pub explain_rows: usize,
}

impl ExperimentConfig {
    /// Synthetic experiment with the four headline strategies and defaults
    /// elsewhere. The synthetic generator is seeded from `seed`.
    pub fn synthetic(mut synth: SynthSpec, missingness: Option<MissingnessSpec>, seed: u64) -> Self {
        synth.seed = seed;
        Self {
            data: DataSource::Synth(synth),
            missingness,
            strategies: vec![
                ImputationStrategy::CompleteCase,
                ImputationStrategy::mice_default(),
                ImputationStrategy::indicator(),
                ImputationStrategy::mean(),
            ],
            models: vec![ModelFamily::Boosted],
            explainer: ExplainerKind::Shapley,
            train: TrainParams::default(),
            lime: LimeParams::default(),
            top_k: crate::explain::DEFAULT_TOP_K,
            seed,
            test_fraction: 0.2,
            drop_threshold: Some(0.5),
            explain_rows: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.strategies.is_empty() {
            return Err(HarnessError::Invalid("at least one strategy is required".into()));
        }
        if self.models.is_empty() {
            return Err(HarnessError::Invalid("at least one model family is required".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(HarnessError::Invalid("test_fraction must be in (0, 1)".into()));
        }
        if let Some(t) = self.drop_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(HarnessError::Invalid("drop_threshold must be in (0, 1]".into()));
            }
        }
        for s in &self.strategies {
            s.validate()?;
        }
        self.train.validate()?;
        if let Some(m) = &self.missingness {
            m.validate()?;
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        Ok(())
    }
}

/// Derives an independent stream seed from the master seed and a tag.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Masked data, optional ground truth, and the shared split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub masked: Dataset,
    pub truth: Option<Dataset>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

impl Prepared {
    pub fn train(&self) -> Dataset {
        self.masked.select_rows(&self.train_rows)
    }

    pub fn test(&self) -> Dataset {
        self.masked.select_rows(&self.test_rows)
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let (complete, synthetic) = match &config.data {
        DataSource::Synth(spec) => (synth_generate(spec)?, true),
        DataSource::Csv {
            path,
            target,
            missing_token,
        } => (load_csv(path, target, missing_token)?, false),
    };
    let (masked, truth) = match &config.missingness {
        Some(spec) => {
            let (masked, truth) = apply_missingness(&complete, spec, derive_seed(config.seed, "mask"))?;
            (masked, synthetic.then_some(truth))
        }
        None => (complete.clone(), synthetic.then_some(complete)),
    };
    let masked = match config.drop_threshold {
        Some(t) => drop_high_missing(&masked, t),
        None => masked,
    };
    // keep ground truth column-aligned with the masked data
    let truth = match truth {
        Some(t) => {
            let cols: Vec<usize> = masked
                .columns()
                .iter()
                .map(|c| t.require_column(&c.name))
                .collect::<Result<_, _>>()?;
            Some(t.select_columns(&cols))
        }
        None => None,
    };
    let (train_rows, test_rows) = split_indices(masked.n_rows(), config.test_fraction, derive_seed(config.seed, "split"))?;
    Ok(Prepared {
        masked,
        truth,
        train_rows,
        test_rows,
    })
}

/// Train and test data after one strategy, in the model's feature space.
#[derive(Debug, Clone)]
pub struct StrategyData {
    pub label: String,
    pub train: ImputedDataset,
    pub test: ImputedDataset,
}

/// Applies a strategy with train-only fitting. Complete-case is realised as
/// restriction to the feature columns that are fully observed in the data.
pub fn apply_strategy(prepared: &Prepared, strategy: &ImputationStrategy) -> Result<StrategyData, HarnessError> {
    let train = prepared.train();
    let test = prepared.test();
    let (label, train_out, test_out) = match strategy {
        ImputationStrategy::CompleteCase => {
            let full = &prepared.masked;
            let keep: Vec<usize> = (0..full.n_cols())
                .filter(|&j| full.column(j).role != crate::dataset::ColumnRole::Feature || !full.has_missing(j))
                .collect();
            if !keep.iter().any(|&j| full.column(j).role == crate::dataset::ColumnRole::Feature) {
                return Err(HarnessError::Invalid("no fully observed feature column remains".into()));
            }
            let wrap = |d: Dataset| ImputedDataset {
                provenance: ProvenanceMask::all_observed(d.n_rows(), d.n_cols()),
                data: d,
                strategy: ImputationStrategy::CompleteCase,
                trace: None,
            };
            (
                NO_MISSING_LABEL.to_string(),
                wrap(train.select_columns(&keep)),
                wrap(test.select_columns(&keep)),
            )
        }
        ImputationStrategy::Indicator { append } => {
            let imputer = FittedImputer::Indicator {
                columns: gappy_features(&prepared.masked),
                append: *append,
            };
            (strategy.label(), imputer.apply(&train)?, imputer.apply(&test)?)
        }
        _ => {
            let (imputer, train_out) = FittedImputer::fit(strategy, &train)?;
            (strategy.label(), train_out, imputer.apply(&test)?)
        }
    };
    Ok(StrategyData {
        label,
        train: train_out,
        test: test_out,
    })
}

/// Per-feature means over training cells whose provenance is observed; a
/// feature with no observed cell falls back to the mean of all its cells.
pub fn observed_feature_means(data: &Dataset, provenance: &ProvenanceMask) -> Vec<f64> {
    data.feature_indices()
        .into_iter()
        .map(|j| {
            let observed: Vec<f64> = (0..data.n_rows())
                .filter(|&i| provenance.get(i, j) == CellOrigin::Observed)
                .filter_map(|i| data.get(i, j))
                .collect();
            let vals = if observed.is_empty() {
                data.observed_values(j)
            } else {
                observed
            };
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect()
}

/// Everything an explainer needs about the training data of one model.
pub struct ExplainContext {
    pub names: Vec<String>,
    pub baseline: Vec<f64>,
    pub stats: Vec<ColumnStats>,
}

impl ExplainContext {
    pub fn from_training(train: &ImputedDataset) -> Self {
        let data = &train.data;
        let stats = data
            .feature_indices()
            .into_iter()
            .map(|j| {
                ColumnStats::from_values(&data.observed_values(j), crate::dataset::DEFAULT_TRIM).unwrap_or(ColumnStats {
                    mean: 0.0,
                    median: 0.0,
                    truncated_mean: 0.0,
                    trim: crate::dataset::DEFAULT_TRIM,
                    std: 0.0,
                    min: 0.0,
                    max: 0.0,
                    n_observed: 0,
                })
            })
            .collect();
        Self {
            names: data.feature_names(),
            baseline: observed_feature_means(data, &train.provenance),
            stats,
        }
    }
}

/// Explains row `i` of `test` with the configured explainer.
pub fn explain_row<P: Predictor + Sync + ?Sized>(
    kind: ExplainerKind,
    model: &P,
    ctx: &ExplainContext,
    test: &ImputedDataset,
    i: usize,
    lime: &LimeParams,
    top_k: usize,
) -> Result<Explanation, HarnessError> {
    let features = test.data.feature_indices();
    let row = test.data.feature_row(i);
    let prov = test.provenance.row_subset(i, &features);
    let expl = match kind {
        ExplainerKind::Shapley => shapley_exact(model, &ctx.names, &row, &ctx.baseline, &prov)?,
        ExplainerKind::Lime => {
            let dense: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(j, v)| v.ok_or(ExplainError::MissingValue(j)))
                .collect::<Result<_, _>>()?;
            lime_local(model, &ctx.names, &dense, &ctx.stats, lime, &prov)?
        }
    };
    Ok(stamp_provenance(expl, &prov, top_k)?)
}
