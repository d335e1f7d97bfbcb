use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{group_disparity, mae, mse, spearman, top_k_indices, GroupFairnessReport};
use super::{
    apply_strategy, derive_seed, explain_row, prepare, ExperimentConfig, ExplainContext, HarnessError, StrategyData,
};
use crate::dataset::{ColumnRole, Dataset};
use crate::explain::Explanation;
use crate::impute::{ImputationStrategy, ImputedDataset, ProvenanceMask};
use crate::model::{fit_model, predict_dataset, Model, ModelFamily};
use crate::sim::{apply_missingness, Mechanism, MissingnessSpec};

/// Test rows explained by the drift experiment when the config leaves
/// `explain_rows` at 0.
const DEFAULT_DRIFT_ROWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub model: ModelFamily,
    pub mae: f64,
    pub mse: f64,
    pub n_test: usize,
    /// Explained test rows and how many of them raised the imputation
    /// warning.
    pub explained: usize,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub strategy: String,
    pub model: ModelFamily,
    pub outcome: Result<MetricsRow, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Strategy-major, in config order.
    pub cells: Vec<CellResult>,
}

impl ComparisonReport {
    pub fn rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    pub fn get(&self, strategy: &str, model: ModelFamily) -> Option<&MetricsRow> {
        self.rows().find(|r| r.strategy == strategy && r.model == model)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,model,mae,mse,n_test,explained,warnings,status\n");
        for c in &self.cells {
            match &c.outcome {
                Ok(r) => out.push_str(&format!(
                    "{},{},{},{},{},{},{},ok\n",
                    r.strategy,
                    r.model.name(),
                    r.mae,
                    r.mse,
                    r.n_test,
                    r.explained,
                    r.warnings
                )),
                Err(e) => out.push_str(&format!(
                    "{},{},,,,,,\"failed: {}\"\n",
                    c.strategy,
                    c.model.name(),
                    e.replace('"', "'")
                )),
            }
        }
        out
    }

    /// Aligned `Model | MAE | MSE` table, one line per cell.
    pub fn to_text(&self) -> String {
        let labels: Vec<String> = self
            .cells
            .iter()
            .map(|c| format!("{} ({})", c.strategy, c.model.name()))
            .collect();
        let width = labels.iter().map(String::len).max().unwrap_or(0).max("Model".len());
        let mut out = format!("{:<width$} | {:>12} | {:>12} | Warnings\n", "Model", "MAE", "MSE");
        out.push_str(&format!("{}\n", "-".repeat(width + 41)));
        for (c, label) in self.cells.iter().zip(&labels) {
            match &c.outcome {
                Ok(r) => out.push_str(&format!(
                    "{:<width$} | {:>12.4} | {:>12.4} | {}/{}\n",
                    label, r.mae, r.mse, r.warnings, r.explained
                )),
                Err(e) => out.push_str(&format!("{label:<width$} | failed: {e}\n")),
            }
        }
        out
    }
}

fn target_values(ds: &Dataset) -> Result<Vec<f64>, HarnessError> {
    let t = ds.target_index()?;
    (0..ds.n_rows())
        .map(|i| {
            ds.get(i, t)
                .ok_or_else(|| HarnessError::Invalid(format!("test row {i} has no target")))
        })
        .collect()
}

fn evaluate_cell(
    config: &ExperimentConfig,
    data: &StrategyData,
    family: ModelFamily,
) -> Result<MetricsRow, HarnessError> {
    let model = fit_model(family, &data.train.data, &config.train)?;
    let predictions = predict_dataset(&model, &data.test.data)?;
    let actuals = target_values(&data.test.data)?;
    let n_explain = config.explain_rows.min(data.test.data.n_rows());
    let mut warnings = 0;
    if n_explain > 0 {
        let ctx = ExplainContext::from_training(&data.train);
        for i in 0..n_explain {
            let e = explain_row(config.explainer, &model, &ctx, &data.test, i, &config.lime, config.top_k)?;
            warnings += e.warning.is_some() as usize;
        }
    }
    Ok(MetricsRow {
        strategy: data.label.clone(),
        model: family,
        mae: mae(&predictions, &actuals)?,
        mse: mse(&predictions, &actuals)?,
        n_test: actuals.len(),
        explained: n_explain,
        warnings,
    })
}

/// Runs every (strategy, model family) cell on one shared split. A failing
/// cell is reported as failed; its siblings are unaffected.
pub fn run_strategy_comparison(config: &ExperimentConfig) -> Result<ComparisonReport, HarnessError> {
    let prepared = prepare(config)?;
    let applied: Vec<(String, Result<StrategyData, String>)> = config
        .strategies
        .par_iter()
        .map(|s| {
            let label = match s {
                ImputationStrategy::CompleteCase => super::NO_MISSING_LABEL.to_string(),
                _ => s.label(),
            };
            (label, apply_strategy(&prepared, s).map_err(|e| e.to_string()))
        })
        .collect();
    let jobs: Vec<(usize, ModelFamily)> = (0..applied.len())
        .flat_map(|s| config.models.iter().map(move |&m| (s, m)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(s, family)| {
            let (label, data) = &applied[s];
            let outcome = match data {
                Ok(d) => evaluate_cell(config, d, family).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            CellResult {
                strategy: label.clone(),
                model: family,
                outcome,
            }
        })
        .collect();
    Ok(ComparisonReport { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub strategy: String,
    pub model: ModelFamily,
    pub rows_explained: usize,
    /// Mean over rows and ground-truth features of |φ_A − φ_O|.
    pub mean_abs_attribution_diff: f64,
    /// Mean over rows of the Spearman correlation of |φ_A| and |φ_O|.
    pub rank_correlation: f64,
    /// Fraction of rows whose top-k feature sets coincide.
    pub top_k_preserved: f64,
    pub top_k: usize,
    /// Mean absolute coefficient difference when both models are linear
    /// over the same features.
    pub coefficient_drift: Option<f64>,
}

impl DriftReport {
    pub fn to_csv(&self) -> String {
        format!(
            "strategy,model,rows_explained,mean_abs_attribution_diff,rank_correlation,top_k_preserved,top_k,coefficient_drift\n{},{},{},{},{},{},{},{}\n",
            self.strategy,
            self.model.name(),
            self.rows_explained,
            self.mean_abs_attribution_diff,
            self.rank_correlation,
            self.top_k_preserved,
            self.top_k,
            self.coefficient_drift.map(|c| c.to_string()).unwrap_or_default()
        )
    }
}

/// Importances of `expl` re-indexed onto `names`; absent features get 0.
fn aligned_importances(expl: &Explanation, names: &[String]) -> Vec<f64> {
    names
        .iter()
        .map(|n| {
            expl.attributions
                .iter()
                .find(|a| &a.feature == n)
                .map_or(0.0, |a| a.importance)
        })
        .collect()
}

fn wrap_observed(data: Dataset) -> ImputedDataset {
    ImputedDataset {
        provenance: ProvenanceMask::all_observed(data.n_rows(), data.n_cols()),
        data,
        strategy: ImputationStrategy::CompleteCase,
        trace: None,
    }
}

/// Compares explanations of a model trained on strategy output (A) with a
/// model trained on the unmasked ground truth (O), over the same test rows,
/// with the first configured model family and explainer.
pub fn explanation_drift(config: &ExperimentConfig, strategy: &ImputationStrategy) -> Result<DriftReport, HarnessError> {
    let prepared = prepare(config)?;
    let truth = prepared.truth.as_ref().ok_or(HarnessError::MissingGroundTruth)?;
    let family = config.models[0];
    let data = apply_strategy(&prepared, strategy)?;
    let truth_train = wrap_observed(truth.select_rows(&prepared.train_rows));
    let truth_test = wrap_observed(truth.select_rows(&prepared.test_rows));

    let model_a = fit_model(family, &data.train.data, &config.train)?;
    let model_o = fit_model(family, &truth_train.data, &config.train)?;
    let ctx_a = ExplainContext::from_training(&data.train);
    let mut ctx_o = ExplainContext::from_training(&truth_train);
    if ctx_a.names == ctx_o.names {
        // one imputation-free reference point for both models
        ctx_o.baseline = ctx_a.baseline.clone();
    }

    let n_rows = match config.explain_rows {
        0 => DEFAULT_DRIFT_ROWS,
        n => n,
    }
    .min(prepared.test_rows.len());
    if n_rows == 0 {
        return Err(HarnessError::EmptyInput);
    }
    let k = config.top_k.min(ctx_o.names.len());
    let per_row: Vec<(f64, f64, bool)> = (0..n_rows)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, bool), HarnessError> {
            let ea = explain_row(config.explainer, &model_a, &ctx_a, &data.test, i, &config.lime, config.top_k)?;
            let eo = explain_row(config.explainer, &model_o, &ctx_o, &truth_test, i, &config.lime, config.top_k)?;
            let a = aligned_importances(&ea, &ctx_o.names);
            let o = eo.importances_by_feature();
            let diff = a.iter().zip(&o).map(|(x, y)| (x - y).abs()).sum::<f64>() / o.len() as f64;
            let abs_a: Vec<f64> = a.iter().map(|v| v.abs()).collect();
            let abs_o: Vec<f64> = o.iter().map(|v| v.abs()).collect();
            let rho = spearman(&abs_a, &abs_o);
            let mut ta = top_k_indices(&a, k);
            let mut to = top_k_indices(&o, k);
            ta.sort_unstable();
            to.sort_unstable();
            Ok((diff, rho, ta == to))
        })
        .collect::<Result<_, _>>()?;
    let n = per_row.len() as f64;
    let coefficient_drift = match (&model_a, &model_o) {
        (Model::Linear(a), Model::Linear(o)) if ctx_a.names == ctx_o.names => Some(
            a.coefficients
                .iter()
                .zip(&o.coefficients)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / o.coefficients.len().max(1) as f64,
        ),
        _ => None,
    };
    Ok(DriftReport {
        strategy: data.label,
        model: family,
        rows_explained: per_row.len(),
        mean_abs_attribution_diff: per_row.iter().map(|r| r.0).sum::<f64>() / n,
        rank_correlation: per_row.iter().map(|r| r.1).sum::<f64>() / n,
        top_k_preserved: per_row.iter().filter(|r| r.2).count() as f64 / n,
        top_k: k,
        coefficient_drift,
    })
}

/// Group disparity of the first configured model family trained on
/// strategy output, measured on the test rows. The data must carry a
/// group-label column.
pub fn group_fairness(
    config: &ExperimentConfig,
    strategy: &ImputationStrategy,
) -> Result<GroupFairnessReport, HarnessError> {
    let prepared = prepare(config)?;
    let data = apply_strategy(&prepared, strategy)?;
    let model = fit_model(config.models[0], &data.train.data, &config.train)?;
    let predictions = predict_dataset(&model, &data.test.data)?;
    let actuals = target_values(&data.test.data)?;
    let test = &data.test.data;
    let g = *test
        .indices_with_role(ColumnRole::GroupLabel)
        .first()
        .ok_or_else(|| HarnessError::Invalid("no group-label column".into()))?;
    let labels: Vec<f64> = (0..test.n_rows()).map(|i| test.get(i, g).unwrap_or(f64::NAN)).collect();
    group_disparity(&predictions, &actuals, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    pub model: ModelFamily,
    pub matched_rate: f64,
    pub shifted_rate: f64,
    pub matched_mae: f64,
    pub shifted_mae: f64,
    pub matched_mse: f64,
    pub shifted_mse: f64,
}

/// Trains on data masked at the configured MCAR rate p, then evaluates on
/// ground-truth test rows masked at p and at min(2p, 1). Both test masks
/// come from one seed, so the shifted mask contains the matched one.
///
/// With `strategy` set, its fit on the training rows fills both test sets;
/// without it the model must route missing cells itself (tree families).
pub fn missingness_shift(
    config: &ExperimentConfig,
    strategy: Option<&ImputationStrategy>,
) -> Result<ShiftReport, HarnessError> {
    let (rate, columns) = match &config.missingness {
        Some(MissingnessSpec {
            mechanism: Mechanism::Mcar { rate },
            columns,
        }) => (*rate, columns.clone()),
        _ => return Err(HarnessError::Invalid("missingness shift needs an MCAR mechanism".into())),
    };
    let prepared = prepare(config)?;
    let truth = prepared.truth.as_ref().ok_or(HarnessError::MissingGroundTruth)?;
    let family = config.models[0];
    let truth_test = truth.select_rows(&prepared.test_rows);
    let shifted_rate = (2.0 * rate).min(1.0);
    let seed = derive_seed(config.seed, "shift");
    let mask = |r: f64| -> Result<Dataset, HarnessError> {
        let spec = MissingnessSpec {
            mechanism: Mechanism::Mcar { rate: r },
            columns: columns.clone(),
        };
        Ok(apply_missingness(&truth_test, &spec, seed)?.0)
    };
    let matched = mask(rate)?;
    let shifted = mask(shifted_rate)?;

    let (model, matched, shifted) = match strategy {
        Some(s) => {
            let (imputer, train_out) = crate::impute::FittedImputer::fit(s, &prepared.train())?;
            let model = fit_model(family, &train_out.data, &config.train)?;
            (model, imputer.apply(&matched)?.data, imputer.apply(&shifted)?.data)
        }
        None => (fit_model(family, &prepared.train(), &config.train)?, matched, shifted),
    };
    let actuals = target_values(&truth_test)?;
    let pm = predict_dataset(&model, &matched)?;
    let ps = predict_dataset(&model, &shifted)?;
    Ok(ShiftReport {
        model: family,
        matched_rate: rate,
        shifted_rate,
        matched_mae: mae(&pm, &actuals)?,
        shifted_mae: mae(&ps, &actuals)?,
        matched_mse: mse(&pm, &actuals)?,
        shifted_mse: mse(&ps, &actuals)?,
    })
}
