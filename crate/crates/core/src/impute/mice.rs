//! Chained-equations imputation with deterministic regression-mean fills.
//!
//! Missing cells start at their column mean. Each sweep visits the gappy
//! feature columns in ascending index order, regresses the column on every
//! other feature over its observed rows, and overwrites its missing cells
//! with the fitted predictions. Sweeps stop once the largest change of any
//! imputed cell, measured in observed standard deviations, is within `tol`.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnStats, Dataset};
use crate::linalg::least_squares;

use super::{
    CellOrigin, ImputationStrategy, ImputeError, ImputedDataset, MiceParams, ProvenanceMask,
    StrategyId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub max_delta: f64,
    /// Columns that fell back to mean fill because their regression was
    /// singular.
    pub fallbacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MiceTrace {
    pub sweeps: Vec<SweepRecord>,
    pub converged: bool,
}

impl MiceTrace {
    pub fn final_delta(&self) -> Option<f64> {
        self.sweeps.last().map(|s| s.max_delta)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("converged: {}\nsweeps: {}\n", self.converged, self.sweeps.len());
        for (n, s) in self.sweeps.iter().enumerate() {
            out.push_str(&format!("sweep {}: max_delta {}", n + 1, s.max_delta));
            if !s.fallbacks.is_empty() {
                out.push_str(&format!(" fallback-mean [{}]", s.fallbacks.join(" ")));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ColumnModel {
    /// Intercept followed by one coefficient per other feature, in order.
    Regression(Vec<f64>),
    Mean,
}

/// Completed feature matrix under construction (row-major, features only).
struct Work {
    k: usize,
    cells: Vec<f64>,
}

impl Work {
    fn at(&self, i: usize, c: usize) -> f64 {
        self.cells[i * self.k + c]
    }

    fn predict(&self, model: &ColumnModel, i: usize, c: usize, mean: f64) -> f64 {
        match model {
            ColumnModel::Mean => mean,
            ColumnModel::Regression(coef) => {
                let mut acc = coef[0];
                let mut t = 1;
                for o in 0..self.k {
                    if o != c {
                        acc += coef[t] * self.at(i, o);
                        t += 1;
                    }
                }
                acc
            }
        }
    }

    fn regress(&self, c: usize, rows: &[usize]) -> Option<ColumnModel> {
        let mut design = Vec::with_capacity(rows.len() * self.k);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            design.push(1.0);
            for o in 0..self.k {
                if o != c {
                    design.push(self.at(i, o));
                }
            }
            y.push(self.at(i, c));
        }
        least_squares(&design, self.k, &y, None)
            .ok()
            .map(ColumnModel::Regression)
    }
}

/// Learned chained regressions, replayable on new rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MiceFit {
    params: MiceParams,
    columns: Vec<String>,
    means: Vec<f64>,
    scales: Vec<f64>,
    models: Vec<ColumnModel>,
}

struct Layout {
    /// Dataset column index per feature slot.
    slots: Vec<usize>,
    /// Per slot, rows where the cell is missing.
    missing_rows: Vec<Vec<usize>>,
}

fn layout(ds: &Dataset, slots: Vec<usize>) -> Layout {
    let missing_rows = slots
        .iter()
        .map(|&j| (0..ds.n_rows()).filter(|&i| ds.is_missing(i, j)).collect())
        .collect();
    Layout {
        slots,
        missing_rows,
    }
}

fn initial_work(ds: &Dataset, lay: &Layout, means: &[f64]) -> Work {
    let k = lay.slots.len();
    let mut cells = Vec::with_capacity(ds.n_rows() * k);
    for i in 0..ds.n_rows() {
        for (c, &j) in lay.slots.iter().enumerate() {
            cells.push(ds.get(i, j).unwrap_or(means[c]));
        }
    }
    Work { k, cells }
}

/// Runs sweeps, choosing each column's model per sweep via `model_for`.
fn run_sweeps(
    work: &mut Work,
    lay: &Layout,
    params: &MiceParams,
    means: &[f64],
    scales: &[f64],
    names: &[String],
    mut model_for: impl FnMut(&Work, usize) -> Option<ColumnModel>,
) -> MiceTrace {
    let mut trace = MiceTrace::default();
    if lay.missing_rows.iter().all(Vec::is_empty) {
        trace.converged = true;
        return trace;
    }
    for _ in 0..params.max_iter {
        let mut max_delta: f64 = 0.0;
        let mut fallbacks = Vec::new();
        for c in 0..work.k {
            if lay.missing_rows[c].is_empty() {
                continue;
            }
            let model = model_for(work, c).unwrap_or_else(|| {
                fallbacks.push(names[c].clone());
                ColumnModel::Mean
            });
            for &i in &lay.missing_rows[c] {
                let new = work.predict(&model, i, c, means[c]);
                let old = work.cells[i * work.k + c];
                max_delta = max_delta.max((new - old).abs() / scales[c]);
                work.cells[i * work.k + c] = new;
            }
        }
        trace.sweeps.push(SweepRecord {
            max_delta,
            fallbacks,
        });
        if max_delta <= params.tol {
            trace.converged = true;
            break;
        }
    }
    trace
}

fn finish(ds: &Dataset, lay: &Layout, work: &Work, params: MiceParams, trace: MiceTrace) -> ImputedDataset {
    let mut provenance = ProvenanceMask::all_observed(ds.n_rows(), ds.n_cols());
    let mut slot_of = vec![None; ds.n_cols()];
    for (c, &j) in lay.slots.iter().enumerate() {
        slot_of[j] = Some(c);
        for &i in &lay.missing_rows[c] {
            provenance.set(i, j, CellOrigin::Imputed(StrategyId::Mice));
        }
    }
    let data = ds.map_cells(|i, j, v| match (v, slot_of[j]) {
        (None, Some(c)) => Some(work.at(i, c)),
        _ => v,
    });
    ImputedDataset {
        data,
        provenance,
        strategy: ImputationStrategy::Mice {
            max_iter: params.max_iter,
            tol: params.tol,
            seed: params.seed,
        },
        trace: Some(trace),
    }
}

impl MiceFit {
    /// Imputes `ds` and keeps, for every feature, a regression on the other
    /// features refit on the final completed data.
    pub fn fit(ds: &Dataset, params: MiceParams) -> Result<(Self, ImputedDataset), ImputeError> {
        params.validate()?;
        let slots = ds.feature_indices();
        if slots.len() < 2 {
            return Err(ImputeError::TooFewFeatures(slots.len()));
        }
        let mut means = Vec::with_capacity(slots.len());
        let mut scales = Vec::with_capacity(slots.len());
        for &j in &slots {
            let stats = ColumnStats::from_values(&ds.observed_values(j), 0.0).ok_or_else(|| {
                ImputeError::NoObserved {
                    column: ds.column(j).name.clone(),
                    cohort: None,
                }
            })?;
            means.push(stats.mean);
            scales.push(if stats.std > 0.0 { stats.std } else { 1.0 });
        }
        let names: Vec<String> = slots.iter().map(|&j| ds.column(j).name.clone()).collect();
        let lay = layout(ds, slots);
        let observed_rows: Vec<Vec<usize>> = lay
            .slots
            .iter()
            .map(|&j| (0..ds.n_rows()).filter(|&i| !ds.is_missing(i, j)).collect())
            .collect();

        let mut work = initial_work(ds, &lay, &means);
        let trace = run_sweeps(&mut work, &lay, &params, &means, &scales, &names, |w, c| {
            w.regress(c, &observed_rows[c])
        });
        let models = (0..work.k)
            .map(|c| work.regress(c, &observed_rows[c]).unwrap_or(ColumnModel::Mean))
            .collect();
        let out = finish(ds, &lay, &work, params, trace);
        Ok((
            Self {
                params,
                columns: names,
                means,
                scales,
                models,
            },
            out,
        ))
    }

    /// Fills `ds` with the learned regressions. Missing cells start at the
    /// fitted means and are refined by the same sweep schedule.
    pub fn apply(&self, ds: &Dataset) -> Result<ImputedDataset, ImputeError> {
        let mut slots = Vec::with_capacity(self.columns.len());
        for name in &self.columns {
            slots.push(ds.require_column(name)?);
        }
        let lay = layout(ds, slots);
        let mut work = initial_work(ds, &lay, &self.means);
        let trace = run_sweeps(
            &mut work,
            &lay,
            &self.params,
            &self.means,
            &self.scales,
            &self.columns,
            |_, c| match &self.models[c] {
                ColumnModel::Mean => None,
                m => Some(m.clone()),
            },
        );
        Ok(finish(ds, &lay, &work, self.params, trace))
    }
}

pub fn mice_impute(ds: &Dataset, params: MiceParams) -> Result<ImputedDataset, ImputeError> {
    MiceFit::fit(ds, params).map(|(_, out)| out)
}
