use std::collections::BTreeMap;

use crate::dataset::{ColumnStats, Dataset};

use super::{
    CellOrigin, CentralMeasure, ImputationStrategy, ImputeError, ImputedDataset, ProvenanceMask,
    StrategyId,
};

/// Cohort identity by bit pattern, with `-0.0` folded into `0.0`.
fn cohort_id(v: f64) -> u64 {
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}

/// Per-column (optionally per-cohort) fill values computed on observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralFill {
    measure: CentralMeasure,
    trim: f64,
    cohort_key: Option<String>,
    /// Feature column name and its pooled fill.
    pooled: Vec<(String, Option<f64>)>,
    by_cohort: BTreeMap<u64, Vec<Option<f64>>>,
}

impl CentralFill {
    pub fn fit(
        ds: &Dataset,
        measure: CentralMeasure,
        cohort_key: Option<&str>,
        trim: f64,
    ) -> Result<Self, ImputeError> {
        if !(0.0..0.5).contains(&trim) {
            return Err(ImputeError::InvalidParams(format!("trim {trim} outside [0, 0.5)")));
        }
        let features = ds.feature_indices();
        let central = |vals: &[f64]| {
            ColumnStats::from_values(vals, trim).map(|s| match measure {
                CentralMeasure::Mean => s.mean,
                CentralMeasure::Median => s.median,
                CentralMeasure::TruncatedMean => s.truncated_mean,
            })
        };
        let pooled = features
            .iter()
            .map(|&j| (ds.column(j).name.clone(), central(&ds.observed_values(j))))
            .collect();

        let mut by_cohort = BTreeMap::new();
        if let Some(key) = cohort_key {
            let k = ds.require_column(key)?;
            let mut rows: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for i in 0..ds.n_rows() {
                let v = ds
                    .get(i, k)
                    .ok_or_else(|| ImputeError::CohortKeyMissing(key.to_string()))?;
                rows.entry(cohort_id(v)).or_default().push(i);
            }
            for (id, members) in rows {
                let fills = features
                    .iter()
                    .map(|&j| {
                        let vals: Vec<f64> = members.iter().filter_map(|&i| ds.get(i, j)).collect();
                        central(&vals)
                    })
                    .collect();
                by_cohort.insert(id, fills);
            }
        }
        let fill = Self {
            measure,
            trim,
            cohort_key: cohort_key.map(str::to_string),
            pooled,
            by_cohort,
        };
        // surface unfillable cells at fit time
        fill.apply(ds)?;
        Ok(fill)
    }

    /// Fill value for the `f`-th feature in a row whose cohort key is `cohort`.
    fn lookup(&self, f: usize, cohort: Option<f64>) -> Result<f64, ImputeError> {
        let (name, pooled) = &self.pooled[f];
        let found = match cohort {
            Some(c) => self.by_cohort.get(&cohort_id(c)).and_then(|fills| fills[f]),
            None => *pooled,
        };
        found.ok_or_else(|| ImputeError::NoObserved {
            column: name.clone(),
            cohort,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<ImputedDataset, ImputeError> {
        let mut slots = Vec::with_capacity(self.pooled.len());
        for (name, _) in &self.pooled {
            slots.push(ds.require_column(name)?);
        }
        let key = match &self.cohort_key {
            Some(k) => Some(ds.require_column(k)?),
            None => None,
        };
        let mut fills: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for i in 0..ds.n_rows() {
            let cohort = match key {
                Some(k) => Some(
                    ds.get(i, k)
                        .ok_or_else(|| ImputeError::CohortKeyMissing(ds.column(k).name.clone()))?,
                ),
                None => None,
            };
            for (f, &j) in slots.iter().enumerate() {
                if ds.is_missing(i, j) {
                    fills.insert((i, j), self.lookup(f, cohort)?);
                }
            }
        }
        let data = ds.map_cells(|i, j, v| v.or_else(|| fills.get(&(i, j)).copied()));
        let mut provenance = ProvenanceMask::all_observed(ds.n_rows(), ds.n_cols());
        for &(i, j) in fills.keys() {
            provenance.set(i, j, CellOrigin::Imputed(StrategyId::Central));
        }
        Ok(ImputedDataset {
            data,
            provenance,
            strategy: ImputationStrategy::Central {
                measure: self.measure,
                cohort_key: self.cohort_key.clone(),
                trim: self.trim,
            },
            trace: None,
        })
    }

    /// Pooled fill per feature column, in feature order.
    pub fn pooled_fills(&self) -> Vec<(String, Option<f64>)> {
        self.pooled.clone()
    }
}

pub fn central_impute(
    ds: &Dataset,
    measure: CentralMeasure,
    cohort_key: Option<&str>,
    trim: f64,
) -> Result<ImputedDataset, ImputeError> {
    CentralFill::fit(ds, measure, cohort_key, trim)?.apply(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnMeta, ColumnRole};

    fn single(col: &[Option<f64>]) -> Dataset {
        let rows: Vec<Vec<Option<f64>>> = col.iter().map(|v| vec![*v, Some(0.0)]).collect();
        Dataset::from_rows(
            vec![
                ColumnMeta::new("a", ColumnRole::Feature),
                ColumnMeta::new("y", ColumnRole::Target),
            ],
            &rows,
        )
        .unwrap()
    }

    #[test]
    fn mean_fill() {
        let d = single(&[Some(1.0), None, Some(3.0)]);
        let out = central_impute(&d, CentralMeasure::Mean, None, 0.1).unwrap();
        assert_eq!(out.data.column_values(0), vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(out.provenance.get(1, 0), CellOrigin::Imputed(StrategyId::Central));
        assert_eq!(out.provenance.fabricated_count(), 1);
    }

    #[test]
    fn median_and_truncated_fill() {
        let d = single(&[Some(0.0), Some(1.0), Some(2.0), Some(3.0), Some(100.0), None]);
        let med = central_impute(&d, CentralMeasure::Median, None, 0.1).unwrap();
        assert_eq!(med.data.get(5, 0), Some(2.0));
        let tm = central_impute(&d, CentralMeasure::TruncatedMean, None, 0.2).unwrap();
        assert_eq!(tm.data.get(5, 0), Some(2.0));
    }

    #[test]
    fn no_missing_is_identity() {
        let d = single(&[Some(1.0), Some(5.0)]);
        let out = central_impute(&d, CentralMeasure::Mean, None, 0.1).unwrap();
        assert_eq!(out.data, d);
        assert_eq!(out.provenance.fabricated_count(), 0);
    }

    #[test]
    fn cohort_fill_uses_own_cohort() {
        // cohort A observes {0, 0}; cohort B observes {10} and has one gap.
        // pooled mean would be 10/3.
        let rows = vec![
            vec![Some(0.0), Some(0.0), Some(1.0)],
            vec![Some(0.0), Some(0.0), Some(1.0)],
            vec![Some(10.0), Some(1.0), Some(1.0)],
            vec![None, Some(1.0), Some(1.0)],
        ];
        let d = Dataset::from_rows(
            vec![
                ColumnMeta::new("lab", ColumnRole::Feature),
                ColumnMeta::new("cohort", ColumnRole::CohortKey),
                ColumnMeta::new("y", ColumnRole::Target),
            ],
            &rows,
        )
        .unwrap();
        let out = central_impute(&d, CentralMeasure::Mean, Some("cohort"), 0.1).unwrap();
        assert_eq!(out.data.get(3, 0), Some(10.0));
        let pooled = central_impute(&d, CentralMeasure::Mean, None, 0.1).unwrap();
        assert_eq!(pooled.data.get(3, 0), Some(10.0 / 3.0));
    }

    #[test]
    fn empty_cohort_reports_cohort_and_column() {
        let rows = vec![
            vec![Some(1.0), Some(0.0), Some(1.0)],
            vec![None, Some(7.0), Some(1.0)],
        ];
        let d = Dataset::from_rows(
            vec![
                ColumnMeta::new("lab", ColumnRole::Feature),
                ColumnMeta::new("cohort", ColumnRole::CohortKey),
                ColumnMeta::new("y", ColumnRole::Target),
            ],
            &rows,
        )
        .unwrap();
        let err = central_impute(&d, CentralMeasure::Mean, Some("cohort"), 0.1).unwrap_err();
        match err {
            ImputeError::NoObserved { column, cohort } => {
                assert_eq!(column, "lab");
                assert_eq!(cohort, Some(7.0));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fully_missing_column_errors() {
        let d = single(&[None, None]);
        assert!(matches!(
            central_impute(&d, CentralMeasure::Mean, None, 0.1),
            Err(ImputeError::NoObserved { cohort: None, .. })
        ));
    }
}
