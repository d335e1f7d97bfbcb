//! Columnar numeric dataset with a per-cell missing mask.
//!
//! Values are stored row-major. A cell flagged missing carries `NaN` in the
//! value buffer and is never read through the public accessors, which return
//! `Option<f64>` instead.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default two-sided trim fraction used for the truncated mean.
pub const DEFAULT_TRIM: f64 = 0.1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column '{column}': cannot parse '{cell}' as a number")]
    Parse {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("no column named '{0}'")]
    UnknownColumn(String),
    #[error("shape mismatch: expected {expected} cells, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("column '{0}' has no observed cells")]
    NoObserved(String),
    #[error("trim fraction {0} outside [0, 0.5)")]
    BadTrim(f64),
    #[error("test fraction {fraction} over {n_rows} rows leaves one side empty")]
    DegenerateSplit { fraction: f64, n_rows: usize },
    #[error("dataset has {0} target columns, expected exactly one")]
    TargetCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRole {
    Feature,
    Target,
    GroupLabel,
    CohortKey,
}

/// Value transform applied to a whole column, recorded so that observed
/// cells whose value was rewritten are distinguishable from raw ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnTransform {
    /// Presence indicator: 1 where observed, 0 where missing.
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub role: ColumnRole,
    pub missing_rate: f64,
    pub transform: Option<ColumnTransform>,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            role,
            missing_rate: 0.0,
            transform: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<ColumnMeta>,
    values: Vec<f64>,
    missing: Vec<bool>,
    n_rows: usize,
}

/// Equality ignores the placeholder stored under missing cells.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.n_rows == other.n_rows
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), &m)| m || a == b)
    }
}

impl Dataset {
    /// Builds a dataset from row-major cells; `None` marks a missing cell.
    pub fn from_rows(
        columns: Vec<ColumnMeta>,
        rows: &[Vec<Option<f64>>],
    ) -> Result<Self, DatasetError> {
        let n_cols = columns.len();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        let mut missing = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(DatasetError::Shape {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for cell in row {
                values.push(cell.unwrap_or(f64::NAN));
                missing.push(cell.is_none());
            }
        }
        Self::from_parts(columns, values, missing)
    }

    /// Builds a dataset from row-major buffers. Values under a set mask bit
    /// are discarded.
    pub fn from_parts(
        columns: Vec<ColumnMeta>,
        mut values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self, DatasetError> {
        validate_names(&columns)?;
        let n_cols = columns.len();
        if values.len() != missing.len() {
            return Err(DatasetError::Shape {
                expected: values.len(),
                found: missing.len(),
            });
        }
        if n_cols == 0 {
            if !values.is_empty() {
                return Err(DatasetError::Shape {
                    expected: 0,
                    found: values.len(),
                });
            }
        } else if values.len() % n_cols != 0 {
            return Err(DatasetError::Shape {
                expected: (values.len() / n_cols + 1) * n_cols,
                found: values.len(),
            });
        }
        let n_rows = if n_cols == 0 { 0 } else { values.len() / n_cols };
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = f64::NAN;
            }
        }
        let mut ds = Self {
            columns,
            values,
            missing,
            n_rows,
        };
        ds.refresh_missing_rates();
        Ok(ds)
    }

    /// Column-major convenience constructor for fully observed data.
    pub fn from_columns(columns: Vec<(ColumnMeta, Vec<f64>)>) -> Result<Self, DatasetError> {
        let n_rows = columns.first().map_or(0, |c| c.1.len());
        let n_cols = columns.len();
        let mut values = vec![0.0; n_rows * n_cols];
        for (j, (_, col)) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(DatasetError::Shape {
                    expected: n_rows,
                    found: col.len(),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                values[i * n_cols + j] = v;
            }
        }
        let missing = vec![false; values.len()];
        Self::from_parts(columns.into_iter().map(|c| c.0).collect(), values, missing)
    }

    fn refresh_missing_rates(&mut self) {
        let n_cols = self.n_cols();
        for j in 0..n_cols {
            let count = (0..self.n_rows)
                .filter(|&i| self.missing[i * n_cols + j])
                .count();
            self.columns[j].missing_rate = if self.n_rows == 0 {
                0.0
            } else {
                count as f64 / self.n_rows as f64
            };
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &ColumnMeta {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize, DatasetError> {
        self.column_index(name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n_cols() + j;
        if self.missing[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i * self.n_cols() + j]
    }

    /// Raw row-major value buffer; missing cells hold `NaN`.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        (0..self.n_cols()).map(|j| self.get(i, j)).collect()
    }

    pub fn column_values(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn observed_values(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).filter_map(|i| self.get(i, j)).collect()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        (0..self.n_rows).filter(|&i| self.is_missing(i, j)).count()
    }

    pub fn has_missing(&self, j: usize) -> bool {
        (0..self.n_rows).any(|i| self.is_missing(i, j))
    }

    pub fn indices_with_role(&self, role: ColumnRole) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn feature_indices(&self) -> Vec<usize> {
        self.indices_with_role(ColumnRole::Feature)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_indices()
            .into_iter()
            .map(|j| self.columns[j].name.clone())
            .collect()
    }

    pub fn target_index(&self) -> Result<usize, DatasetError> {
        let targets = self.indices_with_role(ColumnRole::Target);
        match targets.as_slice() {
            [t] => Ok(*t),
            _ => Err(DatasetError::TargetCount(targets.len())),
        }
    }

    /// Feature cells of row `i`, in feature-column order.
    pub fn feature_row(&self, i: usize) -> Vec<Option<f64>> {
        self.feature_indices()
            .into_iter()
            .map(|j| self.get(i, j))
            .collect()
    }

    /// Returns a copy with the given column re-labelled.
    pub fn with_role(mut self, name: &str, role: ColumnRole) -> Result<Self, DatasetError> {
        let j = self.require_column(name)?;
        self.columns[j].role = role;
        Ok(self)
    }

    pub fn with_transform(mut self, j: usize, transform: Option<ColumnTransform>) -> Self {
        self.columns[j].transform = transform;
        self
    }

    /// New dataset holding `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n_cols = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        let mut missing = Vec::with_capacity(rows.len() * n_cols);
        for &i in rows {
            values.extend_from_slice(&self.values[i * n_cols..(i + 1) * n_cols]);
            missing.extend_from_slice(&self.missing[i * n_cols..(i + 1) * n_cols]);
        }
        let mut ds = Self {
            columns: self.columns.clone(),
            values,
            missing,
            n_rows: rows.len(),
        };
        ds.refresh_missing_rates();
        ds
    }

    /// New dataset holding `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n_cols = self.n_cols();
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        let mut missing = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            for &j in cols {
                values.push(self.values[i * n_cols + j]);
                missing.push(self.missing[i * n_cols + j]);
            }
        }
        let mut ds = Self {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            values,
            missing,
            n_rows: self.n_rows,
        };
        ds.refresh_missing_rates();
        ds
    }

    /// Returns a copy where `edit` may overwrite cells. Setting a cell to
    /// `Some(v)` clears its missing bit; `None` sets it.
    pub fn map_cells(&self, mut edit: impl FnMut(usize, usize, Option<f64>) -> Option<f64>) -> Self {
        let n_cols = self.n_cols();
        let mut values = self.values.clone();
        let mut missing = self.missing.clone();
        for i in 0..self.n_rows {
            for j in 0..n_cols {
                let k = i * n_cols + j;
                match edit(i, j, self.get(i, j)) {
                    Some(v) => {
                        values[k] = v;
                        missing[k] = false;
                    }
                    None => {
                        values[k] = f64::NAN;
                        missing[k] = true;
                    }
                }
            }
        }
        let mut ds = Self {
            columns: self.columns.clone(),
            values,
            missing,
            n_rows: self.n_rows,
        };
        ds.refresh_missing_rates();
        ds
    }

    /// Serializes to CSV with the header in column order. Missing cells are
    /// written as `missing_token`; values use the shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W, missing_token: &str) -> std::io::Result<()> {
        let header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows {
            line.clear();
            for j in 0..self.n_cols() {
                if j > 0 {
                    line.push(',');
                }
                match self.get(i, j) {
                    Some(v) => line.push_str(&format_value(v)),
                    None => line.push_str(missing_token),
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, missing_token: &str) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, missing_token)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: &Path, missing_token: &str) -> Result<(), DatasetError> {
        fs::write(path, self.to_csv_string(missing_token)).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Canonical text form of a value: shortest representation that parses back
/// to the identical `f64`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        // collapse -0.0 so that output is sign-stable
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn validate_names(columns: &[ColumnMeta]) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for (j, c) in columns.iter().enumerate() {
        if c.name.is_empty() {
            return Err(DatasetError::EmptyColumnName(j));
        }
        if !seen.insert(c.name.as_str()) {
            return Err(DatasetError::DuplicateColumn(c.name.clone()));
        }
    }
    Ok(())
}

/// Parses CSV text. `target` names the target column; every other column
/// starts out as a feature.
pub fn parse_csv(text: &str, target: &str, missing_token: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut columns: Vec<ColumnMeta> = header
        .iter()
        .map(|h| ColumnMeta::new(h.trim(), ColumnRole::Feature))
        .collect();
    validate_names(&columns)?;
    let t = columns
        .iter()
        .position(|c| c.name == target)
        .ok_or_else(|| DatasetError::UnknownColumn(target.to_string()))?;
    columns[t].role = ColumnRole::Target;

    let n_cols = columns.len();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, header excluded
        let row = r + 1;
        if record.len() != n_cols {
            return Err(DatasetError::RaggedRow {
                row,
                found: record.len(),
                expected: n_cols,
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || cell == missing_token {
                values.push(f64::NAN);
                missing.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                    row,
                    column: columns[j].name.clone(),
                    cell: cell.to_string(),
                })?;
                values.push(v);
                missing.push(false);
            }
        }
    }
    Dataset::from_parts(columns, values, missing)
}

pub fn load_csv(path: &Path, target: &str, missing_token: &str) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, target, missing_token)
}

/// Central-tendency and spread statistics over the observed cells of one
/// column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub median: f64,
    pub truncated_mean: f64,
    pub trim: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n_observed: usize,
}

impl ColumnStats {
    pub fn from_values(observed: &[f64], trim: f64) -> Option<Self> {
        if observed.is_empty() {
            return None;
        }
        let mut sorted = observed.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let cut = (trim * n as f64).floor() as usize;
        let kept = &sorted[cut..n - cut];
        let truncated_mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let std = if n > 1 {
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            median,
            truncated_mean,
            trim,
            std,
            min: sorted[0],
            max: sorted[n - 1],
            n_observed: n,
        })
    }
}

pub fn column_stats(ds: &Dataset, col: usize, trim: f64) -> Result<ColumnStats, DatasetError> {
    if !(0.0..0.5).contains(&trim) {
        return Err(DatasetError::BadTrim(trim));
    }
    ColumnStats::from_values(&ds.observed_values(col), trim)
        .ok_or_else(|| DatasetError::NoObserved(ds.column(col).name.clone()))
}

/// Removes feature columns whose missing rate exceeds `threshold`. Columns
/// with any other role are kept.
pub fn drop_high_missing(ds: &Dataset, threshold: f64) -> Dataset {
    let keep: Vec<usize> = ds
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role != ColumnRole::Feature || c.missing_rate <= threshold)
        .map(|(j, _)| j)
        .collect();
    ds.select_columns(&keep)
}

/// Seeded row partition. Both halves keep the original relative row order.
pub fn split_train_test(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    let (train, test) = split_indices(ds.n_rows(), test_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

pub fn split_indices(
    n_rows: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let n_test = (test_fraction * n_rows as f64).round() as usize;
    if !(test_fraction > 0.0 && test_fraction < 1.0) || n_test == 0 || n_test >= n_rows {
        return Err(DatasetError::DegenerateSplit {
            fraction: test_fraction,
            n_rows,
        });
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_col(a: &[Option<f64>], b: &[Option<f64>]) -> Dataset {
        let rows: Vec<Vec<Option<f64>>> = a.iter().zip(b).map(|(x, y)| vec![*x, *y]).collect();
        Dataset::from_rows(
            vec![
                ColumnMeta::new("a", ColumnRole::Feature),
                ColumnMeta::new("b", ColumnRole::Target),
            ],
            &rows,
        )
        .unwrap()
    }

    #[test]
    fn parses_empty_field_as_missing() {
        let ds = parse_csv("a,b\n1,\n2,3\n", "b", "").unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_cols(), 2);
        assert_eq!(ds.missing_mask(), &[false, true, false, false]);
        assert_eq!(ds.get(1, 1), Some(3.0));
        assert_eq!(ds.column(1).role, ColumnRole::Target);
        assert_eq!(ds.column(1).missing_rate, 0.5);
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let ds = parse_csv("a,b\n", "a", "").unwrap();
        assert_eq!(ds.n_rows(), 0);
        assert_eq!(ds.n_cols(), 2);
    }

    #[test]
    fn custom_missing_token() {
        let ds = parse_csv("a,y\nNaN,1\n", "y", "NaN").unwrap();
        assert!(ds.is_missing(0, 0));
        assert_eq!(ds.get(0, 0), None);
    }

    #[test]
    fn csv_errors() {
        match parse_csv("a,b\n1,x\n", "b", "") {
            Err(DatasetError::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv("a,a\n1,2\n", "a", ""),
            Err(DatasetError::DuplicateColumn(_))
        ));
        assert!(matches!(
            parse_csv("a,b\n1,2\n", "y", ""),
            Err(DatasetError::UnknownColumn(_))
        ));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), "y", ""),
            Err(DatasetError::Io { .. })
        ));
    }

    #[test]
    fn stats_examples() {
        let s = ColumnStats::from_values(&[1.0, 3.0], 0.0).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        let s = ColumnStats::from_values(&[1.0, 2.0, 10.0], 0.0).unwrap();
        assert_eq!(s.median, 2.0);
        // floor(0.2 * 5) = 1 value trimmed from each end: {1, 2, 3}
        let s = ColumnStats::from_values(&[0.0, 1.0, 2.0, 3.0, 100.0], 0.2).unwrap();
        assert_eq!(s.truncated_mean, 2.0);
        assert_eq!(s.min, 0.0);
        assert_eq!(s.max, 100.0);
    }

    #[test]
    fn stats_ignore_missing_and_reject_empty() {
        let ds = two_col(&[Some(1.0), None, Some(3.0)], &[Some(0.0); 3]);
        let s = column_stats(&ds, 0, 0.0).unwrap();
        assert_eq!(s.n_observed, 2);
        assert_eq!(s.mean, 2.0);
        let empty = two_col(&[None, None], &[Some(0.0); 2]);
        assert!(matches!(
            column_stats(&empty, 0, 0.1),
            Err(DatasetError::NoObserved(_))
        ));
        assert!(matches!(
            column_stats(&ds, 0, 0.5),
            Err(DatasetError::BadTrim(_))
        ));
    }

    #[test]
    fn drop_rule() {
        // 3 of 5 missing = 60%
        let ds = two_col(
            &[None, None, None, Some(1.0), Some(2.0)],
            &[None, None, None, None, Some(0.0)],
        );
        let kept = drop_high_missing(&ds, 0.5);
        assert_eq!(kept.n_cols(), 1);
        assert_eq!(kept.column(0).name, "b");
        assert_eq!(drop_high_missing(&ds, 1.0), ds);

        let full = two_col(&[Some(1.0), Some(2.0)], &[Some(0.0), Some(1.0)]);
        assert_eq!(drop_high_missing(&full, 0.5), full);
    }

    #[test]
    fn split_examples() {
        let ds = two_col(&[Some(0.0); 10], &[Some(1.0); 10]);
        let (tr, te) = split_train_test(&ds, 0.3, 7).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (7, 3));
        assert_eq!(split_indices(10, 0.3, 7).unwrap(), split_indices(10, 0.3, 7).unwrap());

        let small = two_col(&[Some(0.0); 2], &[Some(1.0); 2]);
        let (tr, te) = split_train_test(&small, 0.5, 1).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 1));

        let base = split_indices(10, 0.3, 7).unwrap();
        assert!((0..100u64).any(|s| split_indices(10, 0.3, 1000 + s).unwrap() != base));

        assert!(split_indices(10, 0.01, 1).is_err());
        assert!(split_indices(10, 0.99, 1).is_err());
        assert!(split_indices(10, 0.0, 1).is_err());
    }

    #[test]
    fn map_cells_updates_mask() {
        let ds = two_col(&[Some(1.0), None], &[Some(0.0), Some(1.0)]);
        let filled = ds.map_cells(|_, _, v| Some(v.unwrap_or(9.0)));
        assert_eq!(filled.get(1, 0), Some(9.0));
        assert_eq!(filled.column(0).missing_rate, 0.0);
    }
}
