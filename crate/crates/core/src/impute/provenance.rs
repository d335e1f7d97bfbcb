use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

/// Which strategy fabricated an imputed cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyId {
    Central,
    Mice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellOrigin {
    Observed,
    Imputed(StrategyId),
    Indicator,
}

impl CellOrigin {
    /// True for any cell whose value was not read from the source.
    pub fn is_fabricated(self) -> bool {
        !matches!(self, CellOrigin::Observed)
    }

    /// Sidecar letter: `O`bserved, `I`mputed, i`N`dicator.
    pub fn code(self) -> char {
        match self {
            CellOrigin::Observed => 'O',
            CellOrigin::Imputed(_) => 'I',
            CellOrigin::Indicator => 'N',
        }
    }
}

/// Per-cell origin tags with the shape of the dataset they describe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceMask {
    n_rows: usize,
    n_cols: usize,
    origin: Vec<CellOrigin>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProvenanceParseError {
    #[error("provenance header does not match dataset columns")]
    Header,
    #[error("provenance row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("provenance row {row}: unknown code '{code}'")]
    Code { row: usize, code: String },
}

impl ProvenanceMask {
    pub fn all_observed(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            origin: vec![CellOrigin::Observed; n_rows * n_cols],
        }
    }

    /// Marks every missing cell of `source` with `tag`.
    pub fn from_missing(source: &Dataset, tag: impl Fn(usize) -> CellOrigin) -> Self {
        let mut mask = Self::all_observed(source.n_rows(), source.n_cols());
        for i in 0..source.n_rows() {
            for j in 0..source.n_cols() {
                if source.is_missing(i, j) {
                    mask.set(i, j, tag(j));
                }
            }
        }
        mask
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> CellOrigin {
        self.origin[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, origin: CellOrigin) {
        self.origin[i * self.n_cols + j] = origin;
    }

    pub fn row(&self, i: usize) -> &[CellOrigin] {
        &self.origin[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Origins of row `i` restricted to `cols`, in that order.
    pub fn row_subset(&self, i: usize, cols: &[usize]) -> Vec<CellOrigin> {
        cols.iter().map(|&j| self.get(i, j)).collect()
    }

    pub fn fabricated_count(&self) -> usize {
        self.origin.iter().filter(|o| o.is_fabricated()).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut origin = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            origin.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            origin,
        }
    }

    /// Sidecar CSV with the dataset's header and one letter per cell.
    pub fn to_csv_string(&self, header: &[String]) -> String {
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.n_rows {
            let line: Vec<String> = self.row(i).iter().map(|o| o.code().to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses a sidecar written by [`to_csv_string`](Self::to_csv_string).
    /// `I` cells come back as central imputations since the letter does not
    /// carry the strategy.
    pub fn parse_csv(text: &str, header: &[String]) -> Result<Self, ProvenanceParseError> {
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
        if head.len() != header.len() || head.iter().zip(header).any(|(a, b)| a != b) {
            return Err(ProvenanceParseError::Header);
        }
        let n_cols = header.len();
        let mut origin = Vec::new();
        let mut n_rows = 0;
        for (r, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n_cols {
                return Err(ProvenanceParseError::Arity {
                    row: r + 1,
                    expected: n_cols,
                    found: fields.len(),
                });
            }
            for f in fields {
                origin.push(match f {
                    "O" => CellOrigin::Observed,
                    "I" => CellOrigin::Imputed(StrategyId::Central),
                    "N" => CellOrigin::Indicator,
                    other => {
                        return Err(ProvenanceParseError::Code {
                            row: r + 1,
                            code: other.to_string(),
                        })
                    }
                });
            }
            n_rows += 1;
        }
        Ok(Self {
            n_rows,
            n_cols,
            origin,
        })
    }
}
