//! Regressors consumed by the explainers: ordinary least squares, a CART
//! regression tree with learned default directions for missing values, and a
//! gradient-boosted ensemble of such trees.

mod boosted;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};

pub use boosted::{fit_boosted, BoostedEnsemble};
pub use linear::{fit_linear, LinearModel};
pub use tree::{fit_tree, Direction, RegressionTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("row has {found} features, model expects {expected}")]
    Arity { expected: usize, found: usize },
    #[error("linear model cannot score a missing value in feature {0}")]
    MissingInput(usize),
    #[error("feature '{0}' has missing cells; impute before fitting a linear model")]
    MissingFeature(String),
    #[error("target has missing cells")]
    MissingTarget,
    #[error("design matrix is rank deficient at '{0}'")]
    RankDeficient(String),
    #[error("need at least {needed} rows, have {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Dataset(String),
}

impl From<DatasetError> for ModelError {
    fn from(e: DatasetError) -> Self {
        ModelError::Dataset(e.to_string())
    }
}

/// Anything that maps a feature row, possibly with missing cells, to a
/// real-valued prediction.
pub trait Predictor {
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError>;

    fn check_arity(&self, row: &[Option<f64>]) -> Result<(), ModelError> {
        if row.len() == self.n_features() {
            Ok(())
        } else {
            Err(ModelError::Arity {
                expected: self.n_features(),
                found: row.len(),
            })
        }
    }
}

/// Adapts a plain function over complete rows.
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnPredictor<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError> {
        self.check_arity(row)?;
        let mut dense = Vec::with_capacity(row.len());
        for (j, v) in row.iter().enumerate() {
            dense.push(v.ok_or(ModelError::MissingInput(j))?);
        }
        Ok((self.f)(&dense))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    #[serde(default = "TrainParams::default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "TrainParams::default_min_leaf_rows")]
    pub min_leaf_rows: usize,
    #[serde(default = "TrainParams::default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "TrainParams::default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrainParams {
    fn default_max_depth() -> usize {
        4
    }
    fn default_min_leaf_rows() -> usize {
        5
    }
    fn default_n_trees() -> usize {
        100
    }
    fn default_learning_rate() -> f64 {
        0.1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth < 1 {
            return Err(ModelError::InvalidParams("max_depth must be >= 1".into()));
        }
        if self.min_leaf_rows < 1 {
            return Err(ModelError::InvalidParams("min_leaf_rows must be >= 1".into()));
        }
        if self.n_trees < 1 {
            return Err(ModelError::InvalidParams("n_trees must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidParams("learning_rate must be in (0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            max_depth: Self::default_max_depth(),
            min_leaf_rows: Self::default_min_leaf_rows(),
            n_trees: Self::default_n_trees(),
            learning_rate: Self::default_learning_rate(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Linear,
    Tree,
    Boosted,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Tree => "tree",
            ModelFamily::Boosted => "boosted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Tree(RegressionTree),
    Boosted(BoostedEnsemble),
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Linear(_) => ModelFamily::Linear,
            Model::Tree(_) => ModelFamily::Tree,
            Model::Boosted(_) => ModelFamily::Boosted,
        }
    }
}

impl Predictor for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Tree(m) => m.n_features(),
            Model::Boosted(m) => m.n_features(),
        }
    }

    fn predict_row(&self, row: &[Option<f64>]) -> Result<f64, ModelError> {
        match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Tree(m) => m.predict_row(row),
            Model::Boosted(m) => m.predict_row(row),
        }
    }
}

pub fn fit_model(family: ModelFamily, ds: &Dataset, params: &TrainParams) -> Result<Model, ModelError> {
    Ok(match family {
        ModelFamily::Linear => Model::Linear(fit_linear(ds)?),
        ModelFamily::Tree => Model::Tree(fit_tree(ds, params)?),
        ModelFamily::Boosted => Model::Boosted(fit_boosted(ds, params)?),
    })
}

/// Predicts every row of `ds` from its feature columns.
pub fn predict_dataset<P: Predictor + ?Sized>(model: &P, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
    (0..ds.n_rows())
        .map(|i| model.predict_row(&ds.feature_row(i)))
        .collect()
}

/// Feature cells and targets pulled out of a dataset for fitting.
pub(crate) struct TrainingData {
    pub n_rows: usize,
    pub n_features: usize,
    /// Row-major feature cells.
    pub cells: Vec<Option<f64>>,
    pub targets: Vec<f64>,
    pub names: Vec<String>,
}

impl TrainingData {
    pub fn from_dataset(ds: &Dataset) -> Result<Self, ModelError> {
        let t = ds.target_index()?;
        let features = ds.feature_indices();
        let mut cells = Vec::with_capacity(ds.n_rows() * features.len());
        let mut targets = Vec::with_capacity(ds.n_rows());
        for i in 0..ds.n_rows() {
            targets.push(ds.get(i, t).ok_or(ModelError::MissingTarget)?);
            cells.extend(features.iter().map(|&j| ds.get(i, j)));
        }
        Ok(Self {
            n_rows: ds.n_rows(),
            n_features: features.len(),
            cells,
            targets,
            names: ds.feature_names(),
        })
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.cells[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn get(&self, i: usize, f: usize) -> Option<f64> {
        self.cells[i * self.n_features + f]
    }
}
