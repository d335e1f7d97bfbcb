//! Post-hoc per-prediction attributions, each stamped with whether the
//! explained feature value was observed or fabricated by imputation.

mod lime;
mod shapley;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::format_value;
use crate::impute::CellOrigin;
use crate::model::ModelError;

pub use lime::{lime_local, LimeParams};
pub use shapley::{shapley_exact, MAX_EXACT_FEATURES};

/// Attributions inspected for the imputation warning unless overridden.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("exact Shapley enumeration supports at most {max} features, got {found}")]
    TooManyFeatures { max: usize, found: usize },
    #[error("{what} has {found} entries, expected {expected}")]
    Arity {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("feature {0} is missing in the explained row")]
    MissingValue(usize),
    #[error("local surrogate design is singular; increase n_samples")]
    SingularSurrogate,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMethod {
    Shapley,
    Lime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    pub feature_index: usize,
    /// The value the model consumed; `None` when the model routed a missing
    /// cell natively.
    pub value_used: Option<f64>,
    pub importance: f64,
    pub imputed: bool,
}

/// Raised when a fabricated value sits among the most important factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationWarning {
    pub top_k: usize,
    pub imputed_features: Vec<String>,
}

impl ImputationWarning {
    pub fn line(&self) -> String {
        format!(
            "WARNING: {} of the top {} factors use imputed values: {}",
            self.imputed_features.len(),
            self.top_k,
            self.imputed_features.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: ExplainMethod,
    /// Sorted by descending absolute importance, ties by feature index.
    pub attributions: Vec<Attribution>,
    /// Model output at the baseline (Shapley) or the surrogate's local
    /// intercept (LIME).
    pub baseline_value: f64,
    pub model_output: f64,
    pub warning: Option<ImputationWarning>,
}

impl Explanation {
    pub(crate) fn new(
        method: ExplainMethod,
        mut attributions: Vec<Attribution>,
        baseline_value: f64,
        model_output: f64,
    ) -> Self {
        attributions.sort_by(|a, b| {
            b.importance
                .abs()
                .total_cmp(&a.importance.abs())
                .then(a.feature_index.cmp(&b.feature_index))
        });
        Self {
            method,
            attributions,
            baseline_value,
            model_output,
            warning: None,
        }
    }

    pub fn importance_sum(&self) -> f64 {
        // summed in feature order so the value is independent of ranking
        let mut by_index: Vec<&Attribution> = self.attributions.iter().collect();
        by_index.sort_by_key(|a| a.feature_index);
        by_index.iter().map(|a| a.importance).sum()
    }

    /// Importances indexed by feature position.
    pub fn importances_by_feature(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.attributions.len()];
        for a in &self.attributions {
            out[a.feature_index] = a.importance;
        }
        out
    }

    /// Four-column table (Feature, Value, Importance, Imputed), then a
    /// `# WARNING` comment line when the warning is set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Feature,Value,Importance,Imputed\n");
        for a in &self.attributions {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                a.feature,
                a.value_used.map(format_value).unwrap_or_default(),
                format_value(a.importance),
                u8::from(a.imputed)
            );
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "# {}", w.line());
        }
        out
    }

    /// Aligned plain-text rendering of [`to_csv`](Self::to_csv).
    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .attributions
            .iter()
            .map(|a| {
                [
                    a.feature.clone(),
                    a.value_used.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    format!("{:.4}", a.importance),
                    u8::from(a.imputed).to_string(),
                ]
            })
            .collect();
        let header = ["Feature", "Value", "Importance", "Imputed"];
        let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |cells: [&str; 4], out: &mut String| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            );
        };
        line(header, &mut out);
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3]], &mut out);
        }
        let _ = writeln!(
            out,
            "model output {:.4}, baseline {:.4}",
            self.model_output, self.baseline_value
        );
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "{}", w.line());
        }
        out
    }
}

/// Copies imputed flags from the explained row's provenance and sets the
/// warning iff one of the `top_k` highest-ranked attributions is imputed.
pub fn stamp_provenance(
    mut expl: Explanation,
    provenance: &[CellOrigin],
    top_k: usize,
) -> Result<Explanation, ExplainError> {
    if provenance.len() != expl.attributions.len() {
        return Err(ExplainError::Arity {
            what: "provenance",
            expected: expl.attributions.len(),
            found: provenance.len(),
        });
    }
    for a in &mut expl.attributions {
        a.imputed = provenance[a.feature_index].is_fabricated();
    }
    let flagged: Vec<String> = expl
        .attributions
        .iter()
        .take(top_k)
        .filter(|a| a.imputed)
        .map(|a| a.feature.clone())
        .collect();
    expl.warning = (!flagged.is_empty()).then_some(ImputationWarning {
        top_k,
        imputed_features: flagged,
    });
    Ok(expl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::StrategyId;

    /// Feature, value, importance and imputed flag of the published example.
    fn table_one() -> (Explanation, Vec<CellOrigin>) {
        let rows = [
            ("Readmits last year", 2.0, 0.67, false),
            ("Creatinine Level", 1.6, 0.54, false),
            ("Albumin Level", 2.4, 0.36, true),
            ("Avg. Cigarettes/week", 28.0, 0.18, false),
            ("Systolic BP", 90.0, 0.17, true),
        ];
        let attributions = rows
            .iter()
            .enumerate()
            .map(|(i, (f, v, imp, _))| Attribution {
                feature: f.to_string(),
                feature_index: i,
                value_used: Some(*v),
                importance: *imp,
                imputed: false,
            })
            .collect();
        let prov = rows
            .iter()
            .map(|r| {
                if r.3 {
                    CellOrigin::Imputed(StrategyId::Central)
                } else {
                    CellOrigin::Observed
                }
            })
            .collect();
        (Explanation::new(ExplainMethod::Lime, attributions, 0.0, 1.92), prov)
    }

    #[test]
    fn imputed_rank_three_triggers_warning() {
        let (expl, prov) = table_one();
        let out = stamp_provenance(expl, &prov, 3).unwrap();
        let w = out.warning.expect("warning expected");
        assert_eq!(w.imputed_features, vec!["Albumin Level".to_string()]);
        let flags: Vec<bool> = out.attributions.iter().map(|a| a.imputed).collect();
        assert_eq!(flags, vec![false, false, true, false, true]);
    }

    #[test]
    fn observed_row_and_empty_window_never_warn() {
        let (expl, prov) = table_one();
        let clean = vec![CellOrigin::Observed; 5];
        assert!(stamp_provenance(expl.clone(), &clean, 5).unwrap().warning.is_none());
        assert!(stamp_provenance(expl.clone(), &prov, 0).unwrap().warning.is_none());
        assert!(stamp_provenance(expl, &prov[..4], 5).is_err());
    }

    #[test]
    fn table_rendering() {
        let (expl, prov) = table_one();
        let out = stamp_provenance(expl, &prov, 5).unwrap();
        let csv = out.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Feature,Value,Importance,Imputed");
        assert_eq!(lines[3], "Albumin Level,2.4,0.36,1");
        assert!(lines[6].starts_with("# WARNING: 2 of the top 5"));
        let text = out.to_text();
        assert!(text.contains("Albumin Level"));
        assert!(text.lines().last().unwrap().starts_with("WARNING"));
    }

    #[test]
    fn sorting_is_by_magnitude_then_index() {
        let attrs = [0.1, -0.5, 0.5, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &imp)| Attribution {
                feature: format!("f{i}"),
                feature_index: i,
                value_used: Some(0.0),
                importance: imp,
                imputed: false,
            })
            .collect();
        let e = Explanation::new(ExplainMethod::Shapley, attrs, 0.0, 0.0);
        let order: Vec<usize> = e.attributions.iter().map(|a| a.feature_index).collect();
        assert_eq!(order, vec![1, 2, 0, 3]);
        assert_eq!(e.importances_by_feature(), vec![0.1, -0.5, 0.5, 0.0]);
    }
}
