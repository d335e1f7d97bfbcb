//! Command-line front end: `simulate`, `impute`, `train`, `explain` and
//! `evaluate`, all driven by one TOML config.
//!
//! Exit codes: 0 success, 2 config or input error, 3 strategy failure,
//! 4 artifact mismatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_csv, ColumnStats, Dataset, DatasetError};
use crate::explain::{LimeParams, DEFAULT_TOP_K, MAX_EXACT_FEATURES};
use crate::harness::{
    derive_seed, explain_row, observed_feature_means, run_strategy_comparison, DataSource, ExperimentConfig,
    ExplainContext, ExplainerKind,
};
use crate::impute::{impute, ImputationStrategy, ImputedDataset, ProvenanceMask};
use crate::model::{fit_model, Model, ModelFamily, Predictor, TrainParams};
use crate::sim::{apply_missingness, synth_generate, GroupSpec, MissingnessSpec, SynthSpec};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STRATEGY: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}:{line}: {key}: {message}")]
    Config {
        path: String,
        line: usize,
        key: String,
        message: String,
    },
    #[error("strategy failed: {0}")]
    Strategy(String),
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Config { .. } => EXIT_INPUT,
            CliError::Strategy(_) => EXIT_STRATEGY,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "impute-xai", version, about = "Imputation strategies and post-hoc explanations on tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate synthetic data and mask it: complete.csv, masked.csv, mask.csv.
    Simulate,
    /// Impute `paths.input` with the first strategy: imputed.csv, provenance.csv, trace.txt.
    Impute,
    /// Fit the first model family on `paths.input`: model.json.
    Train,
    /// Explain row `explain.row` of `paths.input` with `paths.model`.
    Explain,
    /// Strategy comparison: report.csv, report.txt.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_rows: usize,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub feature_correlation: f64,
    #[serde(default)]
    pub group: Option<GroupSpec>,
}

impl SynthSection {
    fn to_spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n_rows: self.n_rows,
            coefficients: self.coefficients.clone(),
            intercept: self.intercept,
            noise_std: self.noise_std,
            feature_correlation: self.feature_correlation,
            group: self.group.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub provenance: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_missing_token")]
    pub missing_token: String,
}

fn default_target() -> String {
    crate::sim::TARGET_NAME.to_string()
}

fn default_missing_token() -> String {
    String::new()
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            input: None,
            provenance: None,
            model: None,
            target: default_target(),
            missing_token: default_missing_token(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_drop_threshold")]
    pub drop_threshold: Option<f64>,
    #[serde(default)]
    pub explain_rows: usize,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_drop_threshold() -> Option<f64> {
    Some(0.5)
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            test_fraction: default_test_fraction(),
            drop_threshold: default_drop_threshold(),
            explain_rows: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    #[serde(default)]
    pub row: usize,
}

fn default_models() -> Vec<ModelFamily> {
    vec![ModelFamily::Boosted]
}

fn default_explainer() -> ExplainerKind {
    ExplainerKind::Shapley
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub missingness: Option<MissingnessSpec>,
    #[serde(default)]
    pub strategies: Vec<ImputationStrategy>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelFamily>,
    #[serde(default = "default_explainer")]
    pub explainer: ExplainerKind,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub lime: LimeParams,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub explain: ExplainSection,
}

/// 1-based line of `key` inside `[section]` (or a dotted/inline form of
/// it), falling back to the section header, then to line 1.
fn locate(source: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = None;
    let key_at = |line: &str| {
        line.match_indices(key).any(|(pos, _)| {
            let before = line[..pos].chars().last();
            let after = line[pos + key.len()..].trim_start();
            !before.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') && after.starts_with('=')
        })
    };
    for (n, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header_line.is_none() {
                header_line = Some(n + 1);
            }
            continue;
        }
        let in_section = current == section || (section.is_empty() && current.is_empty());
        let dotted_root = current.is_empty() && line.starts_with(section) && !section.is_empty();
        if (in_section || dotted_root) && !key.is_empty() && key_at(line) {
            return n + 1;
        }
        if current.is_empty() && !section.is_empty() && line.starts_with(section) && line[section.len()..].trim_start().starts_with('=') {
            header_line.get_or_insert(n + 1);
        }
    }
    header_line.unwrap_or(1)
}

/// First token of a validation message when it names a field.
fn leading_key(message: &str) -> Option<&str> {
    let detail = message.rsplit(": ").next().unwrap_or(message);
    let token = detail.split_whitespace().next()?;
    token
        .chars()
        .all(|c| c.is_ascii_lowercase() || c == '_')
        .then_some(token)
        .filter(|t| t.contains('_') || matches!(*t, "tol" | "trim" | "rate" | "driver" | "threshold"))
}

pub fn parse_config(source: &str, path: &Path) -> Result<CliConfig, CliError> {
    let display = path.display().to_string();
    let config: CliConfig = toml::from_str(source).map_err(|e| {
        let line = e
            .span()
            .map(|s| source[..s.start.min(source.len())].lines().count().max(1))
            .unwrap_or(1);
        let line = match e.span() {
            // a span starting on a line break belongs to the next line
            Some(s) if source[..s.start.min(source.len())].ends_with('\n') => line + 1,
            _ => line,
        };
        CliError::Config {
            path: display.clone(),
            line,
            key: "config".into(),
            message: e.message().trim().to_string(),
        }
    })?;
    let fail = |section: &str, key: &str, message: String| CliError::Config {
        path: display.clone(),
        line: locate(source, section, key),
        key: if section.is_empty() {
            key.to_string()
        } else if key.is_empty() {
            section.to_string()
        } else {
            format!("{section}.{key}")
        },
        message,
    };
    if config.schema_version != SCHEMA_VERSION {
        return Err(fail(
            "",
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", config.schema_version),
        ));
    }
    if let Some(s) = &config.synth {
        if let Err(crate::sim::SimError::Invalid { field, reason }) = s.to_spec(config.seed).validate() {
            let leaf = field.rsplit('.').next().unwrap_or(&field).to_string();
            let section = if field.starts_with("group") { "synth.group" } else { "synth" };
            return Err(fail(section, &leaf, format!("{field}: {reason}")));
        }
    }
    if let Some(m) = &config.missingness {
        if let Err(e) = m.validate() {
            let (key, message) = match e {
                crate::sim::SimError::Invalid { field, reason } => (field, reason),
                other => (String::new(), other.to_string()),
            };
            let line = locate(source, "missingness.mechanism", &key);
            let line = if line == 1 { locate(source, "missingness", &key) } else { line };
            return Err(CliError::Config {
                path: display,
                line,
                key: format!("missingness.mechanism.{key}"),
                message,
            });
        }
    }
    for (i, s) in config.strategies.iter().enumerate() {
        if let Err(e) = s.validate() {
            let message = e.to_string();
            let key = leading_key(&message).unwrap_or("").to_string();
            let mut err = fail("strategies", &key, message);
            if let CliError::Config { key: k, .. } = &mut err {
                *k = format!("strategies[{i}].{key}");
            }
            return Err(err);
        }
    }
    if config.models.is_empty() {
        return Err(fail("", "models", "at least one model family is required".into()));
    }
    if let Err(e) = config.train.validate() {
        let message = e.to_string();
        let key = leading_key(&message).unwrap_or("").to_string();
        return Err(fail("train", &key, message));
    }
    if config.top_k < 1 {
        return Err(fail("", "top_k", "must be >= 1".into()));
    }
    let ev = &config.evaluate;
    if !(ev.test_fraction > 0.0 && ev.test_fraction < 1.0) {
        return Err(fail("evaluate", "test_fraction", format!("{} is outside (0, 1)", ev.test_fraction)));
    }
    if let Some(t) = ev.drop_threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(fail("evaluate", "drop_threshold", format!("{t} is outside (0, 1]")));
        }
    }
    if !(config.lime.perturbation_std_scale > 0.0) {
        return Err(fail("lime", "perturbation_std_scale", "must be > 0".into()));
    }
    if config.lime.kernel_width.is_some_and(|w| !(w > 0.0)) {
        return Err(fail("lime", "kernel_width", "must be > 0".into()));
    }
    Ok(config)
}

/// The model file written by `train` and read by `explain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub target: String,
    pub feature_names: Vec<String>,
    /// Feature means over observed training cells.
    pub baseline: Vec<f64>,
    pub feature_stats: Vec<ColumnStats>,
    pub model: Model,
}

struct Context {
    config: CliConfig,
    base_dir: PathBuf,
    out: PathBuf,
}

impl Context {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn required_path(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = value
            .as_ref()
            .ok_or_else(|| CliError::Input(format!("paths.{key} is required for this command")))?;
        let p = self.resolve(p);
        if !p.exists() {
            return Err(CliError::Input(format!("paths.{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn load_input(&self) -> Result<Dataset, CliError> {
        let p = self.required_path("input", &self.config.paths.input)?;
        Ok(load_csv(&p, &self.config.paths.target, &self.config.paths.missing_token)?)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.out.join(name);
        fs::write(&p, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }
}

fn mask_csv(ds: &Dataset) -> String {
    let mut out = ds.columns().iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..ds.n_rows() {
        let row: Vec<&str> = (0..ds.n_cols()).map(|j| if ds.is_missing(i, j) { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cmd_simulate(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.config;
    let synth = c
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Input("simulate needs a [synth] section".into()))?;
    let complete = synth_generate(&synth.to_spec(c.seed)).map_err(|e| CliError::Input(e.to_string()))?;
    let masked = match &c.missingness {
        Some(spec) => {
            apply_missingness(&complete, spec, derive_seed(c.seed, "mask"))
                .map_err(|e| CliError::Input(e.to_string()))?
                .0
        }
        None => complete.clone(),
    };
    let token = &c.paths.missing_token;
    ctx.write("complete.csv", &complete.to_csv_string(token))?;
    ctx.write("masked.csv", &masked.to_csv_string(token))?;
    ctx.write("mask.csv", &mask_csv(&masked))?;
    let missing: usize = (0..masked.n_cols()).map(|j| masked.missing_count(j)).sum();
    Ok(format!(
        "simulated {} rows x {} columns, {} cells masked\n",
        masked.n_rows(),
        masked.n_cols(),
        missing
    ))
}

fn cmd_impute(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.config;
    let strategy = c
        .strategies
        .first()
        .ok_or_else(|| CliError::Input("impute needs at least one entry in strategies".into()))?;
    let input = ctx.load_input()?;
    let result = impute(&input, strategy).map_err(|e| CliError::Strategy(format!("{}: {e}", strategy.label())))?;
    let trace = match &result.trace {
        Some(t) => t.to_text(),
        None => format!("{}: single pass\n", strategy.label()),
    };
    let out_names: Vec<String> = result.data.columns().iter().map(|col| col.name.clone()).collect();
    let files = [
        ("imputed.csv", result.data.to_csv_string(&c.paths.missing_token)),
        ("provenance.csv", result.provenance.to_csv_string(&out_names)),
        ("trace.txt", trace),
    ];
    let mut written = Vec::new();
    for (name, body) in &files {
        match ctx.write(name, body) {
            Ok(p) => written.push(p),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
        }
    }
    Ok(format!(
        "{}: {} rows, {} cells imputed\n",
        strategy.label(),
        result.data.n_rows(),
        result.provenance.fabricated_count()
    ))
}

fn load_provenance(ctx: &Context, data: &Dataset) -> Result<ProvenanceMask, CliError> {
    let names: Vec<String> = data.columns().iter().map(|c| c.name.clone()).collect();
    match &ctx.config.paths.provenance {
        Some(_) => {
            let p = ctx.required_path("provenance", &ctx.config.paths.provenance)?;
            let text = fs::read_to_string(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let mask = ProvenanceMask::parse_csv(&text, &names).map_err(|e| CliError::Mismatch(e.to_string()))?;
            if mask.n_rows() != data.n_rows() {
                return Err(CliError::Mismatch(format!(
                    "provenance has {} rows, input has {}",
                    mask.n_rows(),
                    data.n_rows()
                )));
            }
            Ok(mask)
        }
        None => Ok(ProvenanceMask::all_observed(data.n_rows(), data.n_cols())),
    }
}

fn cmd_train(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.config;
    let family = c.models[0];
    let data = ctx.load_input()?;
    let provenance = load_provenance(ctx, &data)?;
    let model = fit_model(family, &data, &c.train).map_err(|e| CliError::Input(e.to_string()))?;
    let imputed = ImputedDataset {
        data,
        provenance,
        strategy: ImputationStrategy::CompleteCase,
        trace: None,
    };
    let stats = ExplainContext::from_training(&imputed).stats;
    let artifact = ModelArtifact {
        schema_version: SCHEMA_VERSION,
        target: c.paths.target.clone(),
        feature_names: imputed.data.feature_names(),
        baseline: observed_feature_means(&imputed.data, &imputed.provenance),
        feature_stats: stats,
        model,
    };
    let json = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Input(e.to_string()))?;
    ctx.write("model.json", &(json + "\n"))?;
    Ok(format!(
        "trained {} on {} rows, {} features\n",
        family.name(),
        imputed.data.n_rows(),
        artifact.feature_names.len()
    ))
}

fn cmd_explain(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.config;
    let model_path = ctx.required_path("model", &c.paths.model)?;
    let text = fs::read_to_string(&model_path).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let artifact: ModelArtifact =
        serde_json::from_str(&text).map_err(|e| CliError::Mismatch(format!("{}: {e}", model_path.display())))?;
    let n = artifact.feature_names.len();
    if artifact.model.n_features() != n || artifact.baseline.len() != n || artifact.feature_stats.len() != n {
        return Err(CliError::Mismatch("model file is internally inconsistent".into()));
    }
    let data = ctx.load_input()?;
    if data.feature_names() != artifact.feature_names {
        return Err(CliError::Mismatch(format!(
            "input features [{}] do not match model features [{}]",
            data.feature_names().join(", "),
            artifact.feature_names.join(", ")
        )));
    }
    let provenance = load_provenance(ctx, &data)?;
    let row = c.explain.row;
    if row >= data.n_rows() {
        return Err(CliError::Input(format!(
            "explain.row {row} is out of range for {} rows",
            data.n_rows()
        )));
    }
    if c.explainer == ExplainerKind::Shapley && n > MAX_EXACT_FEATURES {
        return Err(CliError::Input(format!("exact Shapley supports at most {MAX_EXACT_FEATURES} features")));
    }
    let test = ImputedDataset {
        data,
        provenance,
        strategy: ImputationStrategy::CompleteCase,
        trace: None,
    };
    let ectx = ExplainContext {
        names: artifact.feature_names.clone(),
        baseline: artifact.baseline.clone(),
        stats: artifact.feature_stats.clone(),
    };
    let expl = explain_row(c.explainer, &artifact.model, &ectx, &test, row, &c.lime, c.top_k)
        .map_err(|e| CliError::Input(e.to_string()))?;
    ctx.write("explanation.csv", &expl.to_csv())?;
    let text = expl.to_text();
    ctx.write("explanation.txt", &text)?;
    Ok(text)
}

fn cmd_evaluate(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.config;
    if c.strategies.is_empty() {
        return Err(CliError::Input("evaluate needs at least one entry in strategies".into()));
    }
    let data = match (&c.synth, &c.paths.input) {
        (Some(s), _) => DataSource::Synth(s.to_spec(c.seed)),
        (None, Some(_)) => DataSource::Csv {
            path: ctx.required_path("input", &c.paths.input)?,
            target: c.paths.target.clone(),
            missing_token: c.paths.missing_token.clone(),
        },
        (None, None) => return Err(CliError::Input("evaluate needs [synth] or paths.input".into())),
    };
    let config = ExperimentConfig {
        data,
        missingness: c.missingness.clone(),
        strategies: c.strategies.clone(),
        models: c.models.clone(),
        explainer: c.explainer,
        train: c.train,
        lime: c.lime,
        top_k: c.top_k,
        seed: c.seed,
        test_fraction: c.evaluate.test_fraction,
        drop_threshold: c.evaluate.drop_threshold,
        explain_rows: c.evaluate.explain_rows,
    };
    let report = run_strategy_comparison(&config).map_err(|e| CliError::Input(e.to_string()))?;
    ctx.write("report.csv", &report.to_csv())?;
    let text = report.to_text();
    ctx.write("report.txt", &text)?;
    if let Some(f) = report.failed().next() {
        print!("{text}");
        return Err(CliError::Strategy(format!(
            "{} ({}): {}",
            f.strategy,
            f.model.name(),
            f.outcome.as_ref().err().map(String::as_str).unwrap_or("")
        )));
    }
    Ok(text)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config is required".into()))?;
    let source = fs::read_to_string(config_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = parse_config(&source, config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = Context {
        config,
        base_dir: config_path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Impute => cmd_impute(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Explain => cmd_explain(&ctx),
        Command::Evaluate => cmd_evaluate(&ctx),
    }
}

/// Parses arguments, runs one subcommand, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(stdout) => {
            print!("{stdout}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
