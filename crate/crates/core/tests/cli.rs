use std::path::Path;
use std::process::{Command, Output};

use impute_xai::cli::ModelArtifact;
use impute_xai::explain::shapley_exact;
use impute_xai::impute::CellOrigin;
use impute_xai::model::Predictor;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impute-xai"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SIM: &str = r#"schema_version = 1
seed = 3

[synth]
n_rows = 200
coefficients = [2.0, 1.0, 0.5]
noise_std = 0.3

[missingness]
columns = ["x0", "x1"]
mechanism = { kind = "mcar", rate = RATE }
"#;

#[test]
fn zero_rate_leaves_data_untouched() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", &SIM.replace("RATE", "0.0"));
    let o = run(dir.path(), &["simulate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let complete = std::fs::read(dir.path().join("o/complete.csv")).unwrap();
    let masked = std::fs::read(dir.path().join("o/masked.csv")).unwrap();
    assert_eq!(complete, masked);
    let mask = std::fs::read_to_string(dir.path().join("o/mask.csv")).unwrap();
    assert!(mask.lines().skip(1).all(|l| l.split(',').all(|c| c == "0")));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", &SIM.replace("RATE", "0.3"));
    run(dir.path(), &["simulate", "--config", "c.toml", "--out", "a"]);
    run(dir.path(), &["simulate", "--config", "c.toml", "--out", "b", "--seed", "4"]);
    let a = std::fs::read(dir.path().join("a/masked.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/masked.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn invalid_values_name_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", &SIM.replace("RATE", "1.5"));
    let o = run(dir.path(), &["simulate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("c.toml:11:"), "{msg}");
    assert!(msg.contains("missingness.mechanism.rate"), "{msg}");

    let bad_train = format!("{}\n[train]\nn_trees = 10\nlearning_rate = 2.0\n", SIM.replace("RATE", "0.1"));
    write(dir.path(), "t.toml", &bad_train);
    let o = run(dir.path(), &["simulate", "--config", "t.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t.toml:15: train.learning_rate"), "{}", stderr(&o));
}

#[test]
fn strict_schema() {
    let dir = tempfile::tempdir().unwrap();
    let base = SIM.replace("RATE", "0.1");
    for (name, body) in [
        ("unknown.toml", base.replace("noise_std", "noise_sd")),
        ("noseed.toml", base.replace("seed = 3\n", "")),
        ("noversion.toml", base.replace("schema_version = 1\n", "")),
        ("version.toml", base.replace("schema_version = 1", "schema_version = 9")),
    ] {
        write(dir.path(), name, &body);
        let o = run(dir.path(), &["simulate", "--config", name, "--out", "o"]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(stderr(&o).contains(name), "{name}: {}", stderr(&o));
    }
    let o = run(dir.path(), &["simulate", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

/// `x`, `v = 2x` with gaps, and target `t`.
fn linear_law_csv() -> String {
    let mut s = String::from("x,v,t\n");
    for i in 0..50 {
        let x = i as f64 * 0.37 - 4.0;
        if i % 5 == 2 {
            s.push_str(&format!("{x},,{}\n", x + 1.0));
        } else {
            s.push_str(&format!("{x},{},{}\n", 2.0 * x, x + 1.0));
        }
    }
    s
}

#[test]
fn impute_writes_all_three_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", &linear_law_csv());
    write(
        dir.path(),
        "c.toml",
        "schema_version = 1\nseed = 0\nstrategies = [{ kind = \"mice\" }]\n[paths]\ninput = \"d.csv\"\ntarget = \"t\"\n",
    );
    let o = run(dir.path(), &["impute", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let imputed = impute_xai::dataset::load_csv(&dir.path().join("o/imputed.csv"), "t", "").unwrap();
    for i in 0..imputed.n_rows() {
        let x = imputed.get(i, 0).unwrap();
        assert!((imputed.get(i, 1).unwrap() - 2.0 * x).abs() < 1e-6);
    }
    let prov = std::fs::read_to_string(dir.path().join("o/provenance.csv")).unwrap();
    assert_eq!(prov.lines().next(), Some("x,v,t"));
    assert_eq!(prov.lines().filter(|l| l.contains('I')).count(), 10);
    let trace = std::fs::read_to_string(dir.path().join("o/trace.txt")).unwrap();
    assert!(trace.contains("converged: true"));
}

#[test]
fn fully_observed_provenance_is_all_observed() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,10\n");
    write(
        dir.path(),
        "c.toml",
        "schema_version = 1\nseed = 0\nstrategies = [{ kind = \"central\", measure = \"median\" }]\n[paths]\ninput = \"d.csv\"\n",
    );
    let o = run(dir.path(), &["impute", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let prov = std::fs::read_to_string(dir.path().join("o/provenance.csv")).unwrap();
    assert!(prov.lines().skip(1).all(|l| l == "O,O,O"));
}

#[test]
fn strategy_failure_exits_3_without_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", "a,b,y\n1,,3\n,5,6\n7,,10\n");
    write(
        dir.path(),
        "c.toml",
        "schema_version = 1\nseed = 0\nstrategies = [{ kind = \"complete-case\" }]\n[paths]\ninput = \"d.csv\"\n",
    );
    let o = run(dir.path(), &["impute", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    for f in ["imputed.csv", "provenance.csv", "trace.txt"] {
        assert!(!dir.path().join("o").join(f).exists());
    }
}

#[test]
fn missing_upstream_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "schema_version = 1\nseed = 0\nstrategies = [{ kind = \"indicator\" }]\n[paths]\ninput = \"absent.csv\"\nmodel = \"absent.json\"\n",
    );
    for cmd in ["impute", "train", "explain"] {
        let o = run(dir.path(), &[cmd, "--config", "c.toml", "--out", "o"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
}

const PIPELINE: &str = r#"schema_version = 1
seed = 21
strategies = [{ kind = "central", measure = "mean" }]
models = ["MODEL"]

[synth]
n_rows = 300
coefficients = [4.0, 2.0, 1.0, 0.5]
noise_std = 0.2

[missingness]
columns = ["x0"]
mechanism = { kind = "mcar", rate = 0.4 }

[paths]
input = "INPUT"
provenance = "o/provenance.csv"
model = "o/model.json"

[explain]
row = ROW
"#;

fn pipeline(dir: &Path, model: &str) {
    let cfg = |input: &str, row: usize| {
        PIPELINE
            .replace("MODEL", model)
            .replace("INPUT", input)
            .replace("ROW", &row.to_string())
    };
    write(dir, "sim.toml", &cfg("o/masked.csv", 0).replace("provenance = \"o/provenance.csv\"\n", ""));
    for (cmd, file) in [("simulate", "sim.toml"), ("impute", "sim.toml")] {
        let o = run(dir, &[cmd, "--config", file, "--out", "o"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    write(dir, "fit.toml", &cfg("o/imputed.csv", 0));
    let o = run(dir, &["train", "--config", "fit.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

/// First row whose x0 was imputed.
fn imputed_row(dir: &Path) -> usize {
    let prov = std::fs::read_to_string(dir.join("o/provenance.csv")).unwrap();
    prov.lines().skip(1).position(|l| l.starts_with('I')).unwrap()
}

#[test]
fn explain_warns_on_imputed_top_factor() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "linear");
    let row = imputed_row(dir.path());
    let cfg = PIPELINE
        .replace("MODEL", "linear")
        .replace("INPUT", "o/imputed.csv")
        .replace("ROW", &row.to_string());
    write(dir.path(), "x.toml", &cfg);
    let o = run(dir.path(), &["explain", "--config", "x.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("Feature"));
    assert!(text.contains("WARNING: 1 of the top 5 factors use imputed values: x0"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("o/explanation.csv")).unwrap();
    assert!(csv.starts_with("Feature,Value,Importance,Imputed\n"));
    assert!(csv.lines().any(|l| l.starts_with("x0,") && l.ends_with(",1")));
    assert!(csv.contains("# WARNING"));

    // an observed row explains without the warning
    let clean = (0..300).find(|&r| r != row && !prov_row_imputed(dir.path(), r)).unwrap();
    write(dir.path(), "y.toml", &cfg.replace(&format!("row = {row}"), &format!("row = {clean}")));
    let o = run(dir.path(), &["explain", "--config", "y.toml", "--out", "o"]);
    assert!(!stdout(&o).contains("WARNING"));
}

fn prov_row_imputed(dir: &Path, r: usize) -> bool {
    let prov = std::fs::read_to_string(dir.join("o/provenance.csv")).unwrap();
    prov.lines().nth(r + 1).unwrap().contains('I')
}

#[test]
fn reloaded_model_keeps_shapley_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "boosted");
    let cfg = PIPELINE
        .replace("MODEL", "boosted")
        .replace("INPUT", "o/imputed.csv")
        .replace("ROW", "7");
    write(dir.path(), "x.toml", &cfg);
    let o = run(dir.path(), &["explain", "--config", "x.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let artifact: ModelArtifact =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/model.json")).unwrap()).unwrap();
    let data = impute_xai::dataset::load_csv(&dir.path().join("o/imputed.csv"), "y", "").unwrap();
    let row = data.feature_row(7);
    let baseline: Vec<Option<f64>> = artifact.baseline.iter().map(|v| Some(*v)).collect();
    let gap = artifact.model.predict_row(&row).unwrap() - artifact.model.predict_row(&baseline).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("o/explanation.csv")).unwrap();
    let total: f64 = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - gap).abs() < 1e-6, "{total} vs {gap}");

    // the reload is exact: recomputing on the parsed model matches the file
    let again = shapley_exact(
        &artifact.model,
        &artifact.feature_names,
        &row,
        &artifact.baseline,
        &[CellOrigin::Observed; 4],
    )
    .unwrap();
    assert!((again.importance_sum() - total).abs() < 1e-9);

    // a retrain from the same inputs gives the same file
    let before = std::fs::read(dir.path().join("o/model.json")).unwrap();
    run(dir.path(), &["train", "--config", "x.toml", "--out", "o"]);
    assert_eq!(before, std::fs::read(dir.path().join("o/model.json")).unwrap());
}

#[test]
fn feature_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "linear");
    write(dir.path(), "other.csv", "a,b,y\n1,2,3\n4,5,6\n");
    let cfg = PIPELINE
        .replace("MODEL", "linear")
        .replace("INPUT", "other.csv")
        .replace("ROW", "0")
        .replace("provenance = \"o/provenance.csv\"\n", "");
    write(dir.path(), "x.toml", &cfg);
    let o = run(dir.path(), &["explain", "--config", "x.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    // provenance sidecar of the wrong shape
    write(dir.path(), "short.csv", "x0,x1,x2,x3,y\n1,2,3,4,5\n");
    let cfg = PIPELINE.replace("MODEL", "linear").replace("INPUT", "short.csv").replace("ROW", "0");
    write(dir.path(), "z.toml", &cfg);
    let o = run(dir.path(), &["explain", "--config", "z.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn evaluate_on_complete_data_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        r#"schema_version = 1
seed = 5
strategies = [{ kind = "complete-case" }, { kind = "mice" }, { kind = "indicator" }, { kind = "central", measure = "mean" }]
models = ["linear", "boosted"]

[synth]
n_rows = 400
coefficients = [1.0, -2.0, 0.5]
noise_std = 0.5
"#,
    );
    let o = run(dir.path(), &["evaluate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("o/report.csv")).unwrap();
    for family in ["linear", "boosted"] {
        let metrics: Vec<String> = csv
            .lines()
            .filter(|l| l.split(',').nth(1) == Some(family))
            .map(|l| l.split(',').skip(2).take(2).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(metrics.len(), 4);
        assert!(metrics.iter().all(|m| m == &metrics[0]), "{metrics:?}");
    }
    let text = stdout(&o);
    assert!(text.starts_with("Model"));
    assert!(text.contains("| MAE") || text.contains("MAE |"));
}

#[test]
fn evaluate_reports_failed_cells_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        r#"schema_version = 1
seed = 5
strategies = [{ kind = "central", measure = "mean" }, { kind = "central", measure = "median", cohort_key = "nope" }]

[synth]
n_rows = 200
coefficients = [1.0, 2.0]
noise_std = 0.5

[missingness]
columns = ["x0"]
mechanism = { kind = "mcar", rate = 0.2 }
"#,
    );
    let o = run(dir.path(), &["evaluate", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(3));
    let csv = std::fs::read_to_string(dir.path().join("o/report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",ok"));
    assert!(csv.contains("failed"));
}
