use panelspec::cli::run;
use serde_json::Value;
use std::process::Command;

fn path(rel: &str) -> String {
    format!("{}/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["panelspec"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json_of(args: &[&str]) -> Value {
    let (code, out, err) = invoke(args);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path(&format!("schemas/{name}"))).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn data_args(file: &str) -> Vec<String> {
    let (u, t) = if file.starts_with("synthetic") { ("id", "year") } else { ("unit", "time") };
    ["--data", &path(&format!("fixtures/{file}")), "--unit", u, "--time", t, "--y", "y", "--x", "x1,x2"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn with(file: &str, head: &[&str], tail: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    v.extend(data_args(file));
    v.extend(tail.iter().map(|s| s.to_string()));
    v
}

fn json_args(args: &[String]) -> Value {
    json_of(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn fit_fe_matches_oracle() {
    let doc = json_args(&with("synthetic_panel.csv", &["fit"], &["--method", "fe"]));
    assert_schema("fit.schema.json", &doc);
    let oracle: Value =
        serde_json::from_str(&std::fs::read_to_string(path("fixtures/synthetic_panel_expected.json")).unwrap()).unwrap();
    for (b, o) in floats(&doc["beta"]).iter().zip(floats(&oracle["fe_beta"])) {
        assert!((b - o).abs() < 1e-10);
    }
    assert_eq!(doc["regressors"], serde_json::json!(["x1", "x2"]));
    assert_eq!(doc["n_units"], 40);
}

#[test]
fn every_fit_method_validates() {
    for method in ["pooled", "fe", "re", "wfe"] {
        let doc = json_args(&with("synthetic_panel.csv", &["fit"], &["--method", method]));
        assert_schema("fit.schema.json", &doc);
        assert_eq!(doc["method"], method);
    }
}

#[test]
fn weighted_fit_on_clean_panel() {
    let doc = json_args(&with("clean_panel.csv", &["fit"], &["--method", "wfe"]));
    assert_eq!(doc["converged"], true);
    let weights: Vec<f64> = doc["weights"].as_array().unwrap().iter().flat_map(floats).collect();
    assert_eq!(weights.len(), 120);
    assert!(weights.iter().all(|&w| w > 0.5));
}

#[test]
fn fit_csv_columns() {
    let args = with("synthetic_panel.csv", &["fit"], &["--method", "re", "--format", "csv"]);
    let (code, out, _) = invoke(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "term,estimate,std_error");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("x1,"));
}

#[test]
fn missing_regressors_is_usage_error() {
    let (code, _, err) = invoke(&["fit", "--data", "x.csv", "--unit", "u", "--time", "t", "--y", "y", "--method", "fe"]);
    assert_eq!(code, 2);
    assert!(err.contains("--x"));
    let (code, _, _) = invoke(&["fit", "--data", "/no/such.csv", "--unit", "u", "--time", "t", "--y", "y", "--x", "a", "--method", "fe"]);
    assert_eq!(code, 1);
}

#[test]
fn test_both_reports_two_records() {
    let doc = json_args(&with("synthetic_panel.csv", &["test"], &["--which", "both"]));
    assert_schema("test.schema.json", &doc);
    let tests = doc["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 2);
    assert_eq!(tests[0]["test"], "hausman");
    assert_eq!(tests[1]["test"], "weighted");
    let (ph, pw) = (tests[0]["p_value"].as_f64().unwrap(), tests[1]["p_value"].as_f64().unwrap());
    assert!(pw < ph, "weighted p {pw} vs classical p {ph}");
    assert_eq!(doc["table"]["p_h"], tests[0]["p_value"]);

    let one = json_args(&with("synthetic_panel.csv", &["test"], &["--which", "hausman"]));
    assert_schema("test.schema.json", &one);
    assert_eq!(one["tests"].as_array().unwrap().len(), 1);
}

#[test]
fn degenerate_comparison_gives_zero() {
    let doc = json_args(&with("clean_panel.csv", &["test"], &["--force-theta", "1", "--raf", "identity"]));
    for rec in doc["tests"].as_array().unwrap() {
        assert!(rec["statistic"].as_f64().unwrap() < 1e-10);
        assert!((rec["p_value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn test_csv_columns() {
    let args = with("synthetic_panel.csv", &["test"], &["--format", "csv"]);
    let (code, out, _) = invoke(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "test,statistic,df,p_value,repaired");
    assert_eq!(lines.len(), 3);
}

#[test]
fn figure_one_csv_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1.csv");
    let out_s = out.to_str().unwrap();
    let (code, _, err) = invoke(&["simulate", "--paper-figure", "1", "--s", "200", "--seed", "4", "--out", out_s]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    // six sizes, four levels, two tests
    assert_eq!(text.lines().count(), 1 + 48);
    assert_eq!(text.lines().next().unwrap(), panelspec::mcstudy::CSV_COLUMNS.join(","));
}

#[test]
fn simulate_json_validates_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let common = ["simulate", "--hypothesis", "alt", "--n", "30", "--t", "3", "--contamination", "random", "--m", "6", "--s", "40", "--seed", "12"];
    for target in [&a, &b] {
        let mut args = common.to_vec();
        args.extend(["--out", target.to_str().unwrap()]);
        assert_eq!(invoke(&args).0, 0);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let doc: Value = serde_json::from_slice(&bytes).unwrap();
    assert_schema("simulate.schema.json", &doc);
}

#[test]
fn too_many_outliers_exit_code() {
    let (code, _, err) = invoke(&["simulate", "--n", "100", "--t", "3", "--contamination", "random", "--m", "301", "--s", "5"]);
    assert_eq!(code, 1);
    assert!(err.to_lowercase().contains("outlier"), "{err}");
}

#[test]
fn binary_respects_thread_variable() {
    let bin = env!("CARGO_BIN_EXE_panelspec");
    let args = ["simulate", "--n", "20", "--t", "3", "--s", "30", "--seed", "2"];
    let runs: Vec<Vec<u8>> = ["1", "4", "0"]
        .iter()
        .map(|threads| {
            let o = Command::new(bin).args(args).env("PANELSPEC_THREADS", threads).output().unwrap();
            assert!(o.status.success());
            o.stdout
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let bad = Command::new(bin).args(args).env("PANELSPEC_THREADS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn generate_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("panel.csv");
    let out_s = out.to_str().unwrap();
    assert_eq!(invoke(&["generate", "--n", "12", "--t", "3", "--contamination", "concentrated", "--m", "4", "--out", out_s]).0, 0);
    let doc = json_of(&["fit", "--data", out_s, "--unit", "unit", "--time", "time", "--y", "y", "--x", "x1,x2", "--method", "fe"]);
    assert_eq!(doc["n_units"], 12);
    assert_eq!(doc["n_periods"], 3);
}
