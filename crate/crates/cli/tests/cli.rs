use std::path::Path;
use std::process::{Command, Output};

fn richness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_richness"))
        .args(args)
        .env_remove("RICHNESS_CONFIG")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn geometric_text() -> String {
    (1..=10).map(|j| format!("{},{}\n", j, 1u64 << (10 - j))).collect()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn estimate_geometric_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "geo.csv", &geometric_text());
    let out = richness(&["--format", "json", "estimate", &input]);
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(record["c_hat_rounded"], 2047);
    assert_eq!(record["estimate"]["code"], 2);
    assert!((record["estimate"]["c_hat"].as_f64().unwrap() - 2047.0).abs() < 1e-6);
    assert!((record["estimate"]["se"].as_f64().unwrap() - 47.06).abs() < 0.01);
}

#[test]
fn malformed_input_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "1,5\nx,2\n");
    let out = richness(&["estimate", &input]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_file_exits_one() {
    let out = richness(&["estimate", "/nonexistent/table.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn short_table_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "short.csv", "1,20\n2,10\n4,1\n");
    let out = richness(&["estimate", &input]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient structure"));
}

#[test]
fn compare_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "geo.csv", &geometric_text());
    let out = richness(&["compare", &input]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(methods, ["breakaway", "uWLRM", "tWLRM", "Chao-Bunge", "CLB"]);
    assert!(text.lines().any(|l| l.starts_with("CLB") && l.contains("1535 (")));
}

#[test]
fn compare_marks_inestimable_cells() {
    // f1 * sum j^2 f_j = 65400 exceeds n^2 = 50625, so theta < 0
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "sing.csv", "1,200\n2,3\n3,2\n4,1\n9,1\n");
    let out = richness(&["compare", &input]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let row = text.lines().find(|l| l.starts_with("Chao-Bunge")).unwrap();
    assert_eq!(row.split_whitespace().nth(1), Some("*"), "{text}");
}

#[test]
fn compare_poisson_rows_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pois.csv", "1,720\n2,720\n3,480\n4,240\n5,96\n6,32\n");
    let out = richness(&["--format", "json", "compare", &input]);
    let record: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let c: Vec<f64> = (0..3).map(|i| record["rows"][i]["c_hat"].as_f64().unwrap()).collect();
    for v in &c {
        assert!((v - 2648.0).abs() < 0.5, "{c:?}");
    }
}

#[test]
fn ratio_plot_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "geo.csv", &geometric_text());
    let target = dir.path().join("plot.csv");
    let out = richness(&["ratio-plot", &input, "--output", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(target).unwrap();
    assert_eq!(csv.lines().next(), Some("j,observed,breakaway,uwlrm,twlrm"));
    assert!(csv.lines().nth(1).unwrap().starts_with("0,,0.5,"));
}

#[test]
fn ratio_plot_empty_inestimable_column() {
    // decreasing Katz ratios with a negative intercept
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "neg.csv", "1,1000\n2,100\n3,60\n4,50\n5,45\n");
    let out = richness(&["ratio-plot", &input]);
    assert_eq!(out.status.code(), Some(0));
    for line in stdout(&out).lines().skip(1) {
        assert_eq!(line.split(',').nth(3), Some(""), "{line}");
    }
}

#[test]
fn simulate_rejects_bad_prob() {
    let out = richness(&["simulate", "--c", "100", "--prob", "1.5", "--size", "2", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible() {
    let args = ["--format", "json", "simulate", "--c", "1000", "--prob", "0.9", "--size", "5", "--reps", "6", "--seed", "3"];
    let first = richness(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, richness(&args).stdout);
    let mut serial = args.to_vec();
    serial.push("--serial");
    assert_eq!(first.stdout, richness(&serial).stdout);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "geo.csv", &geometric_text());
    let cfg = write(dir.path(), "richness.toml", "format = \"json\"\n[procedure]\nladder_cap = [1, 1]\n");
    let out = Command::new(env!("CARGO_BIN_EXE_richness"))
        .args(["estimate", &input])
        .env("RICHNESS_CONFIG", &cfg)
        .output()
        .unwrap();
    let record: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(record["estimate"]["ladder"].as_array().unwrap().len(), 2);

    let out = richness(&["--config", &cfg, "--format", "table", "estimate", &input, "--ladder-cap", "2,1"]);
    let text = stdout(&out);
    assert!(text.contains("(2,1)") && !text.contains("(2,2)"), "{text}");

    let bad = write(dir.path(), "bad.toml", "[procedure]\nunknown = 3\n");
    assert_eq!(richness(&["--config", &bad, "estimate", &input]).status.code(), Some(1));
}

#[test]
fn fit_single_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "geo.csv", &geometric_text());
    let out = richness(&["--format", "json", "fit", &input, "--model", "1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(record["fits"].as_array().unwrap().len(), 1);
    assert_eq!(record["fits"][0]["b0"], 0.5);
    let out = richness(&["fit", &input, "--weights", "final"]);
    assert_eq!(out.status.code(), Some(0));
}
