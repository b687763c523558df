use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clv_cli::ModelArtifact;
use clv_core::data::{parse_transaction_log, rfm_summary, write_summaries_csv, ColumnMapping, TimestampFormat};

fn clv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clv")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = clv(args);
    assert!(out.status.success(), "clv {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let j = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name} in {h:?}"));
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

/// Simulated Pareto/NBD cohort split into calibration and holdout.
struct Cohort {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Cohort {
    fn new(customers: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let n = customers.to_string();
        ok(&["simulate", "pareto_nbd", "--customers", &n, "--days", "365", "--acquisition-days", "60", "--seed", "5", "--out-dir", s(&root.join("sim"))]);
        ok(&[
            "split",
            s(&root.join("sim/transactions.csv")),
            "--cutoff",
            "273",
            "--calibration",
            s(&root.join("cal.csv")),
            "--holdout",
            s(&root.join("hold.csv")),
        ]);
        Cohort { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn fit(&self, kind: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(&format!("{kind}.json"));
        let cal = self.path("cal.csv");
        let mut args = vec!["fit", kind, "-i", s(&cal), "--end", "273", "-o", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn help_lists_every_command() {
    let help = ok(&["--help"]);
    for c in ["ingest", "summarize", "split", "fit", "predict", "simulate", "evaluate", "segment"] {
        assert!(help.contains(c), "{c} missing from help");
    }
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let out = clv(&["summarize", "/nonexistent/tx.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/tx.csv"));
}

#[test]
fn unknown_model_kind_is_a_usage_error() {
    let out = clv(&["fit", "weibull", "-i", "x.csv", "-o", "y.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weibull"));
}

#[test]
fn summarize_matches_the_library() {
    let c = Cohort::new(300);
    let out = c.path("rfm.csv");
    ok(&["summarize", s(&c.path("cal.csv")), "--end", "273", "-o", s(&out)]);
    let log = parse_transaction_log(std::fs::File::open(c.path("cal.csv")).unwrap(), &ColumnMapping::default(), TimestampFormat::Days)
        .unwrap()
        .log;
    let mut expected = Vec::new();
    write_summaries_csv(&mut expected, &rfm_summary(&log, 273.0).unwrap()).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), expected);
}

#[test]
fn btyd_fit_predict_and_persistence() {
    let c = Cohort::new(1500);
    let bg = c.fit("bg_nbd", &[]);
    let first = ModelArtifact::load(&bg).unwrap();

    // refitting from the fitted parameters stays at the optimum
    let again = c.path("bg_again.json");
    ok(&["fit", "bg_nbd", "-i", s(&c.path("cal.csv")), "--end", "273", "--init", s(&bg), "-o", s(&again)]);
    let second = ModelArtifact::load(&again).unwrap();
    assert!((first.fit.nll.unwrap() - second.fit.nll.unwrap()).abs() <= 1e-6);

    // Gamma-Gamma refuses one-time buyers unless they are filtered out
    let out = clv(&["fit", "gamma_gamma", "-i", s(&c.path("cal.csv")), "--end", "273", "-o", s(&c.path("gg.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frequency"));
    let gg = c.fit("gamma_gamma", &["--repeat-only"]);

    ok(&["summarize", s(&c.path("cal.csv")), "--end", "273", "-o", s(&c.path("rfm.csv"))]);
    let undiscounted = c.path("pred0.csv");
    ok(&["predict", "-a", s(&bg), "--spend", s(&gg), "-i", s(&c.path("rfm.csv")), "--discount-rate", "0", "-o", s(&undiscounted)]);
    let (n, v, clv0) = (column(&undiscounted, "expected_purchases"), column(&undiscounted, "expected_value"), column(&undiscounted, "clv"));
    for i in 0..n.len() {
        assert!((clv0[i] - n[i] * v[i]).abs() <= 1e-9 * clv0[i].abs().max(1.0), "row {i}");
    }

    // default horizon and rate; the file round trip keeps every value
    let pred = c.path("pred.csv");
    ok(&["predict", "-a", s(&bg), "--spend", s(&gg), "-i", s(&c.path("rfm.csv")), "-o", s(&pred)]);
    let discounted = column(&pred, "clv");
    assert!(discounted.iter().zip(&clv0).all(|(d, u)| d <= u && *d >= 0.0));
    let stdout = ok(&["predict", "-a", s(&bg), "--spend", s(&gg), "-i", s(&c.path("rfm.csv"))]);
    assert_eq!(stdout, std::fs::read_to_string(&pred).unwrap());
}

#[test]
fn schema_version_mismatch_is_refused() {
    let c = Cohort::new(400);
    let bg = c.fit("bg_nbd", &[]);
    let text = std::fs::read_to_string(&bg).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
    std::fs::write(&bg, text).unwrap();
    let out = clv(&["predict", "-a", s(&bg), "-i", s(&c.path("cal.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 99"));
}

#[test]
fn segment_orders_quintiles() {
    let c = Cohort::new(3000);
    let pareto = c.fit("pareto_nbd", &[]);
    let gg = c.fit("gamma_gamma", &["--repeat-only"]);
    let report = c.path("segments.csv");
    let customers = c.path("customers.csv");
    ok(&[
        "segment",
        "-i",
        s(&c.path("cal.csv")),
        "--end",
        "273",
        "--holdout",
        s(&c.path("hold.csv")),
        "-a",
        s(&pareto),
        "--spend",
        s(&gg),
        "-o",
        s(&report),
        "--customers",
        s(&customers),
    ]);
    let (_, rows) = read_csv(&report);
    let segs: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(segs, ["clv_q1", "clv_q2", "clv_q3", "clv_q4", "clv_q5"]);
    let realised = column(&report, "mean_holdout_revenue");
    assert!(realised[4] >= realised[0]);
    let (h, _) = read_csv(&customers);
    assert_eq!(h, ["customer_id", "rfm_code", "rfm_rank", "rfm_score", "predicted_clv", "clv_quintile", "holdout_revenue"]);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        ok(&["simulate", "bg_nbd", "--customers", "200", "--sessions-per-day", "1", "--seed", "9", "--out-dir", s(&dir.path().join(run))]);
    }
    for f in ["transactions.csv", "events.csv", "truth.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evaluate_reports_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("players");
    ok(&["simulate", "players", "--customers", "800", "--seed", "4", "--out-dir", s(&sim)]);
    let out = ok(&[
        "evaluate",
        "forest",
        "-i",
        s(&sim.join("transactions.csv")),
        "--events",
        s(&sim.join("events.csv")),
        "--folds",
        "10",
        "--trees",
        "10",
    ]);
    let mut r = csv::Reader::from_reader(out.as_bytes());
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert!(h.iter().any(|c| c == "nrmse"), "{h:?}");
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(&rows[10][0], "mean");
}

#[test]
fn gameplay_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("players");
    ok(&["simulate", "players", "--customers", "600", "--seed", "8", "--out-dir", s(&sim)]);
    let tx = sim.join("transactions.csv");
    let ev = sim.join("events.csv");
    for kind in ["basic", "retention", "monetization", "markov", "three_stage"] {
        let art = dir.path().join(format!("{kind}.json"));
        ok(&["fit", kind, "-i", s(&tx), "--events", s(&ev), "-o", s(&art), "--trees", "10"]);
        let a = ModelArtifact::load(&art).unwrap();
        assert_eq!(a.kind().to_string(), kind);
        let pred = dir.path().join(format!("{kind}.csv"));
        ok(&["predict", "-a", s(&art), "-i", s(&tx), "--events", s(&ev), "-o", s(&pred)]);
        assert!(column(&pred, "clv").iter().all(|v| v.is_finite()), "{kind}");
    }
}
