use std::path::Path;
use std::process::{Command, Output};

fn fedmf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmf"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FEDMF_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn results(dir: &Path) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    rdr.records().map(Result::unwrap).collect()
}

fn column(dir: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

const PLANTED: &[&str] = &["--planted", "10,12,2", "--d", "2", "--alpha", "0.01", "--max-iters", "40"];

#[test]
fn train_on_planted_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["-o", "out", "train", "--trainer", "rfrecf"];
    args.extend(PLANTED);
    ok(&fedmf(&args, tmp.path()));
    let out = tmp.path().join("out");
    assert_eq!(results(&out).len(), 1);
    assert_eq!(column(&out, "status"), vec!["ok"]);
    assert_eq!(column(&out, "trainer"), vec!["rfrecf"]);
    let history = std::fs::read_to_string(out.join("history/rfrecf-cell0-seed0.csv")).unwrap();
    assert!(history.starts_with("iter,loss,mae,rmse,comm_rounds"));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("timings.csv").exists());
}

#[test]
fn planted_sizes_accept_spaces() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["-o", "out", "train", "--planted", "6", "8", "2", "--d", "2", "--max-iters", "5"];
    ok(&fedmf(&args, tmp.path()));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.toml"),
        r#"
trainer = "fcf"
output_dir = "from-file"

[dataset]
kind = "planted"
n = 8
m = 9
d = 2

[config]
d = 2
alpha = 0.02
lambda = 3.0
max_iters = 15
"#,
    )
    .unwrap();

    ok(&fedmf(&["--config", "run.toml", "train"], tmp.path()));
    let dir = tmp.path().join("from-file");
    assert_eq!(column(&dir, "trainer"), vec!["fcf"]);
    assert_eq!(column(&dir, "alpha"), vec!["0.02"]);
    assert_eq!(column(&dir, "lambda"), vec!["3.0"]);
    assert_eq!(column(&dir, "max_iters"), vec!["15"]);

    ok(&fedmf(
        &["--config", "run.toml", "-o", "flagged", "train", "--trainer", "rfrec", "--alpha", "0.005"],
        tmp.path(),
    ));
    let dir = tmp.path().join("flagged");
    assert_eq!(column(&dir, "trainer"), vec!["rfrec"]);
    assert_eq!(column(&dir, "alpha"), vec!["0.005"]);
    assert_eq!(column(&dir, "lambda"), vec!["3.0"]);
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend(PLANTED);
    let out = Command::new(env!("CARGO_BIN_EXE_fedmf"))
        .args(&args)
        .current_dir(tmp.path())
        .env("FEDMF_OUTPUT_DIR", "env-out")
        .output()
        .unwrap();
    ok(&out);
    assert!(tmp.path().join("env-out/results.csv").exists());
}

#[test]
fn sweeps_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let mut args = vec![
            "-o",
            dir,
            "robustness-sweep",
            "--sweep-dropout",
            "0,0.5",
            "--seeds",
            "0,1",
            "--workers",
            "2",
            "--history",
        ];
        args.extend(PLANTED);
        ok(&fedmf(&args, tmp.path()));
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(results(&a).len(), 4);
    for file in ["results.csv", "summary.csv", "history/rfrec-cell1-seed1.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn privacy_sweep_reports_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["-o", "out", "privacy-sweep"];
    args.extend(PLANTED);
    ok(&fedmf(&args, tmp.path()));
    let out = tmp.path().join("out");
    assert_eq!(column(&out, "scale"), vec!["0.02", "0.04", "0.08"]);
    assert_eq!(column(&out, "epsilon"), vec!["20.0", "10.0", "5.0"]);
}

#[test]
fn compare_comm_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["-o", "out", "compare-comm", "--round-cap", "20"];
    args.extend(PLANTED);
    ok(&fedmf(&args, tmp.path()));
    let mut rdr = csv::Reader::from_path(tmp.path().join("out/comm_comparison.csv")).unwrap();
    let trainers: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(trainers, vec!["rfrec", "rfrecf", "fcf"]);
}

#[test]
fn verify_theory_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedmf(&["-o", "out", "verify-theory"], tmp.path());
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(tmp.path().join("out/theory_report.json").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedmf(&["train", "--data", "missing.data"], tmp.path());
    assert!(!out.status.success());
    let out = fedmf(&["train", "--planted", "4,4", "--max-iters", "1"], tmp.path());
    assert!(!out.status.success());
    let out = fedmf(&["train", "--trainer", "rfrecf", "--p", "1.5", "--planted", "4,4,1"], tmp.path());
    assert!(!out.status.success());
}
