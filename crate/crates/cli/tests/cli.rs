use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn massgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_massgame")).args(args).env_remove("MASSGAME_THREADS").output().expect("binary runs")
}

fn run_into(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--out", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    massgame(&all)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

const SIM: &[&str] = &["simulate", "--mass", "example_cesar", "--family", "rw_bounded", "--seed", "7", "--horizon", "1e4", "--reps", "20"];

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&a, SIM).status.success());
    assert!(run_into(&b, SIM).status.success());
    assert_eq!(read(&a, "report.json"), read(&b, "report.json"));
    assert_eq!(read(&a, "data.csv"), read(&b, "data.csv"));
    let csv = String::from_utf8(read(&a, "data.csv")).unwrap();
    assert!(csv.starts_with("replication,t,S\n"));
}

#[test]
fn report_config_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&a, SIM).status.success());
    let cfg = a.join("report.json");
    assert!(run_into(&b, &["--config", cfg.to_str().unwrap(), "simulate"]).status.success());
    assert_eq!(read(&a, "report.json"), read(&b, "report.json"));
    assert_eq!(read(&a, "data.csv"), read(&b, "data.csv"));
}

#[test]
fn flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "command": "simulate", "mass": "const:1", "family": "rw_bounded", "seed": 1, "horizon": 1000, "replications": 5}"#).unwrap();
    let out = tmp.path().join("o");
    let o = run_into(&out, &["--config", cfg.to_str().unwrap(), "simulate", "--seed", "9", "--reps", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = &report(&out)["config"];
    assert_eq!(c["seed"], 9);
    assert_eq!(c["replications"], 3);
    assert_eq!(c["horizon"], 1000.0);
    assert_eq!(c["mass"], "const:1");
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "mass": "const:1", "family": "rw_bounded", "seed": 1, "horizn": 10}"#).unwrap();
    let o = run_into(&out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));

    std::fs::write(&cfg, r#"{"schema_version": 2, "mass": "const:1", "family": "rw_bounded", "seed": 1}"#).unwrap();
    assert_eq!(run_into(&out, &["--config", cfg.to_str().unwrap(), "simulate"]).status.code(), Some(2));

    assert_eq!(run_into(&out, &["simulate", "--mass", "const:1", "--family", "rw_bounded"]).status.code(), Some(2));
    assert_eq!(run_into(&out, &["simulate", "--mass", "nonsense", "--family", "rw_bounded", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(run_into(&out, &["counterexample", "w2", "--seed", "1", "--budget", "10"]).status.code(), Some(2));
    assert_eq!(run_into(&out, &["--threads", "0", "simulate", "--mass", "const:1", "--family", "rw_bounded", "--seed", "1"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn assert_flag_exits_3_on_unexpected_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["counterexample", "s1", "--K", "200", "--reps", "50", "--seed", "1", "--zero"];
    assert_eq!(run_into(tmp.path(), &args).status.code(), Some(0));
    let mut with = vec!["--assert"];
    with.extend_from_slice(&args);
    assert_eq!(run_into(tmp.path(), &with).status.code(), Some(3));
}

#[test]
fn classify_triangular_candidate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(tmp.path(), &["classify", "--mass", "example_triangular", "--horizon", "1e6"]);
    assert!(o.status.success());
    let r = report(tmp.path());
    let regular = &r["result"]["classification"]["regular"];
    assert_eq!(regular["verdict"], "regular");
    let atoms = regular["candidate"].as_array().unwrap();
    let at_one = atoms.iter().find(|a| a[0] == 1.0).unwrap()[1].as_f64().unwrap();
    let far: f64 = atoms.iter().filter(|a| a[0].as_f64().is_none_or(|x| x >= 100.0)).map(|a| a[1].as_f64().unwrap()).sum();
    assert!((at_one - 0.5).abs() < 0.01, "{at_one}");
    assert!((far - 0.5).abs() < 0.01, "{far}");
}

#[test]
fn s1_counterexample_mean_jumps() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(tmp.path(), &["--assert", "counterexample", "s1", "--K", "1000", "--reps", "200", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(tmp.path());
    let last = r["result"]["checkpoints"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["k"], 1000);
    assert!((last["expected"].as_f64().unwrap() - 3.7427).abs() < 1e-4);
    assert!((last["mean_count"].as_f64().unwrap() - 3.74).abs() < 0.4);
}

#[test]
fn list_examples_covers_catalog() {
    let o = massgame(&["list-examples"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.contains("auxiliary")).collect();
    assert!(rows.len() >= 15, "{text}");
    assert!(rows.iter().any(|l| l.starts_with("example_remp ")));
    assert!(rows.iter().any(|l| l.starts_with("example_F0 ")));
}

#[test]
fn list_examples_writes_only_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert!(run_into(&out, &["list-examples"]).status.success());
    let r = report(&out);
    assert!(r["examples"].as_array().unwrap().len() >= 15);
}

#[test]
fn verify_conditions_reports_every_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(tmp.path(), &["--assert", "verify-conditions", "--family", "rw_bounded", "--seed", "1", "--budget", "1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(tmp.path());
    assert_eq!(r["result"].as_array().unwrap().len(), 6);
    let csv = String::from_utf8(read(tmp.path(), "data.csv")).unwrap();
    assert!(csv.starts_with("condition,k,m,param,estimate,lower,upper\n"));
}

#[test]
fn w2_counterexample_certifies() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(tmp.path(), &["--assert", "counterexample", "w2", "--seed", "2", "--budget", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(tmp.path())["result"]["all_certified"], true);
}
