use std::path::Path;
use std::process::{Command, Output};

use cpflow::series::SeriesTable;

fn cpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpflow")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SYM2_CONFIG: &str = r#"{
  "model": { "nu": 2, "scenario": "sym", "p": 32, "h": 16, "sigma": SIGMA, "t_scale": 1.0 },
  "t_max": 2.0, "n_steps": 400, "n_seeds": 3, "probe_stride": 20
}"#;

#[test]
fn expand_dump_parses() {
    let o = cpflow(&["expand", "--nu", "2", "--scenario", "asym", "--smax", "2"]);
    assert!(o.status.success());
    let table = SeriesTable::parse(&stdout(&o)).unwrap();
    assert_eq!(table.s_max(), 2);
    assert_eq!(table.dump(), stdout(&o));
}

#[test]
fn classify_ntk_face() {
    let o = cpflow(&["classify", "--nu", "2", "--scenario", "asym", "--alpha", "1,2,-0.75"]);
    assert_eq!(stdout(&o), "face B-C (NTK), natural T = H*sigma^2\n");
}

#[test]
fn theory_csv_is_deterministic() {
    let args = ["theory", "sym2", "--p", "512", "--H", "256", "--psigma2", "1", "--T", "1", "--points", "5"];
    let a = cpflow(&args);
    let b = cpflow(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let v: f64 = first[1].parse().unwrap();
    assert!((v - 192.0).abs() < 1e-9);
    // 17 significant digits
    assert_eq!(first[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn exit_codes() {
    let usage = cpflow(&["classify", "--nu", "2"]);
    assert_eq!(usage.status.code(), Some(2));
    let module = cpflow(&["classify", "--nu", "2", "--scenario", "sym", "--alpha", "1,x,2"]);
    assert_eq!(module.status.code(), Some(1));
    let unsupported = cpflow(&["pareto", "--nu", "3", "--scenario", "sym", "--smax", "1"]);
    assert_eq!(unsupported.status.code(), Some(1));
    let threads = Command::new(env!("CARGO_BIN_EXE_cpflow"))
        .args(["theory", "ntk", "--points", "3"])
        .env("CPFLOW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn pareto_from_dump_matches_direct() {
    let dir = tempfile::tempdir().unwrap();
    let dump = stdout(&cpflow(&["expand", "--nu", "3", "--scenario", "asym", "--smax", "2"]));
    let path = write(dir.path(), "y.txt", &dump);
    let a = cpflow(&["pareto", "--input", &path]);
    let b = cpflow(&["pareto", "--nu", "3", "--scenario", "asym", "--smax", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).ends_with("# plane residual per s: 0 0 0\n"));
}

#[test]
fn oracle_check_agrees() {
    let o = cpflow(&["oracle-check", "--nu", "2", "--scenario", "sym", "--p", "2", "--H", "2", "--smax", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));
}

#[test]
fn simulate_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = (1.0f64 / 32.0).sqrt().to_string();
    let cfg = write(dir.path(), "cfg.json", &SYM2_CONFIG.replace("SIGMA", &sigma));
    let out = dir.path().join("traj.csv");
    let out = out.to_str().unwrap();
    let s = cpflow(&["simulate", "--config", &cfg, "--out", out]);
    assert!(s.status.success());
    let again = cpflow(&["simulate", "--config", &cfg]);
    assert_eq!(std::fs::read(out).unwrap(), again.stdout);

    let ok = cpflow(&["compare", "--config", &cfg, "--trajectory", out, "--theory", "sym2", "--min-theory", "0.16"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["pass"], true);

    // the same trajectory judged against a theory with twice the variance
    let wrong = write(dir.path(), "wrong.json", &SYM2_CONFIG.replace("SIGMA", &(2.0f64 / 32.0).sqrt().to_string()));
    let bad = cpflow(&["compare", "--config", &wrong, "--trajectory", out, "--theory", "sym2"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn compare_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = (1.0f64 / 32.0).sqrt().to_string();
    let cfg = write(dir.path(), "cfg.json", &SYM2_CONFIG.replace("SIGMA", &sigma));
    let short = write(dir.path(), "short.csv", "t,mean,stderr\n0,1,0\n0.5,1,0\n");
    let o = cpflow(&["compare", "--config", &cfg, "--trajectory", &short, "--theory", "sym2", "--points", "11"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside simulated range"));
}

#[test]
fn timestamp_is_opt_in() {
    let off = stdout(&cpflow(&["theory", "ntk", "--points", "2"]));
    assert!(off.starts_with("t,value"));
    let on = stdout(&cpflow(&["--timestamp", "on", "theory", "ntk", "--points", "2"]));
    assert!(on.starts_with("# generated "));
}
