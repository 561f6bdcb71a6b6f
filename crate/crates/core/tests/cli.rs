use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = r#"
[mode.rho_min]
sigma1 = 0.4
sigma2 = 0.3
rho = -0.8

[mode.rho_max]
sigma1 = 0.4
sigma2 = 0.3
rho = 0.8

[sampling]
N_in = 100
N_rg = 500
N_x = 10
N_w = 50
"#;

fn run(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maxplus-hjb"));
    cmd.args(args).current_dir(dir).env_remove("MAXPLUS_HJB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn solve_writes_artifacts_deterministically() {
    let dir = setup(QUICK);
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = run(&["solve", "run.toml", "--out-dir", out], dir.path(), &[("MAXPLUS_HJB_THREADS", threads)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for name in ["forms.csv", "diagnostics.csv", "values.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let forms = String::from_utf8(read(&a, "forms.csv")).unwrap();
    assert!(forms.lines().next().unwrap().starts_with("t,"));
    let manifest = String::from_utf8(read(&a, "manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l.starts_with("spec_hash=") && l.len() == "spec_hash=".len() + 64));
}

#[test]
fn benchmark_and_oracle_commands() {
    let dir = setup(QUICK);
    let o = run(&["benchmark", "run.toml", "--out-dir", "bench"], dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(read(&dir.path().join("bench"), "table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("case_id,modes,n_in,n_rg,n_x,n_w,method,seed,t_eval,e_inf,e_1,status"));
    let figure = String::from_utf8(read(&dir.path().join("bench"), "figure.csv")).unwrap();
    assert_eq!(figure.lines().count(), 62);

    let o = run(&["oracle", "run.toml", "--rho", "-0.8", "--out-dir", "oracle"], dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let oracle = String::from_utf8(read(&dir.path().join("oracle"), "oracle_rho_-0.8.csv")).unwrap();
    assert_eq!(oracle.lines().count(), 62);
}

#[test]
fn dump_payoff_reports_error() {
    let dir = setup(QUICK);
    let o = run(&["dump-payoff", "run.toml", "--out-dir", "p"], dir.path(), &[]);
    assert!(o.status.success());
    let report = String::from_utf8(read(&dir.path().join("p"), "payoff_report.txt")).unwrap();
    let achieved: f64 = report.lines().find_map(|l| l.strip_prefix("achieved_error=")).unwrap().parse().unwrap();
    assert!(achieved <= 0.05);
}

#[test]
fn invalid_config_is_reported_with_section_and_key() {
    let dir = setup(&format!("{QUICK}\n[run]\nseed = 1\n").replace("N_rg = 500", "N_rg = 499"));
    let o = run(&["solve", "run.toml"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error: kind=config section=sampling key=N_rg msg="), "{err}");

    let dir = setup("[problem]\nfoo = 1\n");
    let o = run(&["solve", "run.toml"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error: kind=config section=problem key=foo"), "{err}");

    let o = run(&["solve", "missing.toml"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error: kind=io"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run(&["--help"], dir.path(), &[]).status.code(), Some(0));
}
