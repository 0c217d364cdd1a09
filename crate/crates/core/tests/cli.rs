use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const ONE_STATE: &str = r#"{"states": ["z"], "increments": [0], "transition": [[0]], "payoff": [0], "z0": 0}"#;

const FOUR_ATOMS: &str = r#"{"n": 1, "T": 1, "x0": [0], "children": [
  {"w": 0.25, "x": [-2], "children": []},
  {"w": 0.25, "x": [-1], "children": []},
  {"w": 0.25, "x": [1], "children": []},
  {"w": 0.25, "x": [2], "children": []}
]}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_martineq"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn emit_doob(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_owned();
    let mut args = vec!["doob", "--grid-points", "101", "--emit-problem", &path];
    args.extend_from_slice(extra);
    let out = run(dir, &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn solve_minimal_problem() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", ONE_STATE);
    let out = run(dir.path(), &["solve", &p]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, ["state_index,label,value", "0,z,0.0000000000000000e0"]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "converged");

    let out = run(dir.path(), &["solve", &p, "--horizon", "3"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn solve_doob_exports() {
    let dir = TempDir::new().unwrap();
    let sharp = emit_doob(dir.path(), "sharp.json", &[]);
    let out = run(dir.path(), &["solve", &sharp]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    let v0: f64 = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((v0 - 1.0).abs() < 1e-3);

    let values = dir.path().join("values.csv");
    let out = run(dir.path(), &["verify", &sharp, values.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let weak = emit_doob(dir.path(), "weak.json", &["--c", "3.9"]);
    let out = run(dir.path(), &["solve", &weak]);
    assert_eq!(code(&out), 2, "{}", stdout(&out));

    let out = run(dir.path(), &["--max-iter", "3", "solve", &sharp]);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_rejects_raw_payoff() {
    let dir = TempDir::new().unwrap();
    let p = emit_doob(dir.path(), "d.json", &[]);
    let out = run(dir.path(), &["solve", &p, "--horizon", "0"]);
    assert_eq!(code(&out), 0);
    let values = dir.path().join("values.csv");
    let out = run(dir.path(), &["verify", &p, values.to_str().unwrap()]);
    assert_ne!(code(&out), 0);
    assert!(stdout(&out).contains("worst_state"));
}

#[test]
fn verify_zero_on_identity() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", ONE_STATE);
    let c = write(dir.path(), "c.csv", "state_index,label,value\n0,z,0\n");
    assert_eq!(code(&run(dir.path(), &["verify", &p, &c])), 0);
}

#[test]
fn hedge_check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = emit_doob(dir.path(), "d.json", &[]);
    let out = run(dir.path(), &["hedge-check", &p, "--horizon", "0"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("min_slack: 0.0000000000000000e0"));

    let out = run(dir.path(), &["hedge-check", &p, "--horizon", "4"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let strategy = fs::read_to_string(dir.path().join("strategy.csv")).unwrap();
    assert!(strategy.starts_with("time,state_index,xi\n"));

    let out = run(dir.path(), &["--seed", "3", "hedge-check", &p, "--horizon", "4", "--xi-noise", "0.5"]);
    assert_ne!(code(&out), 0);
    assert!(stdout(&out).contains("violating path"));
}

#[test]
fn reduce_exit_codes() {
    let dir = TempDir::new().unwrap();
    let t = write(dir.path(), "t.json", FOUR_ATOMS);
    let out = run(dir.path(), &["reduce", &t, "--payoff", "power:2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reduction.json")).unwrap()).unwrap();
    assert!(report["support_after"].as_u64().unwrap() <= 3);
    assert!(dir.path().join("reduced.json").exists());

    let small = write(dir.path(), "s.json", r#"{"n":1,"T":1,"x0":[0],"children":[{"w":0.5,"x":[1],"children":[]},{"w":0.5,"x":[-1],"children":[]}]}"#);
    let out = run(dir.path(), &["reduce", &small]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reduction.json")).unwrap()).unwrap();
    assert_eq!(report["support_after"], 2);

    let bad = write(dir.path(), "b.json", &FOUR_ATOMS.replacen("0.25", "0.3", 1));
    assert_eq!(code(&run(dir.path(), &["reduce", &bad])), 1);
}

#[test]
fn input_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &ONE_STATE.replace("\"payoff\": [0]", "\"payoff\": [\"x\"]"));
    let out = run(dir.path(), &["solve", &p]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("payoff"), "{}", stderr(&out));

    let p = write(dir.path(), "q.json", &ONE_STATE.replace("\"z0\": 0", "\"z0\": 4"));
    let out = run(dir.path(), &["solve", &p]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("z0"), "{}", stderr(&out));

    let out = run(dir.path(), &["solve", "/nonexistent/problem.json"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn doob_and_enumerate_subcommands() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["doob", "--grid-points", "51"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rho = fs::read_to_string(dir.path().join("rho.csv")).unwrap();
    assert!(rho.starts_with("r,value,closed_form,abs_err\n"));
    assert_eq!(rho.lines().count(), 52);

    let out = run(dir.path(), &["doob", "--grid-points", "51", "--c", "3.9"]);
    assert_eq!(code(&out), 2);

    let p = emit_doob(dir.path(), "d.json", &[]);
    let out = run(dir.path(), &["enumerate", &p, "--horizon", "2"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn burkholder_subcommand() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["burkholder", "--p", "3", "--samples", "500", "--paths", "5000"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(dir.path().join("burkholder.json").exists());

    let out = run(dir.path(), &["burkholder", "--p", "0.5"]);
    assert_eq!(code(&out), 1);
}
