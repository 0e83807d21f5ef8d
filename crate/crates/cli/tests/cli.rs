//! End-to-end checks of the `asyncdual` binary: exit codes and CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asyncdual"))
}

fn ieee14() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/ieee14_dcopf.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

/// Three scalar agents; agent 0 owns two equalities tying it to each neighbor.
/// `rows0` are agent 0's own rows, `rows1`/`rows2` the neighbor columns.
fn three_agents(rows0: &str, rows1: &str, rows2: &str, b: &str, curvatures: [f64; 3]) -> String {
    format!(
        r#"{{
  "version": 1,
  "agents": [
    {{"dim": 1, "hessian": {{"diagonal": [{c0:?}]}}, "linear": [0.0], "box": {{"lower": [-1e9], "upper": [1e9]}}, "ineq_dim": 0, "eq_dim": 2}},
    {{"dim": 1, "hessian": {{"diagonal": [{c1:?}]}}, "linear": [0.0], "ineq_dim": 0, "eq_dim": 0}},
    {{"dim": 1, "hessian": {{"diagonal": [{c2:?}]}}, "linear": [0.0], "ineq_dim": 0, "eq_dim": 0}}
  ],
  "edges": [[0, 1], [0, 2]],
  "couplings": [
    {{"owner": 0, "neighbor": 0, "C": [], "d": [], "A": {rows0}, "b": {b}}},
    {{"owner": 0, "neighbor": 1, "C": [], "d": [], "A": {rows1}, "b": [0.0, 0.0]}},
    {{"owner": 0, "neighbor": 2, "C": [], "d": [], "A": {rows2}, "b": [0.0, 0.0]}},
    {{"owner": 1, "neighbor": 0, "C": [], "d": [], "A": [], "b": []}},
    {{"owner": 1, "neighbor": 1, "C": [], "d": [], "A": [], "b": []}},
    {{"owner": 2, "neighbor": 0, "C": [], "d": [], "A": [], "b": []}},
    {{"owner": 2, "neighbor": 2, "C": [], "d": [], "A": [], "b": []}}
  ]
}}
"#,
        c0 = curvatures[0],
        c1 = curvatures[1],
        c2 = curvatures[2],
    )
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn validate_accepts_the_bundled_instance() {
    let o = run(&["validate", ieee14().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("PASS full_row_rank"), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn rank_deficient_coupling_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    // both rows read x0 + x1 = 2
    let file = write(
        dir.path(),
        "dup.json",
        &three_agents("[[1.0], [1.0]]", "[[1.0], [1.0]]", "[[0.0], [0.0]]", "[2.0, 2.0]", [1.0, 1.0, 1.0]),
    );
    let o = run(&["validate", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL full_row_rank"));
    // every other subcommand refuses the instance with the same code
    assert_eq!(run(&["oracle", file.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn oracle_non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // dual curvatures ~1e6 and ~2e-6: the slow direction cannot settle in 1000 steps
    let file = write(
        dir.path(),
        "stiff.json",
        &three_agents("[[1.0], [1.0]]", "[[1.0], [0.0]]", "[[0.0], [1.0]]", "[2.0, 100.0]", [1e6, 1e-6, 1e6]),
    );
    assert_eq!(run(&["validate", file.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["oracle", file.to_str().unwrap(), "--max-iters", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no convergence"));
}

#[test]
fn io_schema_and_usage_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(run(&["validate", missing.to_str().unwrap()]).status.code(), Some(3));
    let garbled = write(dir.path(), "garbled.json", "{\"version\": 1, \"agents\": 5}");
    let o = run(&["validate", garbled.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("agents"));
    let future = fs::read_to_string(ieee14()).unwrap().replacen("\"version\": 1", "\"version\": 99", 1);
    let future = write(dir.path(), "future.json", &future);
    assert_eq!(run(&["validate", future.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(run(&["constants", ieee14().to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn unknown_fields_only_warn() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(ieee14()).unwrap().replacen("{", "{\n  \"comment\": \"extra\",", 1);
    let file = write(dir.path(), "extra.json", &text);
    let o = run(&["validate", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("comment"));
}

#[test]
fn constants_csv_has_one_row_per_agent() {
    let o = run(&["constants", ieee14().to_str().unwrap(), "--Q", "25"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("agent,theta_i,phi_i,ell_i,xi_i,gamma_max,gamma"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 14);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i as f64);
        assert!(r[6] > 0.0 && r[6] < r[5], "agent {i}: gamma {} vs bound {}", r[6], r[5]);
    }
    assert_eq!(run(&["constants", ieee14().to_str().unwrap(), "--Q", "0"]).status.code(), Some(1));
}

#[test]
fn oracle_prints_the_reference_point() {
    let o = run(&["oracle", ieee14().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# method=long-run"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "agent,kind,index,value");
    // 14 buses: (P, ψ) each, one multiplier each
    assert_eq!(body.len(), 1 + 28 + 14);
}

#[test]
fn async_solve_writes_run_trace_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let file = ieee14();
    let args = [
        "solve", "--mode", "async", file.to_str().unwrap(), "--Q-target", "25", "--seed", "3", "--horizon", "1500",
        "--record-every", "500", "--out", out.to_str().unwrap(),
    ];
    assert_eq!(run(&args).status.code(), Some(0));
    let record = fs::read_to_string(out.join("run.csv")).unwrap();
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let constants = fs::read_to_string(out.join("constants.csv")).unwrap();
    assert!(record.contains("# mode=async\n") && record.contains("# seed=3\n"));
    let body: Vec<&str> = record.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "k,avg_updates,dist,dual,feas,residual");
    let ks: Vec<u64> = body[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ks, [500, 1000, 1500]);
    assert!(trace.starts_with("k,tick,agent,neighbor,tau\n"));
    assert_eq!(constants.lines().count(), 15);

    // identical inputs give identical bytes
    let again = dir.path().join("again");
    let mut repeat = args;
    repeat[13] = again.to_str().unwrap();
    assert_eq!(run(&repeat).status.code(), Some(0));
    assert_eq!(fs::read(out.join("run.csv")).unwrap(), fs::read(again.join("run.csv")).unwrap());
    assert_eq!(fs::read(out.join("trace.csv")).unwrap(), fs::read(again.join("trace.csv")).unwrap());
}

#[test]
fn sync_solve_prints_to_stdout_and_zero_horizon_is_header_only() {
    let o = run(&["solve", "--mode", "sync", ieee14().to_str().unwrap(), "--horizon", "300", "--record-every", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# mode=sync\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    // synchronous rounds count one update per agent
    assert!(rows[2].starts_with("300,3e2,"), "{}", rows[2]);

    let o = run(&["solve", "--mode", "async", ieee14().to_str().unwrap(), "--horizon", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), ["k,avg_updates,dist,dual,feas,residual"]);
}

#[test]
fn sweep_writes_one_record_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep", ieee14().to_str().unwrap(), "--Q-list", "1,25", "--scale", "1,100", "--horizon", "400",
        "--record-every", "200", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "label,q_target,realized_q,scale,seed,admissible,final_dist,relative_dist");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        let admissible = cols[5] == "true";
        assert_eq!(admissible, cols[3] == "1e0", "{line}");
        assert!(out.join(format!("{}.csv", cols[0])).is_file(), "{line}");
    }
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 4);
}
