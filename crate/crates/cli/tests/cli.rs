use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use surropt::{FunctionId, SurrogateKind};
use surropt_cli::{
    execute, read_summary_csv, run_matrix, write_summary_csv, MatrixConfig, PolicySpec, RunMatrix,
    SummaryRow,
};

// The smoke test is timed, so tests in this file take turns on the CPU.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surropt"))
}

fn small(out: &Path) -> MatrixConfig {
    MatrixConfig {
        function: vec![FunctionId::Levy, FunctionId::Rastrigin],
        dim: 3,
        noise: vec![0.0, 0.1],
        surrogate: vec![SurrogateKind::TkMars, SurrogateKind::Rbf],
        replication: vec![PolicySpec::None, PolicySpec::Smart(Some(3))],
        budget: 25,
        executions: 2,
        seed: 5,
        out: out.to_path_buf(),
        jobs: Some(1),
        ..MatrixConfig::default()
    }
}

#[test]
fn list_functions_prints_the_five_names() {
    let _turn = serial();
    let out = bin().arg("--list-functions").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["rosenbrock", "rastrigin", "levy", "ackley", "zakharov"]);
}

#[test]
fn smoke_run_is_quick() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = bin()
        .args(["--executions", "1", "--budget", "50", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let took = t.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_summary_csv(&dir.path().join("summary.csv")).unwrap();
    // 5 functions x 4 noise levels x 5 surrogates x 5 policies.
    assert_eq!(rows.len(), 500);
    assert!(rows.iter().all(|r| r.status == "ok" && r.total_evals == Some(50)));
    assert!(took < Duration::from_secs(10), "smoke run took {took:?}");
}

#[test]
fn config_errors_exit_with_one() {
    let _turn = serial();
    let out = bin().args(["--surrogate", "spline"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["--executions", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["--config", "/nonexistent/m.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn summary_has_one_row_per_execution_and_traces_match_budget() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let report = run_matrix(&c, true).unwrap();
    assert_eq!(report.failed, 0);
    let rows = read_summary_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(rows.len(), report.matrix.cells.len() * c.executions);
    assert_eq!(rows, report.rows);
    for cell in &report.matrix.cells {
        let n = report.matrix.runs.iter().filter(|r| r.cell == cell.index).count();
        assert_eq!(n, c.executions);
    }
    for r in &rows {
        let path = dir.path().join("traces").join(format!("{}.csv", r.run_id));
        let lines = std::fs::read_to_string(path).unwrap().lines().count();
        assert_eq!(lines, 1 + c.budget);
        if r.surrogate == "tkmars" {
            assert!(r.selected().iter().all(|&v| v < c.dim));
        } else {
            assert!(r.selected_variables.is_empty());
        }
    }
}

#[test]
fn summary_round_trip_is_exact() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_summary_csv(&path, &[]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("run_id,function,d,fiv,noise"));
    assert!(read_summary_csv(&path).unwrap().is_empty());

    let row = SummaryRow {
        run_id: "c0001-e002".into(),
        function: "levy".into(),
        d: 30,
        fiv: 0.5,
        noise: 0.1,
        surrogate: "tkmars".into(),
        replication: "smart".into(),
        r_or_rmax: 10,
        seed: u64::MAX,
        auc: Some(0.1 + 0.2),
        mtfauc: Some(1.0 / 3.0),
        final_bsms_true: Some(1.234_567_890_123_456_7e-300),
        total_evals: Some(1000),
        selected_variables: "0;3;17".into(),
        status: "ok".into(),
    };
    let failed = SummaryRow {
        auc: None,
        mtfauc: None,
        final_bsms_true: None,
        total_evals: None,
        selected_variables: String::new(),
        status: "error: fit failed, badly".into(),
        ..row.clone()
    };
    write_summary_csv(&path, &[row.clone(), failed.clone()]).unwrap();
    assert_eq!(read_summary_csv(&path).unwrap(), vec![row, failed]);
}

#[test]
fn same_seed_reproduces_a_cell_in_isolation() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let full = small(dir.path());
    let whole = RunMatrix::expand(&full);
    let outcomes = execute(&whole, 1, |_| {}).unwrap();
    // Re-run the last execution on its own from its derived seed.
    let last = whole.runs.last().unwrap().clone();
    let alone = surropt_cli::matrix::execute_one(&last, 0.0, Default::default());
    assert_eq!(&alone, outcomes.last().unwrap());
    assert_eq!(
        SummaryRow::from_outcome(&alone),
        SummaryRow::from_outcome(outcomes.last().unwrap())
    );
}

#[test]
fn parallel_and_serial_runs_agree() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let m = RunMatrix::expand(&c);
    let serial = execute(&m, 1, |_| {}).unwrap();
    let parallel = execute(&m, 3, |_| {}).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn failed_runs_are_recorded_with_status() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let m = RunMatrix::expand(&c);
    let mut o = surropt_cli::matrix::execute_one(&m.runs[0], 0.0, Default::default());
    o.result = Err("surrogate fit failed".into());
    let row = SummaryRow::from_outcome(&o);
    assert_eq!(row.status, "error: surrogate fit failed");
    assert_eq!(row.mtfauc, None);
    let path = dir.path().join("t.csv");
    surropt_cli::write_trace_csv(&path, &o).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
}

#[test]
fn json_config_drives_the_binary() {
    let _turn = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.json");
    std::fs::write(
        &cfg,
        r#"{"function": ["ackley"], "dim": 2, "noise": [0.05], "surrogate": ["gp"],
            "replication": ["fixed:2"], "budget": 12, "executions": 3, "seed": 11}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--executions", "2"])
        .env("SURROPT_JOBS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_summary_csv(&out_dir.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.function == "ackley" && r.replication == "fixed"));
    assert_eq!(rows[0].r_or_rmax, 2);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("ackley gp fixed2 np=0.05"));
    assert!(out_dir.join("cells.csv").exists());
}
