//! Experiment runner: expands a factor matrix into seeded runs, executes
//! them on a worker pool and writes per-run traces plus summary tables.

pub mod config;
pub mod matrix;
pub mod output;
pub mod stats;

use std::ffi::OsString;
use std::io::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Parser;
use surropt::FunctionId;

pub use config::{Args, MatrixConfig, PolicySpec};
pub use matrix::{execute, run_seed, Cell, RunMatrix, RunOutcome, RunSpec, RunSummary};
pub use output::{read_summary_csv, write_summary_csv, write_trace_csv, SummaryRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

/// Everything a finished matrix produced.
#[derive(Debug)]
pub struct Report {
    pub matrix: RunMatrix,
    pub rows: Vec<SummaryRow>,
    pub stats: Vec<stats::CellStats>,
    pub failed: usize,
}

/// Executes the matrix and writes all outputs below `config.out`.
pub fn run_matrix(config: &MatrixConfig, quiet: bool) -> anyhow::Result<Report> {
    let matrix = RunMatrix::expand(config);
    let jobs = config.jobs.unwrap_or(0);
    let total = matrix.runs.len();
    let done = AtomicUsize::new(0);
    let outcomes = execute(&matrix, jobs, |o| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !quiet {
            let status = match &o.result {
                Ok(s) => format!("mtfauc {:.4}", s.mtfauc),
                Err(e) => format!("FAILED: {e}"),
            };
            eprintln!("[{k}/{total}] {} {status}", o.spec.run_id);
        }
    })?;

    // Single writer, in matrix order.
    for o in &outcomes {
        write_trace_csv(&output::trace_path(&config.out, &o.spec.run_id), o)?;
    }
    let rows: Vec<SummaryRow> = outcomes.iter().map(SummaryRow::from_outcome).collect();
    write_summary_csv(&config.out.join("summary.csv"), &rows)?;
    let stats: Vec<_> = matrix
        .cells
        .iter()
        .map(|c| {
            let mine: Vec<SummaryRow> = outcomes
                .iter()
                .zip(&rows)
                .filter(|(o, _)| o.spec.cell == c.index)
                .map(|(_, r)| r.clone())
                .collect();
            stats::cell_stats(c, &mine)
        })
        .collect();
    output::write_cells_csv(&config.out.join("cells.csv"), &matrix.cells, &stats)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    Ok(Report {
        matrix,
        rows,
        stats,
        failed,
    })
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if args.list_functions {
        let mut out = std::io::stdout().lock();
        for f in FunctionId::ALL {
            let (lo, hi) = f.range();
            let _ = writeln!(out, "{f}\t[{lo}, {hi}]");
        }
        return EXIT_OK;
    }
    let config = match MatrixConfig::from_args(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    match run_matrix(&config, false) {
        Ok(report) => {
            print!("{}", stats::render_table(&report.matrix.cells, &report.stats));
            println!("results written to {}", config.out.display());
            if report.failed > 0 {
                eprintln!("{} of {} runs failed", report.failed, report.rows.len());
                EXIT_PARTIAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}
