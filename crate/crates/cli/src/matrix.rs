//! Run-matrix expansion and seeded execution.

use rayon::prelude::*;
use surropt::seed::derive_seed;
use surropt::{
    auc, export_trace, mtfauc, run, ExperimentConfig, FunctionId, Quadrature, Replication,
    SurrogateKind,
};

use crate::config::MatrixConfig;

/// One combination of matrix factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub function: FunctionId,
    pub noise: f64,
    pub surrogate: SurrogateKind,
    pub replication: Replication,
}

impl Cell {
    pub fn label(&self) -> String {
        let rep = match self.replication {
            Replication::None => "none".to_string(),
            r => format!("{}{}", r.name(), r.level()),
        };
        format!("{} {} {} np={}", self.function, self.surrogate, rep, self.noise)
    }
}

/// One execution of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub cell: usize,
    pub execution: usize,
    pub run_id: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunMatrix {
    pub cells: Vec<Cell>,
    pub runs: Vec<RunSpec>,
    pub f_min: f64,
    pub quadrature: Quadrature,
}

/// Seed of execution `execution` of cell `cell`.
pub fn run_seed(master: u64, cell: usize, execution: usize) -> u64 {
    derive_seed(master, &[cell as u64, execution as u64])
}

impl RunMatrix {
    /// Cells in function, noise, surrogate, policy order; runs cell-major.
    pub fn expand(c: &MatrixConfig) -> Self {
        let mut cells = Vec::new();
        for &function in &c.function {
            for &noise in &c.noise {
                for &surrogate in &c.surrogate {
                    for replication in c.policies() {
                        cells.push(Cell {
                            index: cells.len(),
                            function,
                            noise,
                            surrogate,
                            replication,
                        });
                    }
                }
            }
        }
        let runs = cells
            .iter()
            .flat_map(|cell| {
                (0..c.executions).map(move |e| {
                    let seed = run_seed(c.seed, cell.index, e);
                    RunSpec {
                        cell: cell.index,
                        execution: e,
                        run_id: format!("c{:04}-e{:03}", cell.index, e),
                        config: c.experiment(
                            cell.function,
                            cell.noise,
                            cell.surrogate,
                            cell.replication,
                            seed,
                        ),
                    }
                })
            })
            .collect();
        Self {
            cells,
            runs,
            f_min: c.f_min,
            quadrature: c.quadrature,
        }
    }
}

/// What is kept of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub auc: f64,
    pub mtfauc: f64,
    pub final_bsms_true: f64,
    pub total_evals: usize,
    pub selected_variables: Option<Vec<usize>>,
    /// Rows of `eval_index, bsms_true, bsms_mean`.
    pub trace: Vec<[String; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub result: Result<RunSummary, String>,
}

pub fn execute_one(spec: &RunSpec, f_min: f64, quad: Quadrature) -> RunOutcome {
    let result = run(&spec.config)
        .and_then(|r| {
            let series = r.bsms_true_series();
            Ok(RunSummary {
                auc: auc(&series, f_min, quad)?,
                mtfauc: mtfauc(&series, f_min, quad)?,
                final_bsms_true: r.final_bsms_true,
                total_evals: r.total_evals(),
                selected_variables: r.selected_variables.as_ref().map(|s| s.iter().copied().collect()),
                trace: export_trace(&r.trace),
            })
        })
        .map_err(|e| e.to_string());
    RunOutcome {
        spec: spec.clone(),
        result,
    }
}

/// Runs every execution, on `jobs` threads (0 = one per core). Outcomes come
/// back in matrix order whatever the thread count; `progress` is called as
/// runs finish.
pub fn execute(
    matrix: &RunMatrix,
    jobs: usize,
    progress: impl Fn(&RunOutcome) + Sync,
) -> anyhow::Result<Vec<RunOutcome>> {
    let one = |s: &RunSpec| {
        let o = execute_one(s, matrix.f_min, matrix.quadrature);
        progress(&o);
        o
    };
    if jobs == 1 {
        return Ok(matrix.runs.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(|| matrix.runs.par_iter().map(one).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_is_a_cross_product() {
        let c = MatrixConfig {
            function: vec![FunctionId::Levy, FunctionId::Ackley],
            noise: vec![0.0, 0.1],
            surrogate: vec![SurrogateKind::TkMars],
            executions: 3,
            ..MatrixConfig::default()
        };
        let m = RunMatrix::expand(&c);
        assert_eq!(m.cells.len(), 2 * 2 * 5);
        assert_eq!(m.runs.len(), 60);
        let ids: std::collections::HashSet<_> = m.runs.iter().map(|r| r.run_id.clone()).collect();
        assert_eq!(ids.len(), 60);
        let seeds: std::collections::HashSet<_> = m.runs.iter().map(|r| r.config.seed).collect();
        assert_eq!(seeds.len(), 60);
    }

    #[test]
    fn seeds_do_not_depend_on_the_rest_of_the_matrix() {
        let small = MatrixConfig {
            function: vec![FunctionId::Levy],
            executions: 2,
            seed: 9,
            ..MatrixConfig::default()
        };
        let m = RunMatrix::expand(&small);
        let spec = &m.runs[7];
        assert_eq!(spec.config.seed, run_seed(9, spec.cell, spec.execution));
    }
}
