//! The sequential surrogate optimization loop.
//!
//! A Latin hypercube is evaluated once per point; the output range of that
//! design scales the observation noise. Each iteration then fits the surrogate
//! to the data, selects up to `k_prime` candidates from a fixed random pool by
//! Pareto sampling, and evaluates them under the replication policy until the
//! budget runs out.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree, TreeParams};
use crate::doe::{lhd, uniform_pool};
use crate::error::{Error, Result};
use crate::kernels::{fit_gp, fit_nonrbf, fit_rbf, tune_gp, GpModel, GpParams, RbfModel};
use crate::mars::{evenly_spaced_knots, fit_mars, fit_tk_mars, MarsModel, MarsParams, TkMars};
use crate::problem::{sigma0_from_initial, Budget, FunctionId, NoisyObjective, TestFunction};
use crate::replication::{Dataset, PointRecord, Replication, RunState, TraceEntry};
use crate::sampling::{eepa_select, CandidatePool};
use crate::seed::{stream, STREAM_DESIGN, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    /// MARS on evenly spaced knots.
    Mars,
    /// MARS on regression-tree knots.
    TkMars,
    Rbf,
    NonRbf,
    Gp,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 5] = [
        SurrogateKind::Mars,
        SurrogateKind::TkMars,
        SurrogateKind::Rbf,
        SurrogateKind::NonRbf,
        SurrogateKind::Gp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurrogateKind::Mars => "mars",
            SurrogateKind::TkMars => "tkmars",
            SurrogateKind::Rbf => "rbf",
            SurrogateKind::NonRbf => "nonrbf",
            SurrogateKind::Gp => "gp",
        }
    }

    pub fn is_mars(self) -> bool {
        matches!(self, SurrogateKind::Mars | SurrogateKind::TkMars)
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        SurrogateKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || (lower == "tk-mars" && *k == SurrogateKind::TkMars))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown surrogate '{s}'")))
    }
}

/// Eligible knots for the evenly spaced MARS baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarsKnots {
    /// `T` knots per dimension.
    Count(usize),
    /// As many knots as the regression tree has leaves.
    Leaves,
}

impl FromStr for MarsKnots {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leaves" | "v" | "|v|" => Ok(MarsKnots::Leaves),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .map(MarsKnots::Count)
                .ok_or_else(|| Error::InvalidParameter(format!("bad knot count '{s}'"))),
        }
    }
}

impl fmt::Display for MarsKnots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarsKnots::Count(t) => write!(f, "{t}"),
            MarsKnots::Leaves => f.write_str("leaves"),
        }
    }
}

/// Everything that defines one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub function: FunctionId,
    pub dim: usize,
    pub fiv: f64,
    pub noise: f64,
    pub surrogate: SurrogateKind,
    pub replication: Replication,
    pub alpha: f64,
    pub budget: usize,
    /// Initial design size; `dim + 1` when unset.
    pub initial_points: Option<usize>,
    pub k_prime: usize,
    /// Candidate pool size; `100 * dim` when unset.
    pub pool_size: Option<usize>,
    pub seed: u64,
    /// Train MARS-family surrogates on every replicate instead of point means.
    pub keep_all: bool,
    pub tree: TreeParams,
    pub mars: MarsParams,
    /// Cap on MARS terms; `max(20, 2 * dim)` when unset.
    pub mars_term_cap: Option<usize>,
    pub mars_knots: MarsKnots,
    pub omega: f64,
    pub eta: f64,
    /// Fixed GP hyperparameters; tuned by cross-validation when unset.
    pub gp: Option<GpParams>,
    pub gp_folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            function: FunctionId::Rosenbrock,
            dim: 30,
            fiv: 0.5,
            noise: 0.0,
            surrogate: SurrogateKind::TkMars,
            replication: Replication::None,
            alpha: 0.05,
            budget: 1000,
            initial_points: None,
            k_prime: 3,
            pool_size: None,
            seed: 0,
            keep_all: false,
            tree: TreeParams::default(),
            mars: MarsParams::default(),
            mars_term_cap: None,
            mars_knots: MarsKnots::Count(20),
            omega: 2.0,
            eta: 1e-4,
            gp: None,
            gp_folds: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn initial_size(&self) -> usize {
        self.initial_points.unwrap_or(self.dim + 1)
    }

    pub fn pool(&self) -> usize {
        self.pool_size.unwrap_or(100 * self.dim)
    }

    pub fn mars_params(&self) -> MarsParams {
        MarsParams {
            term_cap: Some(self.mars_term_cap.unwrap_or((2 * self.dim).max(20))),
            ..self.mars
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if self.k_prime == 0 {
            return bad("k_prime must be positive".into());
        }
        if self.initial_size() == 0 || self.pool() == 0 {
            return bad("design and pool sizes must be positive".into());
        }
        if !(self.omega > 0.0) {
            return bad(format!("omega must be positive, got {}", self.omega));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1), got {}", self.eta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Replication::Fixed(0) | Replication::Smart(0) = self.replication {
            return bad("replication level must be positive".into());
        }
        if let MarsKnots::Count(0) = self.mars_knots {
            return bad("knot count must be positive".into());
        }
        TestFunction::new(self.function, self.dim, self.fiv)?;
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise level must lie in [0, 1), got {}", self.noise));
        }
        Ok(())
    }
}

/// A fitted surrogate of any kind.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Mars(MarsModel),
    TkMars(TkMars),
    Rbf(RbfModel),
    Gp(GpModel),
}

impl Surrogate {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Surrogate::Mars(m) => m.predict(x),
            Surrogate::TkMars(m) => m.model.predict(x),
            Surrogate::Rbf(m) => m.predict(x),
            Surrogate::Gp(m) => m.predict_mean(x),
        }
    }

    pub fn mars(&self) -> Option<&MarsModel> {
        match self {
            Surrogate::Mars(m) => Some(m),
            Surrogate::TkMars(m) => Some(&m.model),
            _ => None,
        }
    }

    /// Tree centroids used to enlarge the candidate pool.
    pub fn centroids(&self) -> Vec<Vec<f64>> {
        match self {
            Surrogate::TkMars(m) => m.centroids.iter().map(|c| c.c.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

/// Fits the configured surrogate; GP hyperparameters must be resolved.
pub fn fit_surrogate(
    config: &ExperimentConfig,
    x: &[Vec<f64>],
    y: &[f64],
    gp: Option<&GpParams>,
) -> Result<Surrogate> {
    match config.surrogate {
        SurrogateKind::Mars => {
            let knots = match config.mars_knots {
                MarsKnots::Count(t) => evenly_spaced_knots(x, t)?,
                MarsKnots::Leaves => {
                    let leaves = fit_tree(x, y, config.tree)?.leaf_count();
                    evenly_spaced_knots(x, leaves)?
                }
            };
            Ok(Surrogate::Mars(fit_mars(x, y, &knots, &config.mars_params())?))
        }
        SurrogateKind::TkMars => Ok(Surrogate::TkMars(fit_tk_mars(
            x,
            y,
            config.tree,
            &config.mars_params(),
        )?)),
        SurrogateKind::Rbf => Ok(Surrogate::Rbf(fit_rbf(x, y, config.omega)?)),
        SurrogateKind::NonRbf => Ok(Surrogate::Rbf(fit_nonrbf(x, y, config.omega, config.eta)?)),
        SurrogateKind::Gp => {
            let params = gp.ok_or_else(|| Error::InvalidParameter("GP hyperparameters".into()))?;
            Ok(Surrogate::Gp(fit_gp(x, y, params)?))
        }
    }
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub trace: Vec<TraceEntry>,
    pub dataset: Dataset,
    /// Number of design points evaluated (the first records of `dataset`).
    pub initial_evaluated: usize,
    pub sigma0: f64,
    pub final_bsms: PointRecord,
    pub final_bsms_true: f64,
    /// Variables used by a surrogate refit on the final data (MARS family).
    pub selected_variables: Option<BTreeSet<usize>>,
    pub iterations: usize,
    /// Iterations where the surrogate could not be fitted and the most
    /// isolated pool point was evaluated instead.
    pub fallbacks: usize,
}

impl RunResult {
    pub fn total_evals(&self) -> usize {
        self.trace.len()
    }

    /// Records created by the optimization loop (after the design).
    pub fn candidates(&self) -> &[PointRecord] {
        &self.dataset.records[self.initial_evaluated..]
    }

    /// Evaluations beyond the first sample of each candidate.
    pub fn extra_replications(&self) -> usize {
        self.candidates().iter().map(|r| r.r() - 1).sum()
    }

    /// Mean samples per candidate; zero when there were none.
    pub fn mean_candidate_replications(&self) -> f64 {
        let c = self.candidates();
        if c.is_empty() {
            0.0
        } else {
            c.iter().map(|r| r.r() as f64).sum::<f64>() / c.len() as f64
        }
    }

    pub fn bsms_true_series(&self) -> Vec<f64> {
        self.trace.iter().map(|e| e.bsms_true).collect()
    }
}

fn training_data(config: &ExperimentConfig, ds: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    if config.keep_all && config.surrogate.is_mars() {
        ds.all_samples()
    } else {
        ds.means()
    }
}

/// Runs the optimizer to budget exhaustion.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let function = TestFunction::new(config.function, config.dim, config.fiv)?;
    let bounds = function.bounds().clone();
    let mut design_rng = stream(config.seed, STREAM_DESIGN);
    let design = lhd(config.initial_size(), &bounds, &mut design_rng)?;
    let mut pool = CandidatePool::new(uniform_pool(config.pool(), &bounds, &mut design_rng)?.points)?;

    // The noise scale comes from the true outputs of the design; the design
    // evaluations themselves are then drawn with that noise.
    let truths = design
        .points
        .iter()
        .map(|x| function.eval(x))
        .collect::<Result<Vec<f64>>>()?;
    let sigma0 = sigma0_from_initial(&truths)?;
    let objective = NoisyObjective::new(
        function,
        config.noise,
        sigma0,
        stream(config.seed, STREAM_NOISE),
    )?;
    let mut state = RunState::new(objective, Budget::new(config.budget)?, config.alpha)?;
    for x in design.points {
        pool.observe(&x);
        if state.sample_new(x)?.is_none() {
            break;
        }
    }
    let initial_evaluated = state.dataset.len();

    let mut gp_params = config.gp;
    let mut gp_retuned = false;
    let mut iterations = 0;
    let mut fallbacks = 0;
    while !state.budget.is_exhausted() {
        iterations += 1;
        let (x, y) = training_data(config, &state.dataset);
        if config.surrogate == SurrogateKind::Gp && config.gp.is_none() {
            let halfway = state.budget.used() * 2 >= config.budget;
            if gp_params.is_none() || (halfway && !gp_retuned) {
                gp_params = tune_gp(&x, &y, config.gp_folds).ok().or(gp_params);
                gp_retuned |= halfway;
            }
        }
        let evaluated: Vec<Vec<f64>> = state.dataset.records.iter().map(|r| r.x.clone()).collect();
        let surrogate = fit_surrogate(config, &x, &y, gp_params.as_ref()).ok();

        let mut chosen = Vec::new();
        for attempt in 0..2 {
            chosen = match &surrogate {
                Some(s) => {
                    let scores = pool.score(&s.centroids(), &evaluated, |p| s.predict(p));
                    eepa_select(&scores, config.k_prime)
                        .into_iter()
                        .map(|i| scores[i].point.to_vec())
                        .collect()
                }
                None => most_isolated(&pool).into_iter().collect(),
            };
            if !chosen.is_empty() || attempt == 1 {
                break;
            }
            // Every pool point has been evaluated: draw a fresh pool.
            let fresh = uniform_pool(config.pool(), &bounds, &mut design_rng)?.points;
            pool.extend(fresh, &evaluated);
        }
        if surrogate.is_none() {
            fallbacks += 1;
        }
        if chosen.is_empty() {
            return Err(Error::FitFailed("no admissible candidate in the pool".into()));
        }
        let created = config.replication.evaluate(&mut state, &chosen)?;
        for &i in &created {
            pool.observe(&state.dataset.records[i].x);
        }
    }

    let selected_variables = if config.surrogate.is_mars() && iterations > 0 {
        let (x, y) = training_data(config, &state.dataset);
        fit_surrogate(config, &x, &y, None)
            .ok()
            .and_then(|s| s.mars().map(MarsModel::selected_variables))
    } else {
        None
    };
    let best = state.dataset.bsms_index().ok_or(Error::Empty("evaluations"))?;
    Ok(RunResult {
        config: config.clone(),
        final_bsms: state.dataset.records[best].clone(),
        final_bsms_true: state.truth(best),
        trace: state.trace,
        dataset: state.dataset,
        initial_evaluated,
        sigma0,
        selected_variables,
        iterations,
        fallbacks,
    })
}

/// Pool point farthest from the evaluated set, if any is not yet evaluated.
fn most_isolated(pool: &CandidatePool) -> Option<Vec<f64>> {
    pool.min_dist()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| pool.points()[i].to_vec())
}

/// Text rows `[eval_index, bsms_true, bsms_mean]`; floats use the shortest
/// representation that parses back to the same value.
pub fn export_trace(trace: &[TraceEntry]) -> Vec<[String; 3]> {
    trace
        .iter()
        .map(|e| {
            [
                e.eval_index.to_string(),
                e.bsms_true.to_string(),
                e.bsms_mean.to_string(),
            ]
        })
        .collect()
}

pub fn import_trace(rows: &[[String; 3]]) -> Result<Vec<TraceEntry>> {
    let bad = |s: &str| Error::InvalidParameter(format!("bad trace field '{s}'"));
    rows.iter()
        .map(|[i, t, m]| {
            Ok(TraceEntry {
                eval_index: i.parse().map_err(|_| bad(i))?,
                bsms_true: t.parse().map_err(|_| bad(t))?,
                bsms_mean: m.parse().map_err(|_| bad(m))?,
            })
        })
        .collect()
}
