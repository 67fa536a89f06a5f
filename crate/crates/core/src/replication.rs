//! Evaluation policies under noise: a single sample per point, a fixed number
//! of replications, or replication driven by Student-t confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::problem::{Budget, NoisyObjective};

/// Inverse CDF of Student's t distribution with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability {p} outside (0, 1)")));
    }
    if df == 0 {
        return Err(Error::InvalidParameter("degrees of freedom must be positive".into()));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

/// All noisy observations of one point and their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero with fewer than two samples.
    pub std: f64,
    pub ci_low: f64,
    pub ci_up: f64,
}

impl PointRecord {
    pub fn new(x: Vec<f64>, first: f64, alpha: f64) -> Self {
        let mut rec = Self {
            x,
            samples: Vec::new(),
            mean: 0.0,
            std: 0.0,
            ci_low: f64::NEG_INFINITY,
            ci_up: f64::INFINITY,
        };
        rec.push(first, alpha);
        rec
    }

    pub fn r(&self) -> usize {
        self.samples.len()
    }

    /// Appends a sample and updates the statistics. The running mean stays
    /// exact when every sample is the same value.
    pub fn push(&mut self, sample: f64, alpha: f64) {
        self.samples.push(sample);
        let r = self.samples.len();
        let n = r as f64;
        self.mean = if r == 1 { sample } else { self.mean + (sample - self.mean) / n };
        if r < 2 {
            self.std = 0.0;
            self.ci_low = f64::NEG_INFINITY;
            self.ci_up = f64::INFINITY;
            return;
        }
        let ss: f64 = self.samples.iter().map(|v| (v - self.mean).powi(2)).sum();
        self.std = (ss / (n - 1.0)).sqrt();
        let t = t_quantile(1.0 - alpha / 2.0, r - 1).expect("valid alpha and df");
        let half = t * self.std / n.sqrt();
        self.ci_low = self.mean - half;
        self.ci_up = self.mean + half;
    }
}

/// Evaluated points with their replication records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<PointRecord>,
    bsms: Option<usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the best sampled mean solution (smallest mean, ties to the
    /// smallest index).
    pub fn bsms_index(&self) -> Option<usize> {
        self.bsms
    }

    pub fn bsms(&self) -> Option<&PointRecord> {
        self.bsms.map(|i| &self.records[i])
    }

    fn refresh_bsms(&mut self) {
        self.bsms = self
            .records
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
    }

    /// Per-point inputs and sampled means.
    pub fn means(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            self.records.iter().map(|r| r.x.clone()).collect(),
            self.records.iter().map(|r| r.mean).collect(),
        )
    }

    /// Every replicate as its own row.
    pub fn all_samples(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in &self.records {
            for &s in &r.samples {
                x.push(r.x.clone());
                y.push(s);
            }
        }
        (x, y)
    }

    pub fn total_samples(&self) -> usize {
        self.records.iter().map(PointRecord::r).sum()
    }
}

/// One line of the best-sampled-mean history, written after every black-box
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval_index: usize,
    /// True objective at the current best sampled mean solution.
    pub bsms_true: f64,
    /// Sampled mean at the current best sampled mean solution.
    pub bsms_mean: f64,
}

/// Mutable state of one run: the objective, its budget, the data gathered so
/// far and the evaluation history.
#[derive(Debug, Clone)]
pub struct RunState {
    pub objective: NoisyObjective,
    pub budget: Budget,
    pub dataset: Dataset,
    pub trace: Vec<TraceEntry>,
    pub alpha: f64,
    /// True objective per record, used only for reporting.
    truths: Vec<f64>,
}

impl RunState {
    pub fn new(objective: NoisyObjective, budget: Budget, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(Self {
            objective,
            budget,
            dataset: Dataset::new(),
            trace: Vec::new(),
            alpha,
            truths: Vec::new(),
        })
    }

    pub fn truth(&self, record: usize) -> f64 {
        self.truths[record]
    }

    fn record_trace(&mut self) {
        let best = self.dataset.bsms_index().expect("at least one record");
        self.trace.push(TraceEntry {
            eval_index: self.budget.used(),
            bsms_true: self.truths[best],
            bsms_mean: self.dataset.records[best].mean,
        });
    }

    /// Evaluates a new point once; `None` when the budget is exhausted.
    pub fn sample_new(&mut self, x: Vec<f64>) -> Result<Option<usize>> {
        if self.budget.is_exhausted() {
            return Ok(None);
        }
        let value = self.objective.eval_noisy(&x, &mut self.budget)?;
        let truth = self.objective.eval_true(&x)?;
        self.dataset.records.push(PointRecord::new(x, value, self.alpha));
        self.truths.push(truth);
        self.dataset.refresh_bsms();
        self.record_trace();
        Ok(Some(self.dataset.len() - 1))
    }

    /// Draws one more sample of an existing record; `false` when the budget
    /// is exhausted.
    pub fn sample_again(&mut self, record: usize) -> Result<bool> {
        if self.budget.is_exhausted() {
            return Ok(false);
        }
        let value = {
            let x = &self.dataset.records[record].x;
            self.objective.eval_noisy(x, &mut self.budget)?
        };
        self.dataset.records[record].push(value, self.alpha);
        self.dataset.refresh_bsms();
        self.record_trace();
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "r")]
pub enum Replication {
    None,
    /// Every candidate is sampled exactly `r` times.
    Fixed(usize),
    /// Candidates are resampled while their interval overlaps the best one,
    /// at most `r_max` extra times.
    Smart(usize),
}

impl Replication {
    pub fn name(self) -> &'static str {
        match self {
            Replication::None => "none",
            Replication::Fixed(_) => "fixed",
            Replication::Smart(_) => "smart",
        }
    }

    /// `r` or `r_max`; zero for no replication.
    pub fn level(self) -> usize {
        match self {
            Replication::None => 0,
            Replication::Fixed(r) | Replication::Smart(r) => r,
        }
    }

    /// Evaluates the candidates under this policy. Returns the indices of the
    /// records created; the batch is cut short when the budget runs out.
    pub fn evaluate(self, state: &mut RunState, candidates: &[Vec<f64>]) -> Result<Vec<usize>> {
        match self {
            Replication::None => evaluate_no_replication(state, candidates),
            Replication::Fixed(r) => evaluate_fixed_replication(state, candidates, r),
            Replication::Smart(r_max) => evaluate_smart_replication(state, candidates, r_max),
        }
    }
}

pub fn evaluate_no_replication(state: &mut RunState, candidates: &[Vec<f64>]) -> Result<Vec<usize>> {
    let mut created = Vec::new();
    for x in candidates {
        match state.sample_new(x.clone())? {
            Some(i) => created.push(i),
            None => break,
        }
    }
    Ok(created)
}

pub fn evaluate_fixed_replication(
    state: &mut RunState,
    candidates: &[Vec<f64>],
    r: usize,
) -> Result<Vec<usize>> {
    if r == 0 {
        return Err(Error::InvalidParameter("replication count must be positive".into()));
    }
    let mut created = Vec::new();
    'batch: for x in candidates {
        let Some(i) = state.sample_new(x.clone())? else {
            break;
        };
        created.push(i);
        for _ in 1..r {
            if !state.sample_again(i)? {
                break 'batch;
            }
        }
    }
    Ok(created)
}

/// Upper interval limit of the current best point; a single sample stands in
/// for its own bound.
fn best_upper(state: &RunState) -> f64 {
    match state.dataset.bsms() {
        Some(rec) if rec.r() >= 2 => rec.ci_up,
        Some(rec) => rec.mean,
        None => f64::INFINITY,
    }
}

pub fn evaluate_smart_replication(
    state: &mut RunState,
    candidates: &[Vec<f64>],
    r_max: usize,
) -> Result<Vec<usize>> {
    if r_max == 0 {
        return Err(Error::InvalidParameter("r_max must be positive".into()));
    }
    // The threshold comes from the best point before the batch.
    let mut threshold = best_upper(state);
    let created = evaluate_no_replication(state, candidates)?;
    for &i in &created {
        loop {
            let rec = &state.dataset.records[i];
            if !(rec.ci_low < threshold && rec.r() <= r_max) {
                break;
            }
            if !state.sample_again(i)? {
                return Ok(created);
            }
        }
        threshold = best_upper(state);
    }
    Ok(created)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{FunctionId, TestFunction};
    use crate::seed::rng_from_seed;
    use rand::Rng as _;

    fn state(noise: f64, limit: usize, seed: u64) -> RunState {
        let f = TestFunction::new(FunctionId::Rosenbrock, 2, 1.0).unwrap();
        let obj = NoisyObjective::new(f, noise, 10.0, rng_from_seed(seed)).unwrap();
        RunState::new(obj, Budget::new(limit).unwrap(), 0.05).unwrap()
    }

    #[test]
    fn median_of_t_is_zero() {
        for df in [1, 3, 50] {
            assert_eq!(t_quantile(0.5, df).unwrap(), 0.0);
        }
        assert!((t_quantile(0.975, 9).unwrap() - 2.2622).abs() < 1e-3);
        assert!(t_quantile(1.0, 3).is_err());
        assert!(t_quantile(0.9, 0).is_err());
    }

    #[test]
    fn two_sample_statistics() {
        let mut r = PointRecord::new(vec![0.0], 3.0, 0.05);
        assert!(r.ci_low.is_infinite() && r.ci_up.is_infinite());
        r.push(5.0, 0.05);
        assert_eq!(r.mean, 4.0);
        assert!((r.std - 2f64.sqrt()).abs() < 1e-15);
        let mut c = PointRecord::new(vec![0.0], 7.0, 0.05);
        c.push(7.0, 0.05);
        c.push(7.0, 0.05);
        assert_eq!((c.std, c.ci_low, c.ci_up), (0.0, 7.0, 7.0));
    }

    #[test]
    fn streaming_matches_batch() {
        let mut rng = rng_from_seed(10);
        let xs: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut r = PointRecord::new(vec![], xs[0], 0.05);
        for &v in &xs[1..] {
            r.push(v, 0.05);
        }
        let mean = xs.iter().sum::<f64>() / 10.0;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0;
        assert!((r.mean - mean).abs() < 1e-14);
        assert!((r.std - var.sqrt()).abs() < 1e-14);
        let half = t_quantile(0.975, 9).unwrap() * var.sqrt() / 10f64.sqrt();
        assert!((r.ci_up - mean - half).abs() < 1e-12);
    }

    #[test]
    fn no_replication_uses_one_sample_each() {
        let mut s = state(0.0, 10, 0);
        let p = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        evaluate_no_replication(&mut s, &p).unwrap();
        assert_eq!(s.budget.used(), 3);
        assert_eq!(s.trace.len(), 3);
        assert_eq!(s.dataset.bsms_index(), Some(1));
        assert_eq!(s.dataset.records[0].mean, 1.0);
    }

    #[test]
    fn fixed_replication_counts() {
        let mut s = state(0.0, 100, 0);
        let p = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        evaluate_fixed_replication(&mut s, &p, 5).unwrap();
        assert_eq!(s.budget.used(), 15);
        assert!(s.dataset.records.iter().all(|r| r.r() == 5 && r.std == 0.0));
    }

    #[test]
    fn budget_cuts_batches_short() {
        let mut s = state(0.1, 7, 1);
        let p = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        let created = evaluate_fixed_replication(&mut s, &p, 5).unwrap();
        assert_eq!(created.len(), 2);
        assert_eq!(s.budget.used(), 7);
        assert_eq!(s.trace.len(), 7);
    }

    #[test]
    fn smart_stops_worse_candidates_after_two_samples() {
        let mut s = state(0.0, 100, 0);
        s.sample_new(vec![1.0, 1.0]).unwrap();
        evaluate_smart_replication(&mut s, &[vec![0.0, 0.0]], 10).unwrap();
        assert_eq!(s.dataset.records[1].r(), 2);
    }

    #[test]
    fn smart_replicates_better_candidates_to_the_cap() {
        let mut s = state(0.0, 100, 0);
        s.sample_new(vec![0.0, 0.0]).unwrap();
        evaluate_smart_replication(&mut s, &[vec![1.0, 1.0]], 10).unwrap();
        assert_eq!(s.dataset.records[1].r(), 11);
        // With a cap of one the loop runs once.
        let mut s = state(0.0, 100, 0);
        s.sample_new(vec![0.0, 0.0]).unwrap();
        evaluate_smart_replication(&mut s, &[vec![1.0, 1.0], vec![2.0, 2.0]], 1).unwrap();
        assert!(s.dataset.records[1..].iter().all(|r| r.r() == 2));
    }

    #[test]
    fn fixed_replication_shrinks_mean_variance() {
        let var_of = |r: usize| {
            let means: Vec<f64> = (0..1000)
                .map(|seed| {
                    let mut s = state(0.1, 100, seed);
                    evaluate_fixed_replication(&mut s, &[vec![0.0, 0.0]], r).unwrap();
                    s.dataset.records[0].mean
                })
                .collect();
            let m = means.iter().sum::<f64>() / 1000.0;
            means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0
        };
        // Noise std 1: the mean of r samples has variance 1/r.
        let (v1, v5) = (var_of(1), var_of(5));
        assert!((v1 - 1.0).abs() < 0.15, "{v1}");
        assert!((v5 - 0.2).abs() < 0.03, "{v5}");
    }

    #[test]
    fn intervals_cover_at_the_nominal_rate() {
        let mut hits = 0;
        for seed in 0..10_000 {
            let mut s = state(0.1, 100, seed);
            evaluate_fixed_replication(&mut s, &[vec![0.0, 0.0]], 10).unwrap();
            let r = &s.dataset.records[0];
            if r.ci_low <= 1.0 && 1.0 <= r.ci_up {
                hits += 1;
            }
        }
        let rate = hits as f64 / 1e4;
        assert!((rate - 0.95).abs() < 0.02, "{rate}");
    }

    #[test]
    fn bsms_tracks_the_minimum_mean() {
        let mut s = state(0.2, 200, 3);
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let p: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random_range(-5.0..10.0), rng.random_range(-5.0..10.0)])
                .collect();
            evaluate_smart_replication(&mut s, &p, 5).unwrap();
            let best = s.dataset.bsms_index().unwrap();
            let min = s.dataset.records.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
            assert_eq!(s.dataset.records[best].mean, min);
            assert!(s.dataset.records.iter().all(|r| (1..=6).contains(&r.r())));
        }
        assert_eq!(s.budget.used(), s.dataset.total_samples());
        assert_eq!(s.trace.len(), s.budget.used());
    }
}
