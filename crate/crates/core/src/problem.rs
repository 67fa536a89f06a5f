//! Benchmark objectives, box bounds, observation noise and the evaluation budget.
//!
//! Every test function only reads its first `m = ceil(fiv * d)` coordinates;
//! the remaining coordinates are inert, which lets the benchmarks measure how
//! well a surrogate screens unimportant variables.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Axis-aligned box `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Empty("bounds"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "bounds for dimension {j} are [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval in every one of `dim` dimensions.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Rejects points of the wrong dimension or outside the box.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (index, (&value, (&lower, &upper))) in
            x.iter().zip(self.lower.iter().zip(&self.upper)).enumerate()
        {
            if !(lower <= value && value <= upper) {
                return Err(Error::OutOfBounds {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }
}

/// The five benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionId {
    Rosenbrock,
    Rastrigin,
    Levy,
    Ackley,
    Zakharov,
}

impl FunctionId {
    pub const ALL: [FunctionId; 5] = [
        FunctionId::Rosenbrock,
        FunctionId::Rastrigin,
        FunctionId::Levy,
        FunctionId::Ackley,
        FunctionId::Zakharov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Rosenbrock => "rosenbrock",
            FunctionId::Rastrigin => "rastrigin",
            FunctionId::Levy => "levy",
            FunctionId::Ackley => "ackley",
            FunctionId::Zakharov => "zakharov",
        }
    }

    /// Per-coordinate search interval.
    pub fn range(self) -> (f64, f64) {
        match self {
            FunctionId::Rosenbrock | FunctionId::Zakharov => (-5.0, 10.0),
            FunctionId::Rastrigin => (-5.12, 5.12),
            FunctionId::Levy => (-10.0, 10.0),
            FunctionId::Ackley => (-32.768, 32.768),
        }
    }

    /// Coordinate value of the global minimizer (identical in every dimension).
    pub fn optimum_coordinate(self) -> f64 {
        match self {
            FunctionId::Rosenbrock | FunctionId::Levy => 1.0,
            // The Ackley formula is minimized at the origin.
            FunctionId::Rastrigin | FunctionId::Ackley | FunctionId::Zakharov => 0.0,
        }
    }

    /// Evaluates the formula on all of `x`.
    fn formula(self, x: &[f64]) -> f64 {
        let m = x.len();
        match self {
            FunctionId::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
                .sum(),
            FunctionId::Rastrigin => {
                10.0 * m as f64
                    + x.iter()
                        .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                        .sum::<f64>()
            }
            FunctionId::Levy => {
                let w = |v: f64| 1.0 + (v - 1.0) / 4.0;
                let first = (PI * w(x[0])).sin().powi(2);
                let middle: f64 = x[..m - 1]
                    .iter()
                    .map(|&v| {
                        let wi = w(v);
                        (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))
                    })
                    .sum();
                let wd = w(x[m - 1]);
                let last = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
                first + middle + last
            }
            FunctionId::Ackley => {
                let n = m as f64;
                let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
                let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            FunctionId::Zakharov => {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                let lin: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| 0.5 * (i + 1) as f64 * v)
                    .sum();
                sq + lin.powi(2) + lin.powi(4)
            }
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        FunctionId::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown function `{s}`")))
    }
}

/// A benchmark function in `dim` dimensions of which only the first
/// `ceil(fiv * dim)` are important.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    id: FunctionId,
    dim: usize,
    fiv: f64,
    important: usize,
    bounds: Bounds,
}

/// Number of important variables for a fraction `fiv` of `dim`.
///
/// Rounds up; the small slack keeps products such as `0.4 * 5` from rounding
/// to the next integer.
pub fn important_count(fiv: f64, dim: usize) -> usize {
    let m = (fiv * dim as f64 - 1e-9).ceil() as usize;
    m.clamp(1, dim)
}

impl TestFunction {
    pub fn new(id: FunctionId, dim: usize, fiv: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(fiv > 0.0 && fiv <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fiv must lie in (0, 1], got {fiv}"
            )));
        }
        let (lo, hi) = id.range();
        Ok(Self {
            id,
            dim,
            fiv,
            important: important_count(fiv, dim),
            bounds: Bounds::uniform(dim, lo, hi)?,
        })
    }

    pub fn id(&self) -> FunctionId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fiv(&self) -> f64 {
        self.fiv
    }

    /// Number of leading coordinates that enter the formula.
    pub fn important_vars(&self) -> usize {
        self.important
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// A global minimizer; unimportant coordinates are set to the same value.
    pub fn minimizer(&self) -> Vec<f64> {
        vec![self.id.optimum_coordinate(); self.dim]
    }

    /// True (noise-free) objective value.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.bounds.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Like [`eval`](Self::eval) without the bounds check.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.id.formula(&x[..self.important])
    }
}

/// Range of the initial design outputs; scales the injected noise.
pub fn sigma0_from_initial(outputs: &[f64]) -> Result<f64> {
    let first = *outputs.first().ok_or(Error::Empty("initial outputs"))?;
    let (lo, hi) = outputs
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// Global count of black-box evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    limit: usize,
    used: usize,
}

impl Budget {
    pub fn new(limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::InvalidParameter("budget must be positive".into()));
        }
        Ok(Self { limit, used: 0 })
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.limit - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used >= self.limit
    }

    /// Charges one evaluation.
    pub fn consume(&mut self) -> Result<()> {
        if self.is_exhausted() {
            return Err(Error::BudgetExhausted { limit: self.limit });
        }
        self.used += 1;
        Ok(())
    }
}

/// A test function observed through additive Gaussian noise with standard
/// deviation `noise_level * sigma0`.
#[derive(Debug, Clone)]
pub struct NoisyObjective {
    function: TestFunction,
    noise_level: f64,
    sigma0: f64,
    rng: Rng,
}

impl NoisyObjective {
    pub fn new(function: TestFunction, noise_level: f64, sigma0: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&noise_level) {
            return Err(Error::InvalidParameter(format!(
                "noise level must lie in [0, 1), got {noise_level}"
            )));
        }
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma0 must be finite and nonnegative, got {sigma0}"
            )));
        }
        Ok(Self {
            function,
            noise_level,
            sigma0,
            rng,
        })
    }

    pub fn function(&self) -> &TestFunction {
        &self.function
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Standard deviation of the additive noise.
    pub fn noise_std(&self) -> f64 {
        self.noise_level * self.sigma0
    }

    pub fn eval_true(&self, x: &[f64]) -> Result<f64> {
        self.function.eval(x)
    }

    /// One noisy observation at `x`, charged to `budget`.
    pub fn eval_noisy(&mut self, x: &[f64], budget: &mut Budget) -> Result<f64> {
        let truth = self.function.eval(x)?;
        budget.consume()?;
        let std = self.noise_std();
        if std == 0.0 {
            return Ok(truth);
        }
        let z: f64 = self.rng.sample(StandardNormal);
        Ok(truth + std * z)
    }
}
