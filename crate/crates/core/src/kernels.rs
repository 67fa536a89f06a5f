//! Kernel surrogates: multiquadric RBF (interpolating and ridge-smoothed) and
//! Gaussian-process regression with a squared-exponential kernel.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::squared_distance;

/// Averages the responses of rows with bit-identical coordinates, keeping the
/// first-seen order of the distinct rows.
pub fn collapse_duplicates(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (row, &v) in x.iter().zip(y) {
        let key: Vec<u64> = row.iter().map(|c| c.to_bits()).collect();
        match index.get(&key) {
            Some(&k) => {
                sums[k].0 += v;
                sums[k].1 += 1;
            }
            None => {
                index.insert(key, points.len());
                points.push(row.clone());
                sums.push((v, 1));
            }
        }
    }
    let means = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (points, means)
}

fn check_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    let first = x.first().ok_or(Error::Empty("training data"))?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = first.len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: row.len(),
        });
    }
    Ok(d)
}


/// Multiquadric `sqrt(r^2 + omega^2)`.
pub fn multiquadric(r2: f64, omega: f64) -> f64 {
    (r2 + omega * omega).sqrt()
}

/// Polynomial tail appended to the RBF expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tail {
    Constant,
    Linear,
}

impl Tail {
    fn width(self, d: usize) -> usize {
        match self {
            Tail::Constant => 1,
            Tail::Linear => d + 1,
        }
    }
}

/// `sum_i lambda_i * phi(|x - x_i|) + p(x)` with a multiquadric `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfModel {
    pub centers: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// `[c_0, c_1, .., c_d]` for a linear tail, `[c_0]` for a constant one.
    pub poly: Vec<f64>,
    pub tail: Tail,
    pub omega: f64,
    /// Diagonal ridge; zero for the interpolant.
    pub mu: f64,
}

impl RbfModel {
    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let radial: f64 = self
            .centers
            .iter()
            .zip(&self.lambda)
            .map(|(c, l)| l * multiquadric(squared_distance(x, c), self.omega))
            .sum();
        radial + self.poly_value(x)
    }

    pub fn predict_checked(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict(x))
    }

    fn poly_value(&self, x: &[f64]) -> f64 {
        self.poly[0] + self.poly[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Squared semi-norm `sum_i lambda_i * s(x_i)`, which equals
    /// `lambda^T Phi lambda` under the side conditions.
    pub fn semi_norm_sq(&self) -> f64 {
        self.centers
            .iter()
            .zip(&self.lambda)
            .map(|(c, l)| l * self.predict(c))
            .sum()
    }
}

/// Interpolating multiquadric RBF with a linear tail. Duplicate rows are
/// averaged first.
pub fn fit_rbf(x: &[Vec<f64>], y: &[f64], omega: f64) -> Result<RbfModel> {
    fit_ridge_rbf(x, y, omega, 0.0)
}

/// Smoothed multiquadric RBF minimizing `eta |S|^2 + (1 - eta) |e|^2`.
///
/// With `e = s(X) - y` and `s(X) = Phi lambda + P c`, setting the gradient of
/// the weighted objective to zero under `P^T lambda = 0` gives
/// `eta Phi lambda + (1 - eta) Phi e = 0`, solved by `e = -mu lambda` with
/// `mu = eta / (1 - eta)`. Substituting back yields the interpolation system
/// with `mu` added to the diagonal of `Phi`.
pub fn fit_nonrbf(x: &[Vec<f64>], y: &[f64], omega: f64, eta: f64) -> Result<RbfModel> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    fit_ridge_rbf(x, y, omega, eta / (1.0 - eta))
}

/// `eta |S|^2 + (1 - eta) |e|^2` for given coefficients on the data.
pub fn nonrbf_objective(model: &RbfModel, x: &[Vec<f64>], y: &[f64], eta: f64) -> f64 {
    let sse: f64 = x.iter().zip(y).map(|(r, v)| (model.predict(r) - v).powi(2)).sum();
    eta * model.semi_norm_sq() + (1.0 - eta) * sse
}

fn fit_ridge_rbf(x: &[Vec<f64>], y: &[f64], omega: f64, mu: f64) -> Result<RbfModel> {
    check_data(x, y)?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let (x, y) = collapse_duplicates(x, y);
    let d = x[0].len();
    // The linear tail needs an affinely spanning set of centers; fall back to a
    // constant tail when the data cannot support it.
    let tails: &[Tail] = if x.len() > d {
        &[Tail::Linear, Tail::Constant]
    } else {
        &[Tail::Constant]
    };
    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &tail in tails {
        if let Some((lambda, poly)) = solve_augmented(&x, &y, omega, mu, tail, scale) {
            return Ok(RbfModel {
                centers: x,
                lambda,
                poly,
                tail,
                omega,
                mu,
            });
        }
    }
    Err(Error::FitFailed("singular RBF system".into()))
}

fn solve_augmented(
    x: &[Vec<f64>],
    y: &[f64],
    omega: f64,
    mu: f64,
    tail: Tail,
    scale: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let q = tail.width(x[0].len());
    let size = n + q;
    let mut a = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for k in 0..=i {
            let v = multiquadric(squared_distance(&x[i], &x[k]), omega);
            a[(i, k)] = v;
            a[(k, i)] = v;
        }
        a[(i, i)] += mu;
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        if tail == Tail::Linear {
            for (j, &v) in x[i].iter().enumerate() {
                a[(i, n + 1 + j)] = v;
                a[(n + 1 + j, i)] = v;
            }
        }
    }
    let mut b = DVector::<f64>::zeros(size);
    b.rows_mut(0, n).copy_from_slice(y);

    let lu = a.clone().full_piv_lu();
    let mut z = lu.solve(&b)?;
    // One step of iterative refinement.
    let r = &b - &a * &z;
    z += lu.solve(&r)?;
    let res = (&b - &a * &z).amax();
    if !z.iter().all(|v| v.is_finite()) || res > 1e-9 * scale {
        return None;
    }
    Some((z.rows(0, n).iter().copied().collect(), z.rows(n, q).iter().copied().collect()))
}

/// Squared-exponential GP hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    /// Prior standard deviation of the latent function.
    pub signal_std: f64,
    /// Standard deviation of the observation noise.
    pub noise_std: f64,
    pub length_scale: f64,
    /// Use the training mean as the prior mean instead of zero.
    pub center: bool,
}

impl GpParams {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_std.powi(2) * (-0.5 * squared_distance(a, b) / self.length_scale.powi(2)).exp()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.signal_std > 0.0
            && self.noise_std >= 0.0
            && self.length_scale > 0.0
            && [self.signal_std, self.noise_std, self.length_scale]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("GP hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub x: Vec<Vec<f64>>,
    /// `(K + noise^2 I)^{-1} (y - offset)`.
    pub alpha: Vec<f64>,
    pub params: GpParams,
    pub offset: f64,
    chol: Cholesky<f64, Dyn>,
}

impl GpModel {
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|r| self.params.kernel(r, x)));
        let mean = self.offset + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = self.chol.l().solve_lower_triangular(&k).expect("nonsingular factor");
        let var = self.params.kernel(x, x) - v.norm_squared();
        (mean, var.max(0.0))
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .x
            .iter()
            .zip(&self.alpha)
            .map(|(r, a)| a * self.params.kernel(r, x))
            .sum();
        self.offset + s
    }

    pub fn predict_checked(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict(x))
    }
}

/// GP posterior for noisy observations. Duplicate rows are averaged first.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], params: &GpParams) -> Result<GpModel> {
    check_data(x, y)?;
    params.validate()?;
    let (x, y) = collapse_duplicates(x, y);
    let n = x.len();
    let offset = if params.center {
        y.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = params.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += params.noise_std.powi(2);
    }
    let chol = match Cholesky::new(k.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-10 * k.trace();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            Cholesky::new(k).ok_or_else(|| {
                Error::FitFailed("GP covariance is not positive definite".into())
            })?
        }
    };
    let rhs = DVector::from_iterator(n, y.iter().map(|v| v - offset));
    let alpha = chol.solve(&rhs).iter().copied().collect();
    Ok(GpModel {
        x,
        alpha,
        params: *params,
        offset,
        chol,
    })
}

/// Picks GP hyperparameters by k-fold cross-validated squared error over a
/// logarithmic grid scaled to the data: length scales around the median
/// pairwise distance, noise levels relative to the response spread. Folds
/// are formed by row index modulo `folds`.
pub fn tune_gp(x: &[Vec<f64>], y: &[f64], folds: usize) -> Result<GpParams> {
    check_data(x, y)?;
    let (x, y) = collapse_duplicates(x, y);
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let spread = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let signal = if spread > 0.0 { spread } else { 1.0 };

    let mut dists: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..i {
            dists.push(squared_distance(&x[i], &x[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists.get(dists.len() / 2).copied().filter(|v| *v > 0.0).unwrap_or(1.0);

    let base = GpParams {
        signal_std: signal,
        noise_std: 0.1 * signal,
        length_scale: median,
        center: true,
    };
    let folds = folds.clamp(2, n.max(2));
    if n < folds {
        return Ok(base);
    }
    let mut best = (f64::INFINITY, base);
    for ls in [0.125, 0.25, 0.5, 1.0, 2.0, 4.0] {
        for noise in [0.01, 0.1, 1.0] {
            let p = GpParams {
                length_scale: ls * median,
                noise_std: noise * signal,
                ..base
            };
            let mut err = 0.0;
            for f in 0..folds {
                let (mut xt, mut yt, mut xv, mut yv) = (vec![], vec![], vec![], vec![]);
                for i in 0..n {
                    if i % folds == f {
                        xv.push(x[i].clone());
                        yv.push(y[i]);
                    } else {
                        xt.push(x[i].clone());
                        yt.push(y[i]);
                    }
                }
                err += match fit_gp(&xt, &yt, &p) {
                    Ok(m) => xv.iter().zip(&yv).map(|(r, v)| (m.predict_mean(r) - v).powi(2)).sum(),
                    Err(_) => f64::INFINITY,
                };
            }
            if err < best.0 {
                best = (err, p);
            }
        }
    }
    Ok(best.1)
}
