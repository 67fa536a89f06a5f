//! Multivariate adaptive regression splines with pluggable eligible knots.
//!
//! The forward pass adds reflected hinge pairs `[+(x_j - t)]_+`, `[-(x_j - t)]_+`
//! (multiplied by a parent basis when interactions are allowed) that give the
//! largest drop in training SSE. The backward pass then removes one basis
//! function at a time while generalized cross-validation improves.
//!
//! Eligible knots are supplied by the caller: [`evenly_spaced_knots`] gives
//! the classic grid baseline, [`tk_knots`] picks, for every regression-tree
//! leaf and dimension, the member coordinate nearest the leaf centroid.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree, Centroid, RegressionTree, TreeParams};
use crate::error::{Error, Result};

/// Largest admissible condition number of the column-normalized design.
pub const MAX_CONDITION: f64 = 1e10;

/// Columns whose component orthogonal to the current basis is below this
/// fraction of their norm are treated as linearly dependent.
const DEPENDENCE_TOLERANCE: f64 = 1e-10;

/// Number of best-scoring candidates re-scored exactly per forward step.
const EXACT_RESCORE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One truncated linear factor `max(0, s * (x_var - knot))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub var: usize,
    pub knot: f64,
    pub sign: Sign,
}

impl Hinge {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.sign.factor() * (x[self.var] - self.knot)).max(0.0)
    }
}

/// Product of hinges; an empty product is the constant 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BasisFunction {
    pub terms: Vec<Hinge>,
}

impl BasisFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|h| h.eval(x)).product()
    }

    pub fn degree(&self) -> usize {
        self.terms.len()
    }

    fn uses_var(&self, var: usize) -> bool {
        self.terms.iter().any(|h| h.var == var)
    }
}

/// Eligible knot locations, sorted and deduplicated per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knots(Vec<Vec<f64>>);

impl Knots {
    pub fn new(mut per_dim: Vec<Vec<f64>>) -> Self {
        for k in &mut per_dim {
            k.retain(|v| v.is_finite());
            k.sort_by(f64::total_cmp);
            k.dedup();
        }
        Knots(per_dim)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn for_dim(&self, j: usize) -> &[f64] {
        &self.0[j]
    }

    pub fn per_dim(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, var: usize, knot: f64) -> bool {
        self.0[var].iter().any(|k| k.to_bits() == knot.to_bits())
    }
}

/// `t` equally spaced values covering `[lo, hi]`; a degenerate range or
/// `t == 1` yields the single midpoint.
pub fn evenly_spaced(lo: f64, hi: f64, t: usize) -> Vec<f64> {
    if t <= 1 || hi <= lo {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (t - 1) as f64;
    (0..t)
        .map(|k| if k + 1 == t { hi } else { lo + k as f64 * step })
        .collect()
}

/// Classic grid knots spanning the observed range of every dimension.
pub fn evenly_spaced_knots(x: &[Vec<f64>], t: usize) -> Result<Knots> {
    if t == 0 {
        return Err(Error::InvalidParameter("knot count must be positive".into()));
    }
    let first = x.first().ok_or(Error::Empty("knot data"))?;
    let per_dim = (0..first.len())
        .map(|j| {
            let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[j]), hi.max(r[j]))
            });
            evenly_spaced(lo, hi, t)
        })
        .collect();
    Ok(Knots::new(per_dim))
}

/// Tree-derived knots: for each terminal node and dimension, the coordinate of
/// the member closest to the node centroid (ties go to the smallest row index).
pub fn tk_knots(tree: &RegressionTree, x: &[Vec<f64>]) -> Knots {
    let dim = tree.dim();
    let mut per_dim = vec![Vec::new(); dim];
    for (members, centroid) in tree.terminal_nodes().into_iter().zip(tree.centroids(x)) {
        for (j, knots) in per_dim.iter_mut().enumerate() {
            let mut best = members[0];
            let mut best_dist = f64::INFINITY;
            for &k in members {
                let dist = (x[k][j] - centroid.c[j]).abs();
                if dist < best_dist || (dist == best_dist && k < best) {
                    best = k;
                    best_dist = dist;
                }
            }
            knots.push(x[best][j]);
        }
    }
    Knots::new(per_dim)
}

/// Cap on the number of non-constant basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxTerms {
    /// `floor((2n + 3) / 5)` with `n` the number of training rows.
    Formula,
    Fixed(usize),
}

impl MaxTerms {
    pub fn resolve(self, n_rows: usize) -> usize {
        match self {
            MaxTerms::Formula => (2 * n_rows + 3) / 5,
            MaxTerms::Fixed(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarsParams {
    pub max_terms: MaxTerms,
    /// Maximum number of hinge factors in one basis function.
    pub max_interaction: usize,
    /// GCV cost charged per basis function on top of its own parameter.
    pub penalty: f64,
    /// Optional hard ceiling applied after `max_terms` is resolved.
    pub term_cap: Option<usize>,
}

impl Default for MarsParams {
    fn default() -> Self {
        Self {
            max_terms: MaxTerms::Formula,
            max_interaction: 1,
            penalty: 3.0,
            term_cap: None,
        }
    }
}

/// Generalized cross-validation score of a model with `terms` non-constant
/// basis functions; infinite when the effective parameter count reaches `n`.
pub fn gcv(rss: f64, n: usize, terms: usize, penalty: f64) -> f64 {
    let n = n as f64;
    let effective = 1.0 + terms as f64 * (1.0 + penalty);
    if effective >= n {
        return f64::INFINITY;
    }
    (rss / n) / (1.0 - effective / n).powi(2)
}

/// Diagnostics recorded while fitting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    /// Training RSS after each accepted forward step, starting with the
    /// intercept-only model.
    pub forward_rss: Vec<f64>,
    /// GCV of the model before the backward pass and after each removal.
    pub backward_gcv: Vec<f64>,
    /// Forward candidates dropped by the conditioning guard.
    pub rejected_ill_conditioned: usize,
}

/// A fitted additive-or-interaction hinge model.
#[derive(Debug, Clone, PartialEq)]
pub struct MarsModel {
    pub intercept: f64,
    pub basis: Vec<BasisFunction>,
    pub coefficients: Vec<f64>,
    pub max_terms: usize,
    pub knots: Knots,
    pub trace: FitTrace,
    dim: usize,
}

impl MarsModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .basis
                .iter()
                .zip(&self.coefficients)
                .map(|(b, c)| c * b.eval(x))
                .sum::<f64>()
    }

    pub fn predict_checked(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.predict(x))
    }

    /// Dimensions appearing in any surviving basis function.
    pub fn selected_variables(&self) -> BTreeSet<usize> {
        self.basis
            .iter()
            .flat_map(|b| b.terms.iter().map(|h| h.var))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin QR factorization grown one column at a time by modified Gram-Schmidt
/// with one reorthogonalization pass.
#[derive(Debug, Clone)]
struct IncrementalQr {
    q: Vec<Vec<f64>>,
    /// Columns of the upper-triangular factor; `r[c]` has `c + 1` entries.
    r: Vec<Vec<f64>>,
}

impl IncrementalQr {
    fn new() -> Self {
        Self {
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.q.len()
    }

    /// Orthogonal component of `column` and its projection coefficients.
    fn project_out(&self, column: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut v = column.to_vec();
        let mut coeffs = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (qm, cm) in self.q.iter().zip(coeffs.iter_mut()) {
                let d = dot(qm, &v);
                *cm += d;
                v.iter_mut().zip(qm).for_each(|(vi, qi)| *vi -= d * qi);
            }
        }
        (v, coeffs)
    }

    /// Appends `column`; `None` if it is numerically dependent on the basis.
    fn push(&mut self, column: &[f64]) -> Option<()> {
        let scale = norm(column);
        if scale == 0.0 {
            return None;
        }
        let (mut v, mut coeffs) = self.project_out(column);
        let rem = norm(&v);
        if rem <= DEPENDENCE_TOLERANCE * scale {
            return None;
        }
        v.iter_mut().for_each(|vi| *vi /= rem);
        coeffs.push(rem);
        self.q.push(v);
        self.r.push(coeffs);
        Some(())
    }

    fn pop(&mut self) {
        self.q.pop();
        self.r.pop();
    }

    /// Whether the design with unit-norm columns has 2-norm condition number
    /// at most `limit`. A Frobenius-norm upper bound settles most cases
    /// without an SVD.
    fn well_conditioned(&self, limit: f64) -> bool {
        let k = self.len();
        let rinv = self.r_inverse();
        let scales: Vec<f64> = self.r.iter().map(|c| norm(c)).collect();
        let inv_sq: f64 = rinv
            .iter()
            .zip(&scales)
            .map(|(row, s)| s * s * row.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let bound = ((k as f64) * inv_sq).sqrt();
        if bound.is_finite() && bound <= limit {
            return true;
        }
        self.normalized_condition() <= limit
    }

    /// Rows of `R^{-1}`, by back substitution on unit vectors.
    fn r_inverse(&self) -> Vec<Vec<f64>> {
        let k = self.len();
        let mut rinv = vec![vec![0.0; k]; k];
        for c in 0..k {
            for row in (0..=c).rev() {
                let rhs = if row == c { 1.0 } else { 0.0 };
                let tail: f64 = (row + 1..=c).map(|m| self.r[m][row] * rinv[m][c]).sum();
                rinv[row][c] = (rhs - tail) / self.r[row][row];
            }
        }
        rinv
    }

    /// 2-norm condition number of the design with unit-norm columns.
    fn normalized_condition(&self) -> f64 {
        let k = self.r.len();
        if k == 0 {
            return 1.0;
        }
        let mut m = DMatrix::<f64>::zeros(k, k);
        for (c, col) in self.r.iter().enumerate() {
            let scale = norm(col);
            for (row, v) in col.iter().enumerate() {
                m[(row, c)] = v / scale;
            }
        }
        let sv = m.singular_values();
        let (lo, hi) = sv
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Solves `R b = Q^T y`.
    fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let k = self.len();
        let qty: Vec<f64> = self.q.iter().map(|qm| dot(qm, y)).collect();
        let mut b = vec![0.0; k];
        for row in (0..k).rev() {
            let tail: f64 = (row + 1..k).map(|c| self.r[c][row] * b[c]).sum();
            b[row] = (qty[row] - tail) / self.r[row][row];
        }
        b
    }
}

/// Least-squares coefficients of `y` on the given columns (no implicit
/// intercept). Fails when the columns are numerically dependent.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let mut qr = IncrementalQr::new();
    for c in columns {
        qr.push(c)
            .ok_or_else(|| Error::FitFailed("rank-deficient design matrix".into()))?;
    }
    Ok(qr.coefficients(y))
}

#[derive(Debug, Clone)]
struct Candidate {
    score: f64,
    parent: usize,
    var: usize,
    knot: f64,
    plus: bool,
    minus: bool,
}

struct ForwardState<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    knots: &'a Knots,
    params: &'a MarsParams,
    /// Basis functions with the intercept at position 0.
    basis: Vec<BasisFunction>,
    columns: Vec<Vec<f64>>,
    qr: IncrementalQr,
    /// Cached running sums, indexed by parent then variable.
    strips: Vec<Vec<Option<Strip>>>,
    residual: Vec<f64>,
    /// Row indices sorted by each variable.
    order: Vec<Vec<usize>>,
}

impl<'a> ForwardState<'a> {
    fn rss(&self) -> f64 {
        dot(&self.residual, &self.residual)
    }

    fn column_of(&self, basis: &BasisFunction) -> Vec<f64> {
        self.x.iter().map(|r| basis.eval(r)).collect()
    }

    fn child(&self, parent: usize, var: usize, knot: f64, sign: Sign) -> BasisFunction {
        let mut b = self.basis[parent].clone();
        b.terms.push(Hinge { var, knot, sign });
        b
    }

    /// Knots and signs of the hinges on `var` already applied to `parent`.
    fn existing_children(&self, parent: usize, var: usize) -> Vec<(u64, Sign)> {
        let pt = &self.basis[parent].terms;
        self.basis
            .iter()
            .filter(|b| {
                b.terms.len() == pt.len() + 1
                    && b.terms.iter().zip(pt).all(|(a, c)| {
                        a.var == c.var && a.sign == c.sign && a.knot.to_bits() == c.knot.to_bits()
                    })
                    && b.terms[pt.len()].var == var
            })
            .map(|b| (b.terms[pt.len()].knot.to_bits(), b.terms[pt.len()].sign))
            .collect()
    }

    /// Brings the cached running sums up to date with the current basis.
    fn extend_strips(&mut self) {
        let k = self.qr.len();
        while self.strips.len() < self.basis.len() {
            let parent = self.strips.len();
            let pb = &self.basis[parent];
            let weight = &self.columns[parent];
            let strips = (0..self.x[0].len())
                .map(|var| {
                    if pb.degree() >= self.params.max_interaction || pb.uses_var(var) {
                        return None;
                    }
                    Strip::new(self.x, &self.order[var], self.knots.for_dim(var), var, weight)
                })
                .collect();
            self.strips.push(strips);
        }
        let Self {
            x,
            columns,
            qr,
            strips,
            ..
        } = self;
        for (parent, row) in strips.iter_mut().enumerate() {
            for strip in row.iter_mut().flatten() {
                for q in &qr.q[strip.q0.len()..k] {
                    strip.push_column(x, q, &columns[parent]);
                }
            }
        }
    }

    /// Scores every (parent, variable, knot) pair from running sums over the
    /// rows sorted by the variable; each candidate costs O(k) for k columns.
    fn score_candidates(&self) -> Vec<Candidate> {
        let k = self.qr.len();
        let mut out = Vec::new();
        for (parent, row) in self.strips.iter().enumerate() {
            let weight = &self.columns[parent];
            for (var, strip) in row.iter().enumerate() {
                let Some(strip) = strip else { continue };
                let knots = self.knots.for_dim(var);
                let center = strip.center;
                let taken = self.existing_children(parent, var);
                let has = |t: f64, sign: Sign| taken.contains(&(t.to_bits(), sign));
                let tot = strip.totals(self.x, &self.residual, weight, k);
                let mut pre = strip.totals(self.x, &self.residual, weight, 0);
                let mut next = 0;
                for (j, &t) in knots.iter().enumerate() {
                    while next < strip.ends[j] {
                        let i = strip.rows[next];
                        pre.add_scalars(self.x[i][var] - center, weight[i], self.residual[i]);
                        next += 1;
                    }
                    pre.q0.clear();
                    pre.q1.clear();
                    pre.q0.extend(strip.q0.iter().map(|c| c[j]));
                    pre.q1.extend(strip.q1.iter().map(|c| c[j]));
                    let tc = t - center;
                    // Minus side: rows with x <= t, column w * (t - x).
                    let bb_minus = tc * tc * pre.w2 - 2.0 * tc * pre.w2x + pre.w2x2;
                    let eb_minus = tc * pre.e0 - pre.e1;
                    // Plus side: rows with x > t, column w * (x - t).
                    let (w2, w2x, w2x2) =
                        (tot.w2 - pre.w2, tot.w2x - pre.w2x, tot.w2x2 - pre.w2x2);
                    let bb_plus = w2x2 - 2.0 * tc * w2x + tc * tc * w2;
                    let eb_plus = (tot.e1 - pre.e1) - tc * (tot.e0 - pre.e0);

                    // Projections of both columns onto the current basis.
                    let (mut pp, mut mm, mut pm) = (0.0, 0.0, 0.0);
                    for m in 0..k {
                        let qm = tc * pre.q0[m] - pre.q1[m];
                        let qp = (tot.q1[m] - pre.q1[m]) - tc * (tot.q0[m] - pre.q0[m]);
                        pp += qp * qp;
                        mm += qm * qm;
                        pm += qp * qm;
                    }
                    let g_pp = bb_plus - pp;
                    let g_mm = bb_minus - mm;
                    let g_pm = -pm;
                    let plus_ok = bb_plus > 0.0
                        && g_pp > 1e3 * DEPENDENCE_TOLERANCE * bb_plus
                        && !has(t, Sign::Plus);
                    let minus_ok = bb_minus > 0.0
                        && g_mm > 1e3 * DEPENDENCE_TOLERANCE * bb_minus
                        && !has(t, Sign::Minus);

                    let single_p = if plus_ok { eb_plus * eb_plus / g_pp } else { 0.0 };
                    let single_m = if minus_ok { eb_minus * eb_minus / g_mm } else { 0.0 };
                    let det = g_pp * g_mm - g_pm * g_pm;
                    let (score, plus, minus) = if plus_ok && minus_ok && det > 1e-8 * g_pp * g_mm {
                        let s = (eb_plus * eb_plus * g_mm - 2.0 * eb_plus * eb_minus * g_pm
                            + eb_minus * eb_minus * g_pp)
                            / det;
                        (s, true, true)
                    } else if single_p >= single_m {
                        (single_p, plus_ok, false)
                    } else {
                        (single_m, false, minus_ok)
                    };
                    if (plus || minus) && score.is_finite() && score > 0.0 {
                        out.push(Candidate {
                            score,
                            parent,
                            var,
                            knot: t,
                            plus,
                            minus,
                        });
                    }
                }
            }
        }
        out
    }

    /// Appends the candidate's columns if they are independent and keep the
    /// design well conditioned; returns the exact SSE reduction. The state is
    /// left untouched on failure and when `commit` is false.
    fn try_add(&mut self, c: &Candidate, slots: usize, guard: bool, commit: bool) -> Option<f64> {
        let mut new_basis = Vec::new();
        if c.plus {
            new_basis.push(self.child(c.parent, c.var, c.knot, Sign::Plus));
        }
        if c.minus {
            new_basis.push(self.child(c.parent, c.var, c.knot, Sign::Minus));
        }
        let mut added: Vec<(BasisFunction, Vec<f64>)> = Vec::new();
        for b in new_basis {
            if added.len() == slots {
                break;
            }
            let col = self.column_of(&b);
            if self.qr.push(&col).is_some() {
                added.push((b, col));
            }
        }
        let ok = !added.is_empty()
            && self.qr.len() <= self.x.len()
            && (!guard || self.qr.well_conditioned(MAX_CONDITION));
        let gain: f64 = self.qr.q[self.qr.len() - added.len()..]
            .iter()
            .map(|q| dot(q, &self.residual).powi(2))
            .sum();
        if !ok || !commit {
            for _ in 0..added.len() {
                self.qr.pop();
            }
            return ok.then_some(gain);
        }
        for (b, col) in added {
            self.basis.push(b);
            self.columns.push(col);
        }
        // Refresh the residual against the enlarged basis.
        let mut e = self.y.to_vec();
        for q in &self.qr.q {
            let d = dot(q, &e);
            e.iter_mut().zip(q).for_each(|(ei, qi)| *ei -= d * qi);
        }
        self.residual = e;
        Some(gain)
    }
}

/// Rows with nonzero parent weight, sorted by one variable, with running
/// sums of each orthonormal column at every knot.
struct Strip {
    var: usize,
    rows: Vec<usize>,
    center: f64,
    /// `ends[j]` counts the rows with `x <= knots[j]`.
    ends: Vec<usize>,
    /// `q0[m][j]`: sum of `q_m * w` over the first `ends[j]` rows; `q1` also
    /// multiplies by the centered variable.
    q0: Vec<Vec<f64>>,
    q1: Vec<Vec<f64>>,
    t0: Vec<f64>,
    t1: Vec<f64>,
}

impl Strip {
    fn new(x: &[Vec<f64>], order: &[usize], knots: &[f64], var: usize, weight: &[f64]) -> Option<Self> {
        if knots.is_empty() {
            return None;
        }
        let rows: Vec<usize> = order.iter().copied().filter(|&i| weight[i] != 0.0).collect();
        if rows.is_empty() {
            return None;
        }
        // Center the variable to limit cancellation in the expansions.
        let center = rows.iter().map(|&i| x[i][var]).sum::<f64>() / rows.len() as f64;
        let mut ends = Vec::with_capacity(knots.len());
        let mut next = 0;
        for &t in knots {
            while next < rows.len() && x[rows[next]][var] <= t {
                next += 1;
            }
            ends.push(next);
        }
        Some(Self {
            var,
            rows,
            center,
            ends,
            q0: Vec::new(),
            q1: Vec::new(),
            t0: Vec::new(),
            t1: Vec::new(),
        })
    }

    fn push_column(&mut self, x: &[Vec<f64>], q: &[f64], weight: &[f64]) {
        let (mut a, mut b) = (0.0, 0.0);
        let mut c0 = Vec::with_capacity(self.ends.len());
        let mut c1 = Vec::with_capacity(self.ends.len());
        let mut next = 0;
        for &end in self.ends.iter().chain(std::iter::once(&self.rows.len())) {
            while next < end {
                let i = self.rows[next];
                let qw = q[i] * weight[i];
                a += qw;
                b += qw * (x[i][self.var] - self.center);
                next += 1;
            }
            c0.push(a);
            c1.push(b);
        }
        self.t0.push(c0.pop().expect("total entry"));
        self.t1.push(c1.pop().expect("total entry"));
        self.q0.push(c0);
        self.q1.push(c1);
    }

    /// Sums over all rows (`k` columns), or empty sums when `k` is zero.
    fn totals(&self, x: &[Vec<f64>], residual: &[f64], weight: &[f64], k: usize) -> Sums {
        let mut s = Sums {
            q0: Vec::with_capacity(self.q0.len()),
            q1: Vec::with_capacity(self.q0.len()),
            w2: 0.0,
            w2x: 0.0,
            w2x2: 0.0,
            e0: 0.0,
            e1: 0.0,
        };
        if k == 0 {
            return s;
        }
        for &i in &self.rows {
            s.add_scalars(x[i][self.var] - self.center, weight[i], residual[i]);
        }
        s.q0.extend_from_slice(&self.t0[..k]);
        s.q1.extend_from_slice(&self.t1[..k]);
        s
    }
}

struct Sums {
    q0: Vec<f64>,
    q1: Vec<f64>,
    w2: f64,
    w2x: f64,
    w2x2: f64,
    e0: f64,
    e1: f64,
}

impl Sums {
    fn add_scalars(&mut self, xc: f64, w: f64, residual: f64) {
        let w2 = w * w;
        self.w2 += w2;
        self.w2x += w2 * xc;
        self.w2x2 += w2 * xc * xc;
        let ew = residual * w;
        self.e0 += ew;
        self.e1 += ew * xc;
    }
}

/// Fits a MARS model restricted to the given eligible knots.
pub fn fit_mars(x: &[Vec<f64>], y: &[f64], knots: &Knots, params: &MarsParams) -> Result<MarsModel> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "MARS needs at least 2 rows, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let dim = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: row.len(),
        });
    }
    if knots.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: knots.dim(),
        });
    }
    if knots.total() == 0 {
        return Err(Error::Empty("eligible knots"));
    }
    if params.max_interaction == 0 {
        return Err(Error::InvalidParameter("interaction order must be positive".into()));
    }
    let max_terms = params
        .max_terms
        .resolve(n)
        .min(params.term_cap.unwrap_or(usize::MAX));

    let mut st = ForwardState {
        x,
        y,
        knots,
        params,
        basis: vec![BasisFunction::default()],
        columns: vec![vec![1.0; n]],
        qr: IncrementalQr::new(),
        strips: Vec::new(),
        residual: y.to_vec(),
        order: (0..dim)
            .map(|j| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]));
                o
            })
            .collect(),
    };
    st.qr.push(&st.columns[0]).expect("constant column is nonzero");
    let mean = y.iter().sum::<f64>() / n as f64;
    st.residual = y.iter().map(|v| v - mean).collect();
    let tss = st.rss();

    let mut trace = FitTrace {
        forward_rss: vec![tss],
        ..FitTrace::default()
    };
    let floor = 1e-12 * tss;

    while st.basis.len() - 1 < max_terms && tss > 0.0 {
        let slots = max_terms - (st.basis.len() - 1);
        st.extend_strips();
        let mut cands = st.score_candidates();
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| b.score.total_cmp(&a.score));

        // Re-score the front runners exactly, then take the best one that
        // passes the conditioning guard.
        let mut exact: Vec<(f64, usize)> = Vec::new();
        let mut tried = 0;
        for (idx, c) in cands.iter().enumerate() {
            if tried == EXACT_RESCORE {
                break;
            }
            let lead = exact.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
            if !exact.is_empty() && c.score < 0.5 * lead {
                break;
            }
            tried += 1;
            if let Some(gain) = st.try_add(c, slots, false, false) {
                exact.push((gain, idx));
            }
        }
        exact.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut best = None;
        for &(gain, idx) in &exact {
            if st.try_add(&cands[idx], slots, true, false).is_some() {
                best = Some((gain, idx));
                break;
            }
            trace.rejected_ill_conditioned += 1;
        }
        if best.is_none() {
            // Every front runner failed the guard: fall back to the first
            // admissible candidate further down the list.
            for (idx, c) in cands.iter().enumerate().skip(tried) {
                if let Some(gain) = st.try_add(c, slots, true, false) {
                    best = Some((gain, idx));
                    break;
                }
                trace.rejected_ill_conditioned += 1;
            }
        }
        let Some((gain, idx)) = best else { break };
        if gain <= floor {
            break;
        }
        st.try_add(&cands[idx], slots, true, true);
        trace.forward_rss.push(st.rss());
    }

    let ForwardState {
        basis, columns, qr, ..
    } = st;
    let (basis, columns, gcvs) = backward_pass(basis, columns, &qr, y, params.penalty);
    trace.backward_gcv = gcvs;

    let coeffs = least_squares(&columns, y)?;
    Ok(MarsModel {
        intercept: coeffs[0],
        basis: basis[1..].to_vec(),
        coefficients: coeffs[1..].to_vec(),
        max_terms,
        knots: knots.clone(),
        trace,
        dim,
    })
}

type Pruned = (Vec<BasisFunction>, Vec<Vec<f64>>, Vec<f64>);

/// Removes one basis function at a time (never the intercept), picking the
/// removal with the lowest GCV, while that lowers GCV. A model whose GCV is
/// undefined (too many parameters) is always pruned further.
/// Upper-triangular least-squares factor `R b = z` that supports deleting a
/// column in `O(k^2)`.
struct Triangular {
    /// Row-major; `r[i][j]` is meaningful for `j >= i`.
    r: Vec<Vec<f64>>,
    z: Vec<f64>,
    rss: f64,
}

impl Triangular {
    #[cfg(test)]
    fn from_columns(columns: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let mut qr = IncrementalQr::new();
        for c in columns {
            qr.push(c)
                .ok_or_else(|| Error::FitFailed("rank-deficient design matrix".into()))?;
        }
        Ok(Self::from_qr(&qr, y))
    }

    fn from_qr(qr: &IncrementalQr, y: &[f64]) -> Self {
        let k = qr.len();
        let mut r = vec![vec![0.0; k]; k];
        for (c, col) in qr.r.iter().enumerate() {
            for (row, v) in col.iter().enumerate() {
                r[row][c] = *v;
            }
        }
        let z: Vec<f64> = qr.q.iter().map(|q| dot(q, y)).collect();
        let mut e = y.to_vec();
        for (q, d) in qr.q.iter().zip(&z) {
            e.iter_mut().zip(q).for_each(|(ei, qi)| *ei -= d * qi);
        }
        let rss = dot(&e, &e);
        Self { r, z, rss }
    }

    fn len(&self) -> usize {
        self.z.len()
    }

    fn coefficients(&self) -> Vec<f64> {
        let k = self.len();
        let mut b = vec![0.0; k];
        for row in (0..k).rev() {
            let tail: f64 = (row + 1..k).map(|c| self.r[row][c] * b[c]).sum();
            b[row] = (self.z[row] - tail) / self.r[row][row];
        }
        b
    }

    /// Diagonal of `(X^T X)^{-1} = R^{-1} R^{-T}`.
    fn inverse_gram_diagonal(&self) -> Vec<f64> {
        let k = self.len();
        let mut rinv = vec![vec![0.0; k]; k];
        for c in 0..k {
            for row in (0..=c).rev() {
                let rhs = if row == c { 1.0 } else { 0.0 };
                let tail: f64 = (row + 1..=c).map(|m| self.r[row][m] * rinv[m][c]).sum();
                rinv[row][c] = (rhs - tail) / self.r[row][row];
            }
        }
        rinv.iter().map(|row| row.iter().map(|v| v * v).sum()).collect()
    }

    /// Deletes column `j` and restores triangular form with Givens rotations.
    fn remove(&mut self, j: usize) {
        let k = self.len();
        for row in &mut self.r {
            row.remove(j);
        }
        for c in j..k - 1 {
            let (a, b) = (self.r[c][c], self.r[c + 1][c]);
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (cs, sn) = (a / h, b / h);
            for m in c..k - 1 {
                let (u, v) = (self.r[c][m], self.r[c + 1][m]);
                self.r[c][m] = cs * u + sn * v;
                self.r[c + 1][m] = -sn * u + cs * v;
            }
            let (u, v) = (self.z[c], self.z[c + 1]);
            self.z[c] = cs * u + sn * v;
            self.z[c + 1] = -sn * u + cs * v;
        }
        self.r.pop();
        let dropped = self.z.pop().expect("nonempty factor");
        self.rss += dropped * dropped;
    }
}

/// Prunes terms by GCV. `qr` must factor `columns` in order.
fn backward_pass(
    mut basis: Vec<BasisFunction>,
    mut columns: Vec<Vec<f64>>,
    qr: &IncrementalQr,
    y: &[f64],
    penalty: f64,
) -> Pruned {
    let n = y.len();
    let mut history = Vec::new();
    let mut tri = Triangular::from_qr(qr, y);
    loop {
        let beta = tri.coefficients();
        let rss = tri.rss;
        let terms = columns.len() - 1;
        let current = gcv(rss, n, terms, penalty);
        history.push(current);
        if terms == 0 {
            break;
        }
        let diag = tri.inverse_gram_diagonal();
        let (drop, increase) = (1..columns.len())
            .map(|j| (j, beta[j] * beta[j] / diag[j]))
            .fold((0, f64::INFINITY), |best, cand| {
                if cand.1 < best.1 {
                    cand
                } else {
                    best
                }
            });
        let candidate = gcv(rss + increase, n, terms - 1, penalty);
        if current.is_finite() && candidate >= current {
            break;
        }
        basis.remove(drop);
        columns.remove(drop);
        tri.remove(drop);
    }
    (basis, columns, history)
}

/// MARS on tree-derived knots, together with the tree and its centroids.
#[derive(Debug, Clone)]
pub struct TkMars {
    pub tree: RegressionTree,
    pub centroids: Vec<Centroid>,
    pub model: MarsModel,
}

pub fn fit_tk_mars(
    x: &[Vec<f64>],
    y: &[f64],
    tree_params: TreeParams,
    params: &MarsParams,
) -> Result<TkMars> {
    let tree = fit_tree(x, y, tree_params)?;
    let knots = tk_knots(&tree, x);
    let centroids = tree.centroids(x);
    let model = fit_mars(x, y, &knots, params)?;
    Ok(TkMars {
        tree,
        centroids,
        model,
    })
}
