//! Initial space-filling designs and the random candidate pool.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Bounds;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    LatinHypercube,
    UniformRandom,
}

/// A set of points inside a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub points: Vec<Vec<f64>>,
    pub bounds: Bounds,
    pub kind: DesignKind,
}

impl Design {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Latin hypercube of `n` points: along every axis each of the `n` equal-width
/// strata holds exactly one point, placed uniformly within its stratum.
/// Strata are paired across dimensions by independent random permutations.
pub fn lhd(n: usize, bounds: &Bounds, rng: &mut Rng) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidParameter("design size must be positive".into()));
    }
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        let (lo, hi) = (bounds.lower()[j], bounds.upper()[j]);
        for (point, &k) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            let v = lo + (k as f64 + u) / n as f64 * (hi - lo);
            point[j] = v.clamp(lo, hi);
        }
    }
    Ok(Design {
        points,
        bounds: bounds.clone(),
        kind: DesignKind::LatinHypercube,
    })
}

/// `size` i.i.d. uniform points in the box.
pub fn uniform_pool(size: usize, bounds: &Bounds, rng: &mut Rng) -> Result<Design> {
    if size == 0 {
        return Err(Error::InvalidParameter("pool size must be positive".into()));
    }
    let points = (0..size).map(|_| uniform_point(bounds, rng)).collect();
    Ok(Design {
        points,
        bounds: bounds.clone(),
        kind: DesignKind::UniformRandom,
    })
}

pub(crate) fn uniform_point(bounds: &Bounds, rng: &mut Rng) -> Vec<f64> {
    bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(&lo, &hi)| {
            let u: f64 = rng.random();
            lo + u * (hi - lo)
        })
        .collect()
}
