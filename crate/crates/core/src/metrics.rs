//! Area-under-curve scores of a best-sampled-mean history.
//!
//! Values are normalized to `[0, 1]` between the known optimum and the worst
//! value seen, integrated with the trapezoid rule over evaluations and divided
//! by the number of evaluations. MTFAUC integrates the suffix maximum instead,
//! so a run that later drifts back to worse points is charged for it from the
//! start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Trapezoids with the value before the first evaluation taken equal to
    /// the first value.
    #[default]
    Trapezoid,
    /// Plain average of the values.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    pub values: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
}

impl NormalizedTrace {
    pub fn new(raw: &[f64], f_min: f64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("trace"));
        }
        let f_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = if f_max > f_min {
            raw.iter()
                .map(|v| ((v - f_min) / (f_max - f_min)).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![0.0; raw.len()]
        };
        Ok(Self {
            values,
            f_min,
            f_max,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.f_max <= self.f_min
    }
}

/// `m[i] = max(v[i..])`.
pub fn suffix_max(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

/// Integrates already-normalized values.
pub fn integrate(values: &[f64], quad: Quadrature) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let n = values.len() as f64;
    match quad {
        Quadrature::Sum => values.iter().sum::<f64>() / n,
        Quadrature::Trapezoid => {
            let mut prev = first;
            let mut total = 0.0;
            for &v in values {
                total += 0.5 * (v + prev);
                prev = v;
            }
            total / n
        }
    }
}

/// AUC of the true objective at the best sampled mean after each evaluation.
pub fn auc(bsms_true: &[f64], f_min: f64, quad: Quadrature) -> Result<f64> {
    let t = NormalizedTrace::new(bsms_true, f_min)?;
    if t.is_degenerate() {
        return Ok(0.0);
    }
    Ok(integrate(&t.values, quad))
}

/// AUC of the suffix maximum of the normalized trace.
pub fn mtfauc(bsms_true: &[f64], f_min: f64, quad: Quadrature) -> Result<f64> {
    let t = NormalizedTrace::new(bsms_true, f_min)?;
    if t.is_degenerate() {
        return Ok(0.0);
    }
    Ok(integrate(&suffix_max(&t.values), quad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(integrate(&[1.0; 4], Quadrature::Trapezoid), 1.0);
        assert_eq!(integrate(&[1.0, 0.0, 0.0, 0.0], Quadrature::Trapezoid), 0.375);
        assert_eq!(integrate(&[0.0; 3], Quadrature::Trapezoid), 0.0);
        let v = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(suffix_max(&v), vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(mtfauc(&v, 0.0, Quadrature::Trapezoid).unwrap(), 0.875);
        assert_eq!(auc(&v, 0.0, Quadrature::Trapezoid).unwrap(), 0.625);
        assert_eq!(integrate(&[1.0, 0.0, 1.0, 0.0], Quadrature::Sum), 0.5);
    }

    #[test]
    fn single_entry_and_flat_traces() {
        assert_eq!(auc(&[3.0], 1.0, Quadrature::Trapezoid).unwrap(), 1.0);
        assert_eq!(mtfauc(&[3.0], 1.0, Quadrature::Trapezoid).unwrap(), 1.0);
        assert_eq!(auc(&[2.0, 2.0], 2.0, Quadrature::Trapezoid).unwrap(), 0.0);
        assert!(auc(&[], 0.0, Quadrature::Trapezoid).is_err());
    }

    #[test]
    fn values_below_the_optimum_are_clamped() {
        let t = NormalizedTrace::new(&[4.0, -1.0], 0.0).unwrap();
        assert_eq!(t.values, vec![1.0, 0.0]);
    }
}
