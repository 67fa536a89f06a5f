//! Exploration-exploitation Pareto candidate selection.
//!
//! Every pool point is scored by its surrogate prediction (lower is better)
//! and by its distance to the nearest evaluated point (higher is better). The
//! non-dominated points form the front; the first pick is the front's best
//! prediction, the rest are taken by maximin distance.

use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub point: Arc<[f64]>,
    pub predicted: f64,
    pub min_dist: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Squared Euclidean distance, summed in four lanes.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(u, v)| (u - v) * (u - v)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Distance from `x` to the nearest of `others` (infinite if there are none).
pub fn min_distance(x: &[f64], others: &[Vec<f64>]) -> f64 {
    others.iter().map(|o| euclidean(x, o)).fold(f64::INFINITY, f64::min)
}

fn dominates(a: &CandidateScores, b: &CandidateScores) -> bool {
    a.predicted <= b.predicted
        && a.min_dist >= b.min_dist
        && (a.predicted < b.predicted || a.min_dist > b.min_dist)
}

/// Indices (ascending) of the candidates not dominated by any other.
/// Candidates with identical scores are kept together. Candidates with a
/// non-finite prediction never make the front unless nothing else does.
pub fn pareto_front(scores: &[CandidateScores]) -> Vec<usize> {
    front_of(scores, (0..scores.len()).collect())
}

/// Front of the candidates listed in `members`.
fn front_of(scores: &[CandidateScores], members: Vec<usize>) -> Vec<usize> {
    let finite: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| scores[i].predicted.is_finite())
        .collect();
    let active = if finite.is_empty() { members } else { finite };
    // Anything predicted worse than the most isolated point, or closer than
    // the best predicted point, is dominated by one of them.
    let by_dist = |a: &&usize, b: &&usize| {
        let (a, b) = (&scores[**a], &scores[**b]);
        a.min_dist.total_cmp(&b.min_dist).then(b.predicted.total_cmp(&a.predicted))
    };
    let by_pred = |a: &&usize, b: &&usize| {
        let (a, b) = (&scores[**a], &scores[**b]);
        a.predicted.total_cmp(&b.predicted).then(b.min_dist.total_cmp(&a.min_dist))
    };
    let Some(&far) = active.iter().max_by(by_dist) else {
        return Vec::new();
    };
    let best = *active.iter().min_by(by_pred).expect("nonempty");
    let (pred_cap, dist_floor) = (scores[far].predicted, scores[best].min_dist);
    // (prediction, distance, index), by prediction then distance descending.
    let mut order: Vec<(f64, f64, usize)> = active
        .into_iter()
        .map(|i| (scores[i].predicted, scores[i].min_dist, i))
        .filter(|e| e.0.total_cmp(&pred_cap).is_le() && e.1.total_cmp(&dist_floor).is_ge())
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut front = Vec::new();
    let mut best_dist = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let pred = order[start].0;
        let mut end = start;
        while end < order.len() && order[end].0.total_cmp(&pred).is_eq() {
            end += 1;
        }
        let group_max = order[start].1;
        if group_max > best_dist {
            front.extend(
                order[start..end]
                    .iter()
                    .filter(|e| e.1.total_cmp(&group_max).is_eq())
                    .map(|e| e.2),
            );
        }
        best_dist = best_dist.max(group_max);
        start = end;
    }
    front.sort_unstable();
    front
}

/// Brute-force front used to cross-check [`pareto_front`].
pub fn pareto_front_naive(scores: &[CandidateScores]) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| !(0..scores.len()).any(|j| j != i && dominates(&scores[j], &scores[i])))
        .collect()
}

/// Selects up to `k` candidates (indices into `scores`). Points that coincide
/// with an evaluated point (`min_dist == 0`) are never chosen.
pub fn eepa_select(scores: &[CandidateScores], k: usize) -> Vec<usize> {
    let eligible: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].min_dist > 0.0).collect();
    if k == 0 || eligible.is_empty() {
        return Vec::new();
    }
    let mut front = front_of(scores, eligible);

    let first_pos = (0..front.len())
        .min_by(|&a, &b| {
            scores[front[a]]
                .predicted
                .total_cmp(&scores[front[b]].predicted)
                .then(front[a].cmp(&front[b]))
        })
        .expect("front is nonempty");
    let mut picked = vec![front.remove(first_pos)];
    // Distance of each remaining front point to evaluated and picked points.
    let mut dist: Vec<f64> = front.iter().map(|&i| scores[i].min_dist).collect();
    while picked.len() < k && !front.is_empty() {
        let last = &scores[*picked.last().expect("nonempty")].point;
        for (d, &i) in dist.iter_mut().zip(&front) {
            *d = d.min(euclidean(&scores[i].point, last));
        }
        let (pos, &best) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(front[b.0].cmp(&front[a.0])))
            .expect("front is nonempty");
        if best <= 0.0 {
            break;
        }
        picked.push(front.remove(pos));
        dist.remove(pos);
    }
    picked
}

/// `pool` followed by the members of `extra` not already present (exact
/// coordinate match), in order.
pub fn augment_pool(pool: &[Vec<f64>], extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut seen: HashSet<Vec<u64>> = pool.iter().map(|p| key(p)).collect();
    let mut out = pool.to_vec();
    for p in extra {
        if seen.insert(key(p)) {
            out.push(p.clone());
        }
    }
    out
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

fn key_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// A fixed candidate pool that tracks each member's distance to the
/// evaluated set incrementally.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    points: Vec<Arc<[f64]>>,
    min_dist: Vec<f64>,
}

impl CandidatePool {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("candidate pool"));
        }
        let min_dist = vec![f64::INFINITY; points.len()];
        let points = points.into_iter().map(Arc::from).collect();
        Ok(Self {
            points,
            min_dist,
        })
    }

    pub fn points(&self) -> &[Arc<[f64]>] {
        &self.points
    }

    pub fn min_dist(&self) -> &[f64] {
        &self.min_dist
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds fresh points, scoring their distances against `evaluated`.
    pub fn extend(&mut self, points: Vec<Vec<f64>>, evaluated: &[Vec<f64>]) {
        for p in points {
            self.min_dist.push(min_distance(&p, evaluated));
            self.points.push(p.into());
        }
    }

    /// Records a newly evaluated point.
    pub fn observe(&mut self, x: &[f64]) {
        for (p, d) in self.points.iter().zip(self.min_dist.iter_mut()) {
            *d = d.min(euclidean(p, x));
        }
    }

    /// Scores the pool, plus `extra` points not already in it, against the
    /// evaluated set.
    pub fn score(
        &self,
        extra: &[Vec<f64>],
        evaluated: &[Vec<f64>],
        predict: impl Fn(&[f64]) -> f64,
    ) -> Vec<CandidateScores> {
        let mut out: Vec<CandidateScores> = self
            .points
            .iter()
            .zip(&self.min_dist)
            .map(|(p, &d)| CandidateScores {
                point: Arc::clone(p),
                predicted: predict(p),
                min_dist: d,
            })
            .collect();
        let mut seen = HashSet::new();
        for p in extra {
            let k = key(p);
            if seen.contains(&k) || self.points.iter().any(|q| key_eq(q, p)) {
                continue;
            }
            seen.insert(k);
            out.push(CandidateScores {
                point: p.as_slice().into(),
                predicted: predict(p),
                min_dist: min_distance(p, evaluated),
            });
        }
        out
    }
}
