//! Greedy binary regression trees (CART) used to partition the evaluated
//! points before knot selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest SSE reduction that justifies a split.
const SPLIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// A node needs at least this many members to be considered for splitting.
    pub minsplit: usize,
    pub maxdepth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            minsplit: 20,
            maxdepth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        var: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        members: Vec<usize>,
        value: f64,
    },
}

/// A fitted tree; nodes live in an arena with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    dim: usize,
    n_samples: usize,
    params: TreeParams,
}

/// Mean of the members of one terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub node_id: usize,
    pub c: Vec<f64>,
}

/// Best split of a set of members.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub var: usize,
    pub value: f64,
    pub sse: f64,
}

pub const TIE_TOLERANCE: f64 = 1e-10;

fn sse_of(y: &[f64], members: &[usize]) -> (f64, f64) {
    let n = members.len() as f64;
    let mean = members.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = members.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    (mean, sse)
}

/// SSE-minimizing (variable, midpoint) split of `members`, scanning variables
/// in increasing order and cutpoints in increasing order. SSEs within
/// `TIE_TOLERANCE` of the node's total sum of squares count as ties, which
/// the incumbent wins.
pub fn best_split(x: &[Vec<f64>], y: &[f64], members: &[usize]) -> Option<SplitChoice> {
    let n = members.len();
    if n < 2 {
        return None;
    }
    let dim = x[members[0]].len();
    let (mean, _) = sse_of(y, members);
    let mut order = members.to_vec();
    let mut best: Option<SplitChoice> = None;
    for var in 0..dim {
        order.sort_by(|&a, &b| x[a][var].total_cmp(&x[b][var]).then(a.cmp(&b)));
        // Centered prefix sums keep the SSE differences accurate.
        let (total, total_sq) = order.iter().fold((0.0, 0.0), |(s, q), &i| {
            let v = y[i] - mean;
            (s + v, q + v * v)
        });
        let (mut s, mut q) = (0.0, 0.0);
        for k in 1..n {
            let v = y[order[k - 1]] - mean;
            s += v;
            q += v * v;
            let (lo, hi) = (x[order[k - 1]][var], x[order[k]][var]);
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let left = (q - s * s / nl).max(0.0);
            let right = ((total_sq - q) - (total - s).powi(2) / nr).max(0.0);
            let sse = left + right;
            if best.is_none_or(|b| sse < b.sse - TIE_TOLERANCE * total_sq) {
                best = Some(SplitChoice {
                    var,
                    value: 0.5 * (lo + hi),
                    sse,
                });
            }
        }
    }
    best
}

/// Grows a tree by recursive binary splitting.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Result<RegressionTree> {
    if x.is_empty() {
        return Err(Error::Empty("tree training data"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
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

    let mut nodes = Vec::new();
    grow(x, y, (0..x.len()).collect(), 0, params, &mut nodes);
    Ok(RegressionTree {
        nodes,
        dim,
        n_samples: x.len(),
        params,
    })
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    members: Vec<usize>,
    depth: usize,
    params: TreeParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let (mean, sse) = sse_of(y, &members);
    let split = if members.len() >= params.minsplit.max(2) && depth < params.maxdepth {
        best_split(x, y, &members).filter(|s| sse - s.sse > SPLIT_TOLERANCE)
    } else {
        None
    };
    let Some(split) = split else {
        nodes.push(Node::Leaf {
            members,
            value: mean,
        });
        return id;
    };

    nodes.push(Node::Leaf {
        members: Vec::new(),
        value: mean,
    });
    let (left_members, right_members): (Vec<usize>, Vec<usize>) = members
        .into_iter()
        .partition(|&i| x[i][split.var] <= split.value);
    let left = grow(x, y, left_members, depth + 1, params, nodes);
    let right = grow(x, y, right_members, depth + 1, params, nodes);
    nodes[id] = Node::Split {
        var: split.var,
        value: split.value,
        left,
        right,
    };
    id
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    /// Leaf node ids in left-to-right order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { .. } => out.push(id),
                Node::Split { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Member index sets of the terminal nodes; a partition of the training rows.
    pub fn terminal_nodes(&self) -> Vec<&[usize]> {
        self.leaf_ids()
            .into_iter()
            .map(|id| match &self.nodes[id] {
                Node::Leaf { members, .. } => members.as_slice(),
                Node::Split { .. } => unreachable!("leaf_ids yields leaves"),
            })
            .collect()
    }

    /// Coordinate-wise mean of every terminal node, computed from the rows the
    /// tree was fitted on.
    pub fn centroids(&self, x: &[Vec<f64>]) -> Vec<Centroid> {
        self.leaf_ids()
            .into_iter()
            .map(|id| {
                let Node::Leaf { members, .. } = &self.nodes[id] else {
                    unreachable!("leaf_ids yields leaves")
                };
                let mut c = vec![0.0; self.dim];
                for &i in members {
                    for (cj, xj) in c.iter_mut().zip(&x[i]) {
                        *cj += xj;
                    }
                }
                let n = members.len() as f64;
                c.iter_mut().for_each(|v| *v /= n);
                Centroid { node_id: id, c }
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    var,
                    value,
                    left,
                    right,
                } => id = if x[*var] <= *value { *left } else { *right },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&v| vec![v]).collect()
    }

    fn params(minsplit: usize) -> TreeParams {
        TreeParams {
            minsplit,
            maxdepth: 30,
        }
    }

    /// Direct two-pass SSE of every candidate split.
    fn brute_force_root(x: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64)> {
        let n = x.len();
        let m = y.iter().sum::<f64>() / n as f64;
        let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let mut best: Option<(usize, f64, f64)> = None;
        for var in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[var]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let cut = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| x[i][var] <= cut);
                let sse = |idx: &[usize]| {
                    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                    idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
                };
                let total = sse(&l) + sse(&r);
                if best.is_none_or(|b| total < b.2 - TIE_TOLERANCE * tss) {
                    best = Some((var, cut, total));
                }
            }
        }
        best
    }

    #[test]
    fn constant_response_gives_a_single_leaf() {
        let x = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let tree = fit_tree(&x, &[3.0; 5], params(2)).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.predict(&[10.0]), 3.0);
        assert_eq!(tree.terminal_nodes(), vec![&[0, 1, 2, 3, 4][..]]);
    }

    #[test]
    fn step_data_splits_between_one_and_two() {
        let x = one_d(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let tree = fit_tree(&x, &y, params(2)).unwrap();
        match &tree.nodes()[0] {
            Node::Split { var, value, .. } => {
                assert_eq!(*var, 0);
                assert_eq!(*value, 1.5);
            }
            other => panic!("root is {other:?}"),
        }
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree.predict(&[0.5]), 0.0);
        assert_eq!(tree.predict(&[2.5]), 10.0);
        assert_eq!(tree.terminal_nodes(), vec![&[0, 1][..], &[2, 3][..]]);
        let c: Vec<Vec<f64>> = tree.centroids(&x).into_iter().map(|c| c.c).collect();
        assert_eq!(c, vec![vec![0.5], vec![2.5]]);
    }

    #[test]
    fn centroid_is_the_member_mean() {
        let x = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let tree = fit_tree(&x, &[1.0, 1.0], params(2)).unwrap();
        assert_eq!(tree.centroids(&x)[0].c, vec![1.0, 1.0]);
        let single = vec![vec![4.0, -1.0]];
        let tree = fit_tree(&single, &[2.0], params(2)).unwrap();
        assert_eq!(tree.centroids(&single)[0].c, vec![4.0, -1.0]);
    }

    #[test]
    fn minsplit_blocks_small_nodes() {
        let x = one_d(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(fit_tree(&x, &y, params(5)).unwrap().leaf_count(), 1);
        let shallow = TreeParams {
            minsplit: 2,
            maxdepth: 0,
        };
        assert_eq!(fit_tree(&x, &y, shallow).unwrap().leaf_count(), 1);
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(matches!(
            fit_tree(&[], &[], TreeParams::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        let mut rng = rng_from_seed(77);
        for _ in 0..50 {
            let n = rng.random_range(2..=50);
            let d = rng.random_range(1..=3);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let members: Vec<usize> = (0..n).collect();
            let got = best_split(&x, &y, &members).unwrap();
            let want = brute_force_root(&x, &y).unwrap();
            assert_eq!((got.var, got.value), (want.0, want.1), "n={n} sse {} vs {}", got.sse, want.2);
        }
    }

    proptest! {
        #[test]
        fn leaves_partition_and_predict_their_means(
            rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -20.0f64..20.0), 1..80),
            minsplit in 2usize..25,
            maxdepth in 0usize..8,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let tree = fit_tree(&x, &y, TreeParams { minsplit, maxdepth }).unwrap();
            prop_assert!(tree.depth() <= maxdepth);

            let mut seen = vec![0usize; x.len()];
            for leaf in tree.terminal_nodes() {
                let mean = leaf.iter().map(|&i| y[i]).sum::<f64>() / leaf.len() as f64;
                for &i in leaf {
                    seen[i] += 1;
                    prop_assert!((tree.predict(&x[i]) - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));

            let sse_tree: f64 = (0..x.len()).map(|i| (y[i] - tree.predict(&x[i])).powi(2)).sum();
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let sse_root: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            prop_assert!(sse_tree <= sse_root + 1e-9);
        }
    }
}
