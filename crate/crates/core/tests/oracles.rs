use approx::assert_relative_eq;
use rand::Rng as _;
use surropt::cart::Node;
use surropt::replication::t_quantile;
use surropt::seed::rng_from_seed;
use surropt::{
    evenly_spaced_knots, fit_gp, fit_mars, fit_rbf, fit_tree, pareto_front, CandidateScores,
    GpParams, MarsParams, TreeParams,
};

fn random_rows(rng: &mut surropt::seed::Rng, n: usize, d: usize, grid: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if grid {
                        rng.random_range(0..6) as f64
                    } else {
                        rng.random_range(-5.0..10.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn sse(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|y| (y - m).powi(2)).sum()
}

/// Every (variable, midpoint) cut, scored by recomputing both halves.
fn exhaustive_split(x: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for var in 0..x[0].len() {
        let mut values: Vec<f64> = x.iter().map(|r| r[var]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let cut = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<_>, Vec<_>) = (0..y.len()).partition(|&i| x[i][var] < cut);
            let total = sse(&l.iter().map(|&i| y[i]).collect::<Vec<_>>())
                + sse(&r.iter().map(|&i| y[i]).collect::<Vec<_>>());
            if best.is_none_or(|b| total < b.2 - 1e-9 * (1.0 + b.2)) {
                best = Some((var, cut, total));
            }
        }
    }
    best
}

#[test]
fn cart_root_split_matches_exhaustive_search() {
    let mut rng = rng_from_seed(101);
    for case in 0..50 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=3);
        let x = random_rows(&mut rng, n, d, case % 3 == 0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let params = TreeParams {
            minsplit: 2,
            maxdepth: 30,
        };
        let tree = fit_tree(&x, &y, params).unwrap();
        match (exhaustive_split(&x, &y), &tree.nodes()[0]) {
            (Some((var, cut, _)), Node::Split { var: v, value, .. }) => {
                assert_eq!((*v, *value), (var, cut), "case {case}");
            }
            (None, Node::Leaf { .. }) => {}
            (want, got) => panic!("case {case}: oracle {want:?}, tree root {got:?}"),
        }
    }
}

fn dominated(s: &[CandidateScores], i: usize) -> bool {
    s.iter().any(|o| {
        o.predicted <= s[i].predicted
            && o.min_dist >= s[i].min_dist
            && (o.predicted < s[i].predicted || o.min_dist > s[i].min_dist)
    })
}

#[test]
fn pareto_front_matches_pairwise_check() {
    let mut rng = rng_from_seed(202);
    for case in 0..50 {
        let n = rng.random_range(1..=200);
        let grid = case % 2 == 0;
        let scores: Vec<CandidateScores> = (0..n)
            .map(|_| {
                let (p, d) = if grid {
                    (rng.random_range(0..8) as f64, rng.random_range(0..8) as f64)
                } else {
                    (rng.random::<f64>(), rng.random::<f64>())
                };
                CandidateScores {
                    point: vec![rng.random::<f64>()].into(),
                    predicted: p,
                    min_dist: d,
                }
            })
            .collect();
        let want: Vec<usize> = (0..n).filter(|&i| !dominated(&scores, i)).collect();
        assert_eq!(pareto_front(&scores), want, "case {case}");
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - s) / a[row][row];
    }
    out
}

#[test]
fn mars_coefficients_solve_the_normal_equations() {
    for seed in 0..10 {
        let mut rng = rng_from_seed(300 + seed);
        let n = 80;
        let x = random_rows(&mut rng, n, 3, false);
        let y: Vec<f64> = x
            .iter()
            .map(|r| (r[0] - 1.0).abs() * 3.0 + (r[1] * 0.7).sin() * 5.0 + rng.random::<f64>())
            .collect();
        let knots = evenly_spaced_knots(&x, 10).unwrap();
        let model = fit_mars(&x, &y, &knots, &MarsParams::default()).unwrap();
        assert!(!model.basis.is_empty());

        let rows: Vec<Vec<f64>> = x
            .iter()
            .map(|r| std::iter::once(1.0).chain(model.basis.iter().map(|b| b.eval(r))).collect())
            .collect();
        let p = rows[0].len();
        let gram: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..p).map(|j| rows.iter().map(|r| r[i] * r[j]).sum()).collect())
            .collect();
        let rhs: Vec<f64> = (0..p).map(|i| rows.iter().zip(&y).map(|(r, v)| r[i] * v).sum()).collect();
        let beta = solve(gram, rhs);

        let fitted: Vec<f64> = std::iter::once(model.intercept)
            .chain(model.coefficients.iter().copied())
            .collect();
        let scale = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = fitted.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale < 1e-8, "seed {seed}: relative error {}", err / scale);
    }
}

#[test]
fn rbf_interpolates_its_data() {
    let mut rng = rng_from_seed(404);
    for n in [5, 50, 200] {
        let x = random_rows(&mut rng, n, 4, false);
        let y: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + r[0]).collect();
        let model = fit_rbf(&x, &y, 2.0).unwrap();
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, v) in x.iter().zip(&y) {
            assert!((model.predict(r) - v).abs() < 1e-8 * (1.0 + ymax), "n = {n}");
        }
    }
}

fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `P(0 < T < x)` by composite Simpson.
fn t_mass(x: f64, df: f64) -> f64 {
    let c = (ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |t: f64| c * (1.0 + t * t / df).powf(-0.5 * (df + 1.0));
    let m = 4000;
    let h = x / m as f64;
    let mut s = pdf(0.0) + pdf(x);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(k as f64 * h);
    }
    s * h / 3.0
}

fn t_quantile_oracle(p: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if 0.5 + t_mass(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn t_quantiles_match_quadrature() {
    let dfs = (1..=30).chain([100, 1_000_000]);
    for df in dfs {
        for p in [0.9, 0.95, 0.975, 0.995] {
            let got = t_quantile(p, df).unwrap();
            let want = t_quantile_oracle(p, df as f64);
            assert!((got - want).abs() < 1e-3, "df {df}, p {p}: {got} vs {want}");
            assert_eq!(t_quantile(1.0 - p, df).unwrap(), -got);
        }
    }
}

fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, k: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (k0, k1) = ((k + 1) % 3, (k + 2) % 3);
        m[r0][k0] * m[r1][k1] - m[r0][k1] * m[r1][k0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    out
}

#[test]
fn gp_posterior_matches_explicit_inverse() {
    let params = GpParams {
        signal_std: 1.3,
        noise_std: 0.1,
        length_scale: 0.7,
        center: false,
    };
    let x = vec![vec![0.0], vec![0.5], vec![1.5]];
    let y = [0.2, -0.4, 1.1];
    let model = fit_gp(&x, &y, &params).unwrap();

    let k = |a: f64, b: f64| 1.69 * (-0.5 * (a - b) * (a - b) / 0.49).exp();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = k(x[i][0], x[j][0]) + if i == j { 0.01 } else { 0.0 };
        }
    }
    let inv = inverse3(m);
    for q in [-0.3, 0.25, 0.9, 2.0] {
        let ks: Vec<f64> = x.iter().map(|r| k(r[0], q)).collect();
        let w: Vec<f64> = (0..3).map(|i| (0..3).map(|j| inv[i][j] * ks[j]).sum()).collect();
        let mean: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        let var = k(q, q) - w.iter().zip(&ks).map(|(a, b)| a * b).sum::<f64>();
        let (gm, gv) = model.predict(&[q]);
        assert_relative_eq!(gm, mean, epsilon = 1e-10, max_relative = 1e-10);
        assert_relative_eq!(gv, var, epsilon = 1e-10, max_relative = 1e-8);
    }
}
