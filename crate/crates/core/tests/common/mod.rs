//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use mosco_lab::metric::{DistanceMatrix, GridSpec};

pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in edges {
        if w < d[a][b] {
            d[a][b] = w;
            d[b][a] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// `max |f(x) - f(y)| / d(x, y)` over distinct pairs of `set`, every ordered pair visited.
pub fn lip(f: &[f64], set: &[usize], d: &DistanceMatrix) -> f64 {
    let mut best = 0.0_f64;
    for &x in set {
        for &y in set {
            if x != y {
                best = best.max((f[x] - f[y]).abs() / d.get(x, y));
            }
        }
    }
    best
}

pub fn ball(d: &DistanceMatrix, x: usize, r: f64, closed: bool) -> Vec<usize> {
    (0..d.len())
        .filter(|&y| {
            if closed {
                d.get(x, y) <= r
            } else {
                d.get(x, y) < r
            }
        })
        .collect()
}

pub fn slopes(f: &[f64], d: &DistanceMatrix, r: f64, closed: bool) -> Vec<f64> {
    (0..d.len())
        .map(|x| lip(f, &ball(d, x, r, closed), d))
        .collect()
}

/// `(1/p) sum_x slope(x)^p m(x)` evaluated term by term.
pub fn slope_energy(f: &[f64], d: &DistanceMatrix, m: &[f64], p: f64, r: f64) -> f64 {
    slopes(f, d, r, false)
        .iter()
        .zip(m)
        .map(|(s, w)| s.powf(p) * w)
        .sum::<f64>()
        / p
}

/// Grid edges with weights from `weight(point_a, point_b)`.
pub fn grid_edges(
    grid: &GridSpec,
    weight: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<(usize, usize, f64)> {
    let coords = grid.coords();
    grid.edges()
        .into_iter()
        .map(|(a, b)| (a, b, weight(&coords[a], &coords[b])))
        .collect()
}

/// `sqrt(v^T ((g(a) + g(b)) / 2) v)` for the Heisenberg tensor at penalty `eps`.
pub fn heisenberg_weight(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let g = |p: &[f64]| {
        let t = [0.5 * p[1], -0.5 * p[0], 1.0];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = t[i] * t[j] / (eps * eps) + if i == j && i < 2 { 1.0 } else { 0.0 };
            }
        }
        m
    };
    let (ga, gb) = (g(a), g(b));
    let v = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let mut q = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            q += v[i] * 0.5 * (ga[i][j] + gb[i][j]) * v[j];
        }
    }
    q.sqrt()
}

use mosco_lab::metric::{Measure, MetricMeasureSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random points in the unit cube, distances rescaled so the largest is 1, random weights.
pub fn random_space(n: usize, dim: usize, seed: u64) -> MetricMeasureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            rows[i][j] = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    let top = rows
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for row in &mut rows {
        for v in row.iter_mut() {
            *v /= top;
        }
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    MetricMeasureSpace::new(
        DistanceMatrix::from_rows(&rows).unwrap(),
        Measure::new(weights).unwrap(),
    )
    .unwrap()
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
