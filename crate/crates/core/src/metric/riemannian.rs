//! Grid-graph realizations of Riemannian metrics penalizing non-horizontal directions.
//! As the penalty parameter shrinks the edge weights grow, so the shortest-path metrics
//! increase level by level.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{Direction, MonotoneDistanceFamily, MONOTONE_SLACK};
use super::{DistanceMatrix, Measure, MetricMeasureSpace};
use crate::error::{LabError, Result};

/// Point-dependent symmetric tensor `g_eps(x)` measuring tangent vectors.
pub trait TensorField: Send + Sync {
    fn dim(&self) -> usize;
    fn tensor(&self, point: &[f64], penalty: f64) -> DMatrix<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct IdentityTensor {
    pub dim: usize,
}

impl TensorField for IdentityTensor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn tensor(&self, _point: &[f64], _penalty: f64) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// `dx^2 + dy^2 + eps^-2 (dz - (x dy - y dx) / 2)^2` on R^3.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeisenbergTensor;

impl TensorField for HeisenbergTensor {
    fn dim(&self) -> usize {
        3
    }

    fn tensor(&self, p: &[f64], penalty: f64) -> DMatrix<f64> {
        let theta = DVector::from_vec(vec![0.5 * p[1], -0.5 * p[0], 1.0]);
        let mut g = DMatrix::zeros(3, 3);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 1.0;
        g + (&theta * theta.transpose()) / (penalty * penalty)
    }
}

/// `dx^2 + dy^2 / (x^2 + eps^2)`, increasing to the Grushin metric as `eps -> 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PenalizedGrushinTensor;

impl TensorField for PenalizedGrushinTensor {
    fn dim(&self) -> usize {
        2
    }

    fn tensor(&self, p: &[f64], penalty: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.0, 1.0 / (p[0] * p[0] + penalty * penalty)],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis.
    pub dims: Vec<usize>,
    pub step: f64,
    /// Connect all `{-1,0,1}^n` neighbours instead of axis neighbours only.
    #[serde(default)]
    pub diagonals: bool,
}

impl GridSpec {
    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(LabError::Parameter(format!(
                "bad grid dims {:?}",
                self.dims
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(LabError::Parameter(format!("bad grid step {}", self.step)));
        }
        Ok(())
    }

    fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (a, &n) in self.dims.iter().enumerate().rev() {
            idx[a] = k % n;
            k /= n;
        }
        idx
    }

    fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for (&i, &n) in idx.iter().zip(&self.dims) {
            if i < 0 || i as usize >= n {
                return None;
            }
            k = k * n + i as usize;
        }
        Some(k)
    }

    /// Coordinates centered at the origin.
    pub fn coords(&self) -> Vec<Vec<f64>> {
        (0..self.num_points())
            .map(|k| {
                self.multi_index(k)
                    .iter()
                    .zip(&self.dims)
                    .map(|(&i, &n)| (i as f64 - (n as f64 - 1.0) / 2.0) * self.step)
                    .collect()
            })
            .collect()
    }

    /// Undirected edges `(p, q)` with `p < q`, in a fixed order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let dim = self.dims.len();
        let offsets: Vec<Vec<i64>> = if self.diagonals {
            let mut all = vec![vec![]];
            for _ in 0..dim {
                all = all
                    .into_iter()
                    .flat_map(|v: Vec<i64>| {
                        (-1..=1).map(move |o| {
                            let mut w = v.clone();
                            w.push(o);
                            w
                        })
                    })
                    .collect();
            }
            // keep lexicographically positive offsets
            all.into_iter()
                .filter(|v| v.iter().find(|&&o| o != 0).is_some_and(|&o| o > 0))
                .collect()
        } else {
            (0..dim)
                .map(|a| (0..dim).map(|b| i64::from(a == b)).collect())
                .collect()
        };
        let mut edges = Vec::new();
        for p in 0..self.num_points() {
            let idx: Vec<i64> = self.multi_index(p).iter().map(|&i| i as i64).collect();
            for off in &offsets {
                let nb: Vec<i64> = idx.iter().zip(off).map(|(a, b)| a + b).collect();
                if let Some(q) = self.flat_index(&nb) {
                    edges.push((p.min(q), p.max(q)));
                }
            }
        }
        edges.sort_unstable();
        edges
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: source,
    });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let cand = d + w;
            if cand < dist[next] {
                dist[next] = cand;
                heap.push(Frontier {
                    dist: cand,
                    node: next,
                });
            }
        }
    }
    dist
}

/// All-pairs shortest-path metric of a weighted undirected graph. Sources run in
/// parallel; entry `(i, j)` with `i < j` always comes from the run at source `i`, so the
/// result does not depend on the schedule.
pub fn shortest_path_metric(n: usize, edges: &[(usize, usize, f64)]) -> Result<DistanceMatrix> {
    let mut adj = vec![Vec::new(); n];
    for &(p, q, w) in edges {
        if p >= n || q >= n {
            return Err(LabError::Lookup {
                id: p.max(q),
                len: n,
            });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(LabError::Domain(format!("edge ({p}, {q}) has weight {w}")));
        }
        adj[p].push((q, w));
        adj[q].push((p, w));
    }
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    if let Some((i, j)) = rows
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|d| d.is_infinite()).map(|j| (i, j)))
    {
        return Err(LabError::Domain(format!(
            "graph is disconnected: no path from {i} to {j}"
        )));
    }
    Ok(DistanceMatrix::from_upper(n, |i, j| rows[i][j]))
}

fn edge_weight(g_p: &DMatrix<f64>, g_q: &DMatrix<f64>, p: &[f64], q: &[f64]) -> f64 {
    let v = DVector::from_iterator(p.len(), q.iter().zip(p).map(|(b, a)| b - a));
    let g = (g_p + g_q) * 0.5;
    (v.transpose() * g * &v)[(0, 0)].sqrt()
}

/// Shortest-path metrics of the grid graph for each penalty in `penalties` (strictly
/// decreasing). The limit is `limit` when given, otherwise the last level.
pub fn riemannian_grid_family(
    grid: &GridSpec,
    tensor: &dyn TensorField,
    penalties: &[f64],
    limit: Option<DistanceMatrix>,
) -> Result<MonotoneDistanceFamily> {
    grid.validate()?;
    if grid.dims.len() != tensor.dim() {
        return Err(LabError::Shape(format!(
            "grid has {} axes, tensor expects {}",
            grid.dims.len(),
            tensor.dim()
        )));
    }
    if penalties.is_empty() || penalties.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(LabError::Parameter(format!(
            "bad penalty schedule {penalties:?}"
        )));
    }
    if penalties.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::Parameter(
            "penalty schedule must be strictly decreasing".into(),
        ));
    }
    let coords = grid.coords();
    let n = coords.len();
    let edges = grid.edges();

    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(penalties.len());
    for &eps in penalties {
        let tensors: Vec<DMatrix<f64>> = coords.iter().map(|p| tensor.tensor(p, eps)).collect();
        for (k, g) in tensors.iter().enumerate() {
            let sym = g.transpose() == *g;
            if !sym || g.clone().cholesky().is_none() {
                return Err(LabError::Generator(format!(
                    "tensor at point {k} (penalty {eps}) is not symmetric positive definite"
                )));
            }
        }
        weights.push(
            edges
                .iter()
                .map(|&(p, q)| edge_weight(&tensors[p], &tensors[q], &coords[p], &coords[q]))
                .collect(),
        );
    }
    for l in 0..weights.len().saturating_sub(1) {
        for (e, &(p, q)) in edges.iter().enumerate() {
            let (before, after) = (weights[l][e], weights[l + 1][e]);
            // the quadratic form sums terms of mixed sign, so rounding can undercut by an ulp
            if after < before * (1.0 - MONOTONE_SLACK) {
                return Err(LabError::Monotonicity {
                    from: p,
                    to: q,
                    level: l,
                    next: l + 1,
                    before,
                    after,
                });
            }
        }
    }

    let levels = weights
        .iter()
        .map(|w| {
            let weighted: Vec<(usize, usize, f64)> =
                edges.iter().zip(w).map(|(&(p, q), &w)| (p, q, w)).collect();
            shortest_path_metric(n, &weighted)
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = match limit {
        Some(l) => l,
        None => levels.last().expect("non-empty schedule").clone(),
    };
    let base = MetricMeasureSpace::new(limit, Measure::uniform(n))?.with_coords(coords)?;
    MonotoneDistanceFamily::new(base, levels, Direction::Increasing)
}
