//! Finite metric measure spaces: validated distance matrices, measures, balls and the
//! snowflake transform.
//!
//! Distances live in a dense row-major [`DistanceMatrix`] whose construction enforces the
//! metric axioms; raw matrices are checked with [`validate_metric`], which reports every
//! violated axiom instead of stopping at the first.

mod family;
mod riemannian;

pub use family::{
    dyadic_schedule, ConvergenceGap, Direction, MonotoneDistanceFamily, MonotoneViolation,
};
pub use riemannian::{
    riemannian_grid_family, shortest_path_metric, GridSpec, HeisenbergTensor, IdentityTensor,
    PenalizedGrushinTensor, TensorField,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Relative triangle-inequality tolerance; the absolute tolerance is this times the largest entry.
pub const TRI_TOL_REL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BallKind {
    #[default]
    Open,
    Closed,
}

impl BallKind {
    #[inline]
    pub fn contains(self, distance: f64, radius: f64) -> bool {
        match self {
            BallKind::Open => distance < radius,
            BallKind::Closed => distance <= radius,
        }
    }
}

impl std::fmt::Display for BallKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BallKind::Open => "open",
            BallKind::Closed => "closed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub kind: BallKind,
    /// Sorted by point index.
    pub members: Vec<usize>,
}

/// One violated metric axiom.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "axiom", rename_all = "snake_case")]
pub enum Violation {
    Asymmetry {
        i: usize,
        j: usize,
        difference: f64,
    },
    NonzeroDiagonal {
        i: usize,
        value: f64,
    },
    NonPositive {
        i: usize,
        j: usize,
        value: f64,
    },
    /// `d(x, y) > d(x, via) + d(via, y) + tol`; only the worst triple is kept, with the
    /// total number of offending ordered triples in `count`.
    Triangle {
        x: usize,
        y: usize,
        via: usize,
        excess: f64,
        count: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricVerdict {
    pub violations: Vec<Violation>,
}

impl MetricVerdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn triangle(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .find(|v| matches!(v, Violation::Triangle { .. }))
    }
}

fn check_axioms(n: usize, get: impl Fn(usize, usize) -> f64) -> MetricVerdict {
    let mut violations = Vec::new();
    let mut max_entry = 0.0_f64;
    for i in 0..n {
        let v = get(i, i);
        if v != 0.0 {
            violations.push(Violation::NonzeroDiagonal { i, value: v });
        }
        for j in 0..n {
            max_entry = max_entry.max(get(i, j).abs());
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (get(i, j), get(j, i));
            if a != b {
                violations.push(Violation::Asymmetry {
                    i,
                    j,
                    difference: a - b,
                });
            }
            if a <= 0.0 {
                violations.push(Violation::NonPositive { i, j, value: a });
            }
            if b <= 0.0 && b != a {
                violations.push(Violation::NonPositive {
                    i: j,
                    j: i,
                    value: b,
                });
            }
        }
    }
    let tol = TRI_TOL_REL * max_entry;
    let mut worst: Option<(usize, usize, usize, f64)> = None;
    let mut count = 0usize;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let direct = get(x, y);
            for via in 0..n {
                if via == x || via == y {
                    continue;
                }
                let excess = direct - (get(x, via) + get(via, y));
                if excess > tol {
                    count += 1;
                    if worst.is_none_or(|w| excess > w.3) {
                        worst = Some((x, y, via, excess));
                    }
                }
            }
        }
    }
    if let Some((x, y, via, excess)) = worst {
        violations.push(Violation::Triangle {
            x,
            y,
            via,
            excess,
            count,
        });
    }
    MetricVerdict { violations }
}

fn check_shape(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(LabError::Malformed(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Malformed(format!(
                "non-finite entry at ({i}, {j})"
            )));
        }
    }
    Ok(n)
}

/// Checks every metric axiom on a raw square matrix.
pub fn validate_metric(rows: &[Vec<f64>]) -> Result<MetricVerdict> {
    let n = check_shape(rows)?;
    Ok(check_axioms(n, |i, j| rows[i][j]))
}

/// Symmetric matrix of pairwise distances satisfying the metric axioms.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates `rows` and stores them. Fails with a domain error listing the violations.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let verdict = validate_metric(rows)?;
        if !verdict.is_ok() {
            return Err(LabError::Domain(format!(
                "not a metric: {}",
                serde_json::to_string(&verdict.violations)?
            )));
        }
        let n = rows.len();
        Ok(Self::from_upper(n, |i, j| rows[i][j]))
    }

    /// Builds the matrix from its strict upper triangle (`i < j`), mirroring it and
    /// zeroing the diagonal. No axiom check.
    pub(crate) fn from_upper(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = entry(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_positive(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn verdict(&self) -> MetricVerdict {
        check_axioms(self.n, |i, j| self.get(i, j))
    }

    pub fn check_point(&self, id: usize) -> Result<()> {
        if id < self.n {
            Ok(())
        } else {
            Err(LabError::Lookup { id, len: self.n })
        }
    }

    /// Members of the ball around `center`, in index order. No argument checks.
    pub fn ball_members(&self, center: usize, radius: f64, kind: BallKind) -> Vec<usize> {
        self.row(center)
            .iter()
            .enumerate()
            .filter(|(_, &d)| kind.contains(d, radius))
            .map(|(y, _)| y)
            .collect()
    }

    pub fn ball(&self, center: usize, radius: f64, kind: BallKind) -> Result<Ball> {
        self.check_point(center)?;
        if !(radius >= 0.0) {
            return Err(LabError::Parameter(format!(
                "ball radius must be >= 0, got {radius}"
            )));
        }
        Ok(Ball {
            center,
            radius,
            kind,
            members: self.ball_members(center, radius, kind),
        })
    }

    /// Distance from `x` to the nearest point of `set`; `+inf` for an empty set.
    pub fn distance_to_set(&self, x: usize, set: &[usize]) -> f64 {
        set.iter()
            .map(|&y| self.get(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// First pair `(i, j)` with `self[i][j] > other[i][j]`, if any.
    pub fn dominated_by(&self, other: &DistanceMatrix) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) > other.get(i, j) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Twice the median nearest-neighbour distance; the default slope scale.
    pub fn default_scale(&self) -> f64 {
        let mut nn: Vec<f64> = (0..self.n)
            .filter_map(|x| {
                self.row(x)
                    .iter()
                    .enumerate()
                    .filter(|&(y, _)| y != x)
                    .map(|(_, &d)| d)
                    .min_by(f64::total_cmp)
            })
            .collect();
        if nn.is_empty() {
            return 1.0;
        }
        nn.sort_by(f64::total_cmp);
        let mid = nn.len() / 2;
        let median = if nn.len() % 2 == 1 {
            nn[mid]
        } else {
            0.5 * (nn[mid - 1] + nn[mid])
        };
        2.0 * median
    }
}

/// Raises every distance to the power `alpha`. Requires all distances `<= 1`, under
/// which the result dominates the input entrywise.
pub fn snowflake_transform(dist: &DistanceMatrix, alpha: f64) -> Result<DistanceMatrix> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::Parameter(format!(
            "snowflake exponent must lie in (0, 1], got {alpha}"
        )));
    }
    let max = dist.max_entry();
    if max > 1.0 {
        return Err(LabError::Domain(format!(
            "snowflake transform needs distances <= 1, largest is {max}"
        )));
    }
    if alpha == 1.0 {
        return Ok(dist.clone());
    }
    Ok(DistanceMatrix::from_upper(dist.len(), |i, j| {
        dist.get(i, j).powf(alpha)
    }))
}

/// Nonnegative point masses with positive total.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measure(Vec<f64>);

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LabError::Domain(format!(
                "measure weight {i} is {} (must be finite and >= 0)",
                weights[i]
            )));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(LabError::Domain("measure has zero total mass".into()));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.0[i]).sum()
    }

    /// `sum_x m(x) * values[x]`, summed left to right.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(m, v)| m * v).sum()
    }
}

/// Finite metric measure space `(X, d, m)`.
#[derive(Clone, Debug)]
pub struct MetricMeasureSpace {
    labels: Vec<String>,
    coords: Option<Vec<Vec<f64>>>,
    dist: DistanceMatrix,
    measure: Measure,
}

impl MetricMeasureSpace {
    pub fn new(dist: DistanceMatrix, measure: Measure) -> Result<Self> {
        if dist.len() != measure.len() {
            return Err(LabError::Shape(format!(
                "{} points but {} measure weights",
                dist.len(),
                measure.len()
            )));
        }
        if dist.is_empty() {
            return Err(LabError::Malformed("empty point set".into()));
        }
        let labels = (0..dist.len()).map(|i| i.to_string()).collect();
        Ok(Self {
            labels,
            coords: None,
            dist,
            measure,
        })
    }

    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.len() != self.len() {
            return Err(LabError::Shape(format!(
                "{} coordinate vectors for {} points",
                coords.len(),
                self.len()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(LabError::Shape(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_measure(mut self, measure: Measure) -> Result<Self> {
        if measure.len() != self.len() {
            return Err(LabError::Shape(format!(
                "{} measure weights for {} points",
                measure.len(),
                self.len()
            )));
        }
        self.measure = measure;
        Ok(self)
    }

    /// Euclidean distances between the given points, uniform probability measure.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(LabError::Shape("points of mixed dimension".into()));
        }
        let dist = DistanceMatrix::from_upper(n, |i, j| euclidean(&points[i], &points[j]));
        if let Some((i, j)) = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .find(|&(i, j)| dist.get(i, j) <= 0.0)
        {
            return Err(LabError::Domain(format!("points {i} and {j} coincide")));
        }
        Self::new(dist, Measure::uniform(n))?.with_coords(points)
    }

    /// `n` equispaced points `k / (n - 1)` on `[0, 1]` with `d = |x - y|`.
    pub fn unit_interval(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::Parameter("need at least one point".into()));
        }
        let denom = (n.max(2) - 1) as f64;
        Self::from_points((0..n).map(|k| vec![k as f64 / denom]).collect())
    }

    /// `n` uniform random points in the unit cube of dimension `dim`, rescaled so the
    /// diameter is exactly 1.
    pub fn random_euclidean<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(LabError::Parameter("need n >= 1 and dim >= 1".into()));
        }
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let mut diam = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                diam = diam.max(euclidean(&raw[i], &raw[j]));
            }
        }
        let scale = if diam > 0.0 { 1.0 / diam } else { 1.0 };
        let points = raw
            .into_iter()
            .map(|p| p.into_iter().map(|c| c * scale).collect())
            .collect();
        let space = Self::from_points(points)?;
        // Clamp the rescaled diameter pair back to exactly 1 if rounding pushed it above.
        if space.dist.max_entry() > 1.0 {
            let dist = DistanceMatrix::from_upper(n, |i, j| space.dist.get(i, j).min(1.0));
            return Ok(Self { dist, ..space });
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn dist(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn ball(&self, center: usize, radius: f64, kind: BallKind) -> Result<Ball> {
        self.dist.ball(center, radius, kind)
    }

    /// Same points and measure, different distance.
    pub fn with_dist(&self, dist: DistanceMatrix) -> Result<Self> {
        if dist.len() != self.len() {
            return Err(LabError::Shape(format!(
                "distance matrix of size {} for {} points",
                dist.len(),
                self.len()
            )));
        }
        Ok(Self {
            dist,
            ..self.clone()
        })
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
