//! Lipschitz constants on subsets, fixed-scale slope fields, and the cone-max
//! approximation of a Lipschitz function by functions Lipschitz for a smaller distance.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::metric::{BallKind, Direction, DistanceMatrix, MonotoneDistanceFamily};

/// Relative slack on Lipschitz-bound comparisons that hold exactly in real arithmetic.
pub const LIP_SLACK: f64 = 1e-12;

/// A real value per point.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..n).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize) -> f64 {
        self.0[x]
    }

    /// Points where the value is nonzero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&x| self.0[x] != 0.0).collect()
    }

    pub fn sup_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self(self.0.iter().map(|v| lambda * v).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `max_{x in set} |self(x) - other(x)|`.
    pub fn max_gap_on(&self, other: &Self, set: &[usize]) -> f64 {
        set.iter()
            .map(|&x| (self.0[x] - other.0[x]).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `lip_constant` evaluated at a fixed scale around every point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeField {
    pub scale: f64,
    pub kind: BallKind,
    pub values: Vec<f64>,
}

impl SlopeField {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[inline]
fn lip_on(values: &[f64], set: &[usize], d: &DistanceMatrix) -> f64 {
    let mut best = 0.0_f64;
    for (a, &x) in set.iter().enumerate() {
        let fx = values[x];
        let row = d.row(x);
        for &y in &set[a + 1..] {
            if x == y {
                continue;
            }
            let ratio = (fx - values[y]).abs() / row[y];
            if ratio > best {
                best = ratio;
            }
        }
    }
    best
}

/// `max |f(x) - f(y)| / d(x, y)` over distinct pairs of `set`; 0 when `set` has fewer
/// than two points.
pub fn lip_constant(f: &ScalarField, set: &[usize], d: &DistanceMatrix) -> Result<f64> {
    if f.len() != d.len() {
        return Err(LabError::Shape(format!(
            "field has {} values, space has {} points",
            f.len(),
            d.len()
        )));
    }
    for &x in set {
        d.check_point(x)?;
    }
    Ok(lip_on(f.values(), set, d))
}

/// Global Lipschitz constant over all points.
pub fn lip_global(f: &ScalarField, d: &DistanceMatrix) -> f64 {
    let all: Vec<usize> = (0..d.len()).collect();
    lip_on(f.values(), &all, d)
}

pub(crate) fn slope_values(values: &[f64], d: &DistanceMatrix, r: f64, kind: BallKind) -> Vec<f64> {
    (0..d.len())
        .into_par_iter()
        .map(|x| lip_on(values, &d.ball_members(x, r, kind), d))
        .collect()
}

/// Lipschitz constant of `f` on the ball of radius `r` around each point.
pub fn slope_field(
    f: &ScalarField,
    d: &DistanceMatrix,
    r: f64,
    kind: BallKind,
) -> Result<SlopeField> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(LabError::Parameter(format!(
            "slope scale must be > 0, got {r}"
        )));
    }
    if f.len() != d.len() {
        return Err(LabError::Shape(format!(
            "field has {} values, space has {} points",
            f.len(),
            d.len()
        )));
    }
    Ok(SlopeField {
        scale: r,
        kind,
        values: slope_values(f.values(), d, r, kind),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeMonotonicity {
    /// One field per level followed by the limit field.
    pub fields: Vec<SlopeField>,
    /// Smallest `larger - smaller` over all compared (level, point) pairs.
    pub worst_margin: f64,
}

/// Slope fields at every level of `family` and at its limit, checked to move monotonically
/// opposite to the distances: larger distances give smaller slopes.
pub fn slope_monotonicity_check(
    f: &ScalarField,
    family: &MonotoneDistanceFamily,
    r: f64,
    kind: BallKind,
) -> Result<SlopeMonotonicity> {
    let fields = family
        .chain()
        .map(|d| slope_field(f, d, r, kind))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = f64::INFINITY;
    for (l, w) in fields.windows(2).enumerate() {
        // the field computed with the larger distance must not exceed the other one
        let (big, small) = match family.direction() {
            Direction::Increasing => (&w[0], &w[1]),
            Direction::Decreasing => (&w[1], &w[0]),
        };
        for x in 0..big.values.len() {
            let margin = big.values[x] - small.values[x];
            let slack = LIP_SLACK * big.values[x].abs();
            if margin < -slack {
                return Err(LabError::invariant(
                    "lipschitz",
                    format!(
                        "slope order broken between levels {l} and {} at point {x}",
                        l + 1
                    ),
                    margin,
                ));
            }
            worst = worst.min(margin);
        }
    }
    Ok(SlopeMonotonicity {
        fields,
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
    })
}

/// `max_j (f(x_j) - L d(x, x_j)) - 1/n` at every point.
pub fn cone_lower_approx(
    f: &ScalarField,
    anchors: &[usize],
    lip: f64,
    n: u64,
    d: &DistanceMatrix,
) -> Result<ScalarField> {
    if anchors.is_empty() {
        return Err(LabError::Parameter("empty anchor list".into()));
    }
    if n == 0 {
        return Err(LabError::Parameter(
            "cone offset count n must be >= 1".into(),
        ));
    }
    if !(lip >= 0.0 && lip.is_finite()) {
        return Err(LabError::Parameter(format!("bad Lipschitz bound {lip}")));
    }
    let local = lip_constant(f, anchors, d)?;
    if lip < local {
        warn!(
            "cone bound {lip} is below the anchor Lipschitz constant {local}; result may exceed f"
        );
    }
    Ok(cones(f.values(), anchors, lip, n, d))
}

fn cones(values: &[f64], anchors: &[usize], lip: f64, n: u64, d: &DistanceMatrix) -> ScalarField {
    let offset = 1.0 / n as f64;
    ScalarField::from_fn(d.len(), |x| {
        let row = d.row(x);
        anchors
            .iter()
            .map(|&a| values[a] - lip * row[a])
            .fold(f64::NEG_INFINITY, f64::max)
            - offset
    })
}

/// Outcome of [`approx_lipschitz`].
#[derive(Clone, Debug, Serialize)]
pub struct LipschitzApprox {
    /// Zero-based level index into the family.
    pub level: usize,
    pub field: ScalarField,
    pub n: u64,
    /// `max_K |g - f|`.
    pub gap: f64,
    /// Global Lipschitz constant of `g` under the chosen level.
    pub lip: f64,
    /// Global Lipschitz constant of `f` under the limit distance.
    pub lip_bound: f64,
    pub eps: f64,
}

/// The cone offset count used by [`approx_lipschitz`]: the smallest `n` with `1/n <= eps/2`.
pub fn offset_count(eps: f64) -> u64 {
    (2.0 / eps).ceil().max(1.0) as u64
}

/// Finds the first level `i` of `family` at which the cone approximation of `f` with
/// anchors `k` and the limit Lipschitz constant is within `eps` of `f` on `k`.
pub fn approx_lipschitz(
    f: &ScalarField,
    k: &[usize],
    eps: f64,
    family: &MonotoneDistanceFamily,
) -> Result<LipschitzApprox> {
    approx_lipschitz_from(f, k, eps, family, 0)
}

/// As [`approx_lipschitz`], scanning only levels `>= min_level`.
pub fn approx_lipschitz_from(
    f: &ScalarField,
    k: &[usize],
    eps: f64,
    family: &MonotoneDistanceFamily,
    min_level: usize,
) -> Result<LipschitzApprox> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LabError::Parameter(format!("eps must be > 0, got {eps}")));
    }
    if k.is_empty() {
        return Err(LabError::Parameter("empty compact set".into()));
    }
    let lim = family.limit();
    let lip_bound = lip_constant(f, &(0..lim.len()).collect::<Vec<_>>(), lim)?;
    for &x in k {
        lim.check_point(x)?;
    }
    let n = offset_count(eps);
    let mut best: Option<(usize, f64)> = None;
    for level in min_level..family.len() {
        let d = family.level(level);
        let g = cones(f.values(), k, lip_bound, n, d);
        let gap = g.max_gap_on(f, k);
        if best.is_none_or(|b| gap < b.1) {
            best = Some((level, gap));
        }
        if gap > eps {
            continue;
        }
        let lip = lip_global(&g, d);
        if lip <= lip_bound * (1.0 + LIP_SLACK) {
            return Ok(LipschitzApprox {
                level,
                field: g,
                n,
                gap,
                lip,
                lip_bound,
                eps,
            });
        }
    }
    let (best_level, best_gap) = best.unwrap_or((family.len(), f64::INFINITY));
    Err(LabError::Exhaustion {
        best_level,
        best_gap,
        tolerance: eps,
    })
}
