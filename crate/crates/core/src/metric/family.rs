use serde::{Deserialize, Serialize};

use super::{snowflake_transform, DistanceMatrix, Measure, MetricMeasureSpace};
use crate::error::{LabError, Result};

/// Relative slack allowed when comparing consecutive levels.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Whether the levels approach the limit from below (`d_i` increasing to `d`) or from
/// above (`d_i` decreasing to `d`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotoneViolation {
    /// Index of the lower level of the offending comparison; `levels.len()` stands for the limit.
    pub level: usize,
    pub next: usize,
    pub pair: (usize, usize),
    pub excess: f64,
}

/// Distances `d_1, ..., d_k` on a fixed point set, monotone towards the limit distance
/// carried by `base`. Level indices are zero-based: `level(0)` is `d_1`.
#[derive(Clone, Debug)]
pub struct MonotoneDistanceFamily {
    base: MetricMeasureSpace,
    levels: Vec<DistanceMatrix>,
    direction: Direction,
}

#[inline]
fn exceeds(lower: f64, upper: f64) -> f64 {
    let slack = MONOTONE_SLACK * lower.abs().max(upper.abs());
    lower - upper - slack
}

impl MonotoneDistanceFamily {
    pub fn new(
        base: MetricMeasureSpace,
        levels: Vec<DistanceMatrix>,
        direction: Direction,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(LabError::Parameter(
                "a family needs at least one level".into(),
            ));
        }
        if let Some((i, l)) = levels
            .iter()
            .enumerate()
            .find(|(_, l)| l.len() != base.len())
        {
            return Err(LabError::Shape(format!(
                "level {i} has {} points, base has {}",
                l.len(),
                base.len()
            )));
        }
        let family = Self {
            base,
            levels,
            direction,
        };
        if let Some(v) = family.monotonicity_violations().first() {
            return Err(LabError::Precondition(format!(
                "family is not {:?}: level {} vs {} at pair {:?} (excess {:e})",
                direction, v.level, v.next, v.pair, v.excess
            )));
        }
        if let Some((i, pair)) = family.topology_mismatch() {
            return Err(LabError::Precondition(format!(
                "level {i} has a different positivity pattern at pair {pair:?}"
            )));
        }
        Ok(family)
    }

    /// Increasing family built from the snowflake schedule: level for `i` is
    /// `d * (delta / d)^(1/i)` with `delta` the smallest positive distance, i.e. the
    /// snowflake `d^(1 - 1/i)` rescaled so it never exceeds `d`. It increases to `d` as
    /// `i` grows. With `include_limit` the limit itself is appended as the final level.
    pub fn snowflake_from_below(
        base: MetricMeasureSpace,
        schedule: &[u32],
        include_limit: bool,
    ) -> Result<Self> {
        check_schedule(schedule)?;
        let d = base.dist();
        let delta = d.min_positive().unwrap_or(1.0);
        let mut levels: Vec<DistanceMatrix> = schedule
            .iter()
            .map(|&i| {
                let e = 1.0 / f64::from(i);
                DistanceMatrix::from_upper(d.len(), |x, y| {
                    let v = d.get(x, y);
                    (v * (delta / v).powf(e)).min(v)
                })
            })
            .collect();
        if include_limit {
            levels.push(d.clone());
        }
        Self::new(base, levels, Direction::Increasing)
    }

    /// Decreasing family `d_i = d^(1 - 1/i)` with limit `d` (requires `d <= 1`).
    pub fn snowflake_from_above(base: MetricMeasureSpace, schedule: &[u32]) -> Result<Self> {
        check_schedule(schedule)?;
        let levels = schedule
            .iter()
            .map(|&i| snowflake_transform(base.dist(), 1.0 - 1.0 / f64::from(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, levels, Direction::Decreasing)
    }

    /// `k` copies of the limit distance.
    pub fn constant(base: MetricMeasureSpace, k: usize) -> Result<Self> {
        let levels = vec![base.dist().clone(); k];
        Self::new(base, levels, Direction::Increasing)
    }

    pub fn base(&self) -> &MetricMeasureSpace {
        &self.base
    }

    pub fn limit(&self) -> &DistanceMatrix {
        self.base.dist()
    }

    pub fn measure(&self) -> &Measure {
        self.base.measure()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn levels(&self) -> &[DistanceMatrix] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &DistanceMatrix {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.base.len()
    }

    /// Levels followed by the limit.
    pub fn chain(&self) -> impl Iterator<Item = &DistanceMatrix> {
        self.levels.iter().chain(std::iter::once(self.limit()))
    }

    pub(crate) fn require_increasing(&self, what: &str) -> Result<()> {
        match self.direction {
            Direction::Increasing => Ok(()),
            Direction::Decreasing => Err(LabError::Precondition(format!(
                "{what} needs a family increasing to its limit"
            ))),
        }
    }

    /// Every pair where monotonicity towards the limit fails beyond the relative slack.
    pub fn monotonicity_violations(&self) -> Vec<MonotoneViolation> {
        let chain: Vec<&DistanceMatrix> = self.chain().collect();
        let n = self.num_points();
        let mut out = Vec::new();
        for (l, w) in chain.windows(2).enumerate() {
            let (a, b) = match self.direction {
                Direction::Increasing => (w[0], w[1]),
                Direction::Decreasing => (w[1], w[0]),
            };
            for x in 0..n {
                for y in (x + 1)..n {
                    let e = exceeds(a.get(x, y), b.get(x, y));
                    if e > 0.0 {
                        out.push(MonotoneViolation {
                            level: l,
                            next: l + 1,
                            pair: (x, y),
                            excess: e,
                        });
                    }
                }
            }
        }
        out
    }

    fn topology_mismatch(&self) -> Option<(usize, (usize, usize))> {
        let n = self.num_points();
        let lim = self.limit();
        for (i, l) in self.levels.iter().enumerate() {
            for x in 0..n {
                for y in (x + 1)..n {
                    if (l.get(x, y) > 0.0) != (lim.get(x, y) > 0.0) {
                        return Some((i, (x, y)));
                    }
                }
            }
        }
        None
    }

    /// `sup_{x,y in subset} |d_inf(x,y) - d_i(x,y)|` per level. For a monotone family
    /// these gaps are nonincreasing; a violation is reported as an invariant failure.
    pub fn uniform_convergence_gap(&self, subset: &[usize]) -> Result<ConvergenceGap> {
        if subset.is_empty() {
            return Err(LabError::Parameter("empty subset".into()));
        }
        for &x in subset {
            self.limit().check_point(x)?;
        }
        let lim = self.limit();
        let per_level: Vec<f64> = self
            .levels
            .iter()
            .map(|l| {
                let mut gap = 0.0_f64;
                for &x in subset {
                    for &y in subset {
                        gap = gap.max((lim.get(x, y) - l.get(x, y)).abs());
                    }
                }
                gap
            })
            .collect();
        for (i, w) in per_level.windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + MONOTONE_SLACK) {
                return Err(LabError::invariant(
                    "metric_core",
                    format!("uniform gap increases from level {i} to {}", i + 1),
                    w[1] - w[0],
                ));
            }
        }
        let final_gap = *per_level.last().expect("family has levels");
        Ok(ConvergenceGap {
            per_level,
            final_gap,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceGap {
    pub per_level: Vec<f64>,
    pub final_gap: f64,
}

/// `2, 4, ..., 2^count`; dense enough near the limit for tight tolerances. `count <= 31`.
pub fn dyadic_schedule(count: u32) -> Vec<u32> {
    (1..=count.min(31)).map(|k| 1u32 << k).collect()
}

fn check_schedule(schedule: &[u32]) -> Result<()> {
    if schedule.is_empty() {
        return Err(LabError::Parameter("empty snowflake schedule".into()));
    }
    if schedule.iter().any(|&i| i < 2) {
        return Err(LabError::Parameter("snowflake indices must be >= 2".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Parameter(
            "snowflake schedule must be strictly increasing".into(),
        ));
    }
    Ok(())
}
