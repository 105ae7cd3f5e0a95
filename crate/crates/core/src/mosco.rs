//! Discrete checks of energy convergence along a monotone family: the lower bound along
//! converging sequences, recovery sequences assembled from slope-controlled
//! approximations, stability of quadraticity, and the snowflake scaling table.

use log::info;
use serde::Serialize;

use crate::approximation::{approx_with_slope_control, ApproxParams, ApproxReport};
use crate::energy::{
    asymptotic_energy, hilbertianity_scan, lp_distance_p, pow_p, Backend, EnergyConfig,
    QUADRATIC_TOL,
};
use crate::error::{LabError, Result};
use crate::lipschitz::{lip_global, slope_values, ScalarField, LIP_SLACK};
use crate::metric::{
    snowflake_transform, BallKind, DistanceMatrix, MetricMeasureSpace, MonotoneDistanceFamily,
};

/// `f_1, f_2, ...` converging to `limit`. On a finite space weak and strong convergence in
/// `L^p` coincide, so only the strong gaps are recorded.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionSequence {
    pub fields: Vec<ScalarField>,
    pub limit: ScalarField,
}

impl FunctionSequence {
    pub fn new(fields: Vec<ScalarField>, limit: ScalarField) -> Result<Self> {
        if fields.is_empty() {
            return Err(LabError::Parameter("empty function sequence".into()));
        }
        if fields.iter().any(|f| f.len() != limit.len()) {
            return Err(LabError::Shape(
                "sequence fields differ in length from the limit".into(),
            ));
        }
        Ok(Self { fields, limit })
    }

    /// `f_i = f` for `count` indices.
    pub fn constant(f: ScalarField, count: usize) -> Result<Self> {
        Self::new(vec![f.clone(); count], f)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn sup_gaps(&self) -> Vec<f64> {
        let all: Vec<usize> = (0..self.limit.len()).collect();
        self.fields
            .iter()
            .map(|f| f.max_gap_on(&self.limit, &all))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfRow {
    pub level: usize,
    /// `E^{d_i}(f_i)`.
    pub energy_level: f64,
    /// `E^{d}(f_i)` under the limit distance.
    pub energy_limit: f64,
    /// `energy_level - energy_limit`; nonnegative.
    pub kernel_margin: f64,
    pub sup_gap: f64,
    pub lp_gap: f64,
    /// Bound on `|E^{d}(f_i) - E^{d}(f)|` from the sup gap.
    pub kappa: f64,
    /// `energy_level + kappa - E^{d}(f)`.
    pub liminf_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiminfReport {
    pub config: EnergyConfig,
    pub limit_energy: f64,
    pub rows: Vec<LiminfRow>,
    /// `min_i (E^{d_i}(f_i) - E^{d}(f))`.
    pub liminf_margin: f64,
    /// Continuity bound at the last index.
    pub final_kappa: f64,
    pub kernel_ok: bool,
    pub liminf_ok: bool,
}

fn energy(
    f: &ScalarField,
    d: &DistanceMatrix,
    fam: &MonotoneDistanceFamily,
    cfg: &EnergyConfig,
) -> Result<f64> {
    asymptotic_energy(f, d, fam.measure(), cfg).map(|r| r.value)
}

fn require_slope(cfg: &EnergyConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.backend != Backend::Slope {
        return Err(LabError::Parameter(
            "this check needs the slope backend".into(),
        ));
    }
    Ok(())
}

/// `sum_x m(x) (s(x) + ds)^(p-1) ds` with `ds = 2 gap / delta`: how far the energy under
/// `d` can move when the field moves by at most `gap` in sup norm.
fn continuity_bound(slopes: &[f64], weights: &[f64], gap: f64, delta: f64, p: f64) -> f64 {
    if gap == 0.0 {
        return 0.0;
    }
    let ds = 2.0 * gap / delta;
    slopes
        .iter()
        .zip(weights)
        .map(|(&s, &w)| w * (s + ds).powf(p - 1.0) * ds)
        .sum()
}

/// Checks `E^{d_i}(f_i) >= E^{d}(f_i)` exactly at every index (the sequence index is the
/// level index) and `E^{d}(f) <= E^{d_i}(f_i) + kappa_i`.
pub fn gamma_liminf_check(
    family: &MonotoneDistanceFamily,
    seq: &FunctionSequence,
    cfg: &EnergyConfig,
) -> Result<LiminfReport> {
    require_slope(cfg)?;
    family.require_increasing("the liminf check")?;
    if seq.len() > family.len() {
        return Err(LabError::Shape(format!(
            "sequence has {} fields, family only {} levels",
            seq.len(),
            family.len()
        )));
    }
    if seq.limit.len() != family.num_points() {
        return Err(LabError::Shape(
            "sequence and family point sets differ".into(),
        ));
    }
    let d = family.limit();
    let m = family.measure();
    let limit_energy = energy(&seq.limit, d, family, cfg)?;
    let base_slopes = slope_values(seq.limit.values(), d, cfg.scale, cfg.kind);
    let delta = d.min_positive().unwrap_or(1.0);

    let mut rows = Vec::with_capacity(seq.len());
    for ((level, f_i), sup_gap) in seq.fields.iter().enumerate().zip(seq.sup_gaps()) {
        let energy_level = energy(f_i, family.level(level), family, cfg)?;
        let energy_limit = energy(f_i, d, family, cfg)?;
        let kernel_margin = energy_level - energy_limit;
        if kernel_margin < 0.0 {
            return Err(LabError::invariant(
                "mosco",
                format!("energy at level {level} is below the limit energy of the same field"),
                kernel_margin,
            ));
        }
        let kappa = continuity_bound(&base_slopes, m.weights(), sup_gap, delta, cfg.p);
        rows.push(LiminfRow {
            level,
            energy_level,
            energy_limit,
            kernel_margin,
            sup_gap,
            lp_gap: lp_distance_p(f_i, &seq.limit, m, cfg.p),
            kappa,
            liminf_margin: energy_level + kappa - limit_energy,
        });
    }
    let liminf_margin = rows
        .iter()
        .map(|r| r.energy_level - limit_energy)
        .fold(f64::INFINITY, f64::min);
    let slack = LIP_SLACK * limit_energy.abs();
    Ok(LiminfReport {
        config: *cfg,
        limit_energy,
        final_kappa: rows.last().map_or(0.0, |r| r.kappa),
        kernel_ok: rows.iter().all(|r| r.kernel_margin >= 0.0),
        liminf_ok: rows.iter().all(|r| r.liminf_margin >= -slack),
        liminf_margin,
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryBlock {
    pub n: u64,
    /// `iota(n)`, zero-based.
    pub level: usize,
    /// Last level of the block, inclusive.
    pub end: usize,
    pub field: ScalarField,
    /// `E^{d_iota(n)}(g_n)`.
    pub energy: f64,
    pub lp_gap: f64,
    pub report: ApproxReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub level: usize,
    pub block: usize,
    /// `E^{d_i}(f_i)`.
    pub energy: f64,
    /// `E^{d_iota(n)}(g_n)` of the block.
    pub block_energy: f64,
    /// `block_energy - energy`; nonnegative.
    pub chain_margin: f64,
    pub lp_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub config: EnergyConfig,
    pub schedule: Vec<u64>,
    pub iota: Vec<usize>,
    pub blocks: Vec<RecoveryBlock>,
    pub rows: Vec<RecoveryRow>,
    pub limit_energy: f64,
    /// `max` of `E^{d_i}(f_i)` over the last block.
    pub limsup_energy: f64,
    /// `E^{d}(f) - limsup_energy`.
    pub limsup_margin: f64,
    /// Largest amount by which a block missed its slope target, in energy units.
    pub deviation: f64,
    /// `1/n_last + deviation`.
    pub limsup_tolerance: f64,
    pub chain_ok: bool,
    pub limsup_ok: bool,
    /// The family ran out of levels before the schedule was complete.
    pub truncated: bool,
}

impl RecoveryReport {
    /// The assembled `f_i` for levels covered by some block.
    pub fn assembled(&self) -> Vec<(usize, &ScalarField)> {
        self.blocks
            .iter()
            .flat_map(|b| (b.level..=b.end).map(move |i| (i, &b.field)))
            .collect()
    }
}

/// Builds `g_n` with tolerance `1/n` for each `n` in `schedule`, each at a level strictly
/// above the previous one, and sets `f_i = g_n` on `iota(n) <= i < iota(n+1)`; the last
/// block runs to the final level.
pub fn recovery_sequence(
    f: &ScalarField,
    family: &MonotoneDistanceFamily,
    cfg: &EnergyConfig,
    schedule: &[u64],
) -> Result<RecoveryReport> {
    require_slope(cfg)?;
    family.require_increasing("a recovery sequence")?;
    if schedule.is_empty() || schedule.contains(&0) {
        return Err(LabError::Parameter(
            "schedule must be a nonempty list of positive n".into(),
        ));
    }
    if f.len() != family.num_points() {
        return Err(LabError::Shape("field and family sizes differ".into()));
    }
    let m = family.measure();
    let limit_energy = energy(f, family.limit(), family, cfg)?;

    let mut pending = Vec::new();
    let mut truncated = false;
    let mut min_level = 0;
    for &n in schedule {
        let eps = 1.0 / n as f64;
        let params = ApproxParams {
            kind: cfg.kind,
            min_level,
            ..ApproxParams::new(cfg.p, cfg.scale)
        };
        match approx_with_slope_control(f, eps, family, &params) {
            Ok(a) => {
                info!("recovery block n = {n} at level {}", a.level);
                min_level = a.level + 1;
                pending.push((n, a));
            }
            Err(LabError::Exhaustion { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if pending.is_empty() {
        return Err(LabError::Exhaustion {
            best_level: family.len(),
            best_gap: f64::INFINITY,
            tolerance: 1.0 / schedule[0] as f64,
        });
    }

    let iota: Vec<usize> = pending.iter().map(|(_, a)| a.level).collect();
    let mut blocks = Vec::with_capacity(pending.len());
    let mut rows = Vec::new();
    let mut deviation = 0.0_f64;
    for (b, (n, a)) in pending.into_iter().enumerate() {
        let end = iota.get(b + 1).map_or(family.len() - 1, |&next| next - 1);
        let block_energy = energy(&a.field, family.level(a.level), family, cfg)?;
        let lp_gap = lp_distance_p(&a.field, f, m, cfg.p);
        let eps = 1.0 / n as f64;
        if lp_gap > eps {
            return Err(LabError::invariant(
                "mosco",
                format!("block {b} is {lp_gap} away from f in L^p, above 1/{n}"),
                eps - lp_gap,
            ));
        }
        deviation = deviation.max((a.report.energy_excess - eps).max(0.0) / cfg.p);
        for level in a.level..=end {
            let e = energy(&a.field, family.level(level), family, cfg)?;
            let chain_margin = block_energy - e;
            if chain_margin < 0.0 {
                return Err(LabError::invariant(
                    "mosco",
                    format!("level {level} energy exceeds its block energy"),
                    chain_margin,
                ));
            }
            rows.push(RecoveryRow {
                level,
                block: b,
                energy: e,
                block_energy,
                chain_margin,
                lp_gap,
            });
        }
        blocks.push(RecoveryBlock {
            n,
            level: a.level,
            end,
            field: a.field,
            energy: block_energy,
            lp_gap,
            report: a.report,
        });
    }
    let last_block = blocks.len() - 1;
    let limsup_energy = rows
        .iter()
        .filter(|r| r.block == last_block)
        .map(|r| r.energy)
        .fold(f64::NEG_INFINITY, f64::max);
    let n_last = blocks[last_block].n;
    let limsup_tolerance = 1.0 / n_last as f64 + deviation;
    let limsup_margin = limit_energy - limsup_energy;
    Ok(RecoveryReport {
        config: *cfg,
        schedule: schedule.to_vec(),
        iota,
        chain_ok: rows.iter().all(|r| r.chain_margin >= 0.0),
        limsup_ok: -limsup_margin <= limsup_tolerance,
        blocks,
        rows,
        limit_energy,
        limsup_energy,
        limsup_margin,
        deviation,
        limsup_tolerance,
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelDefect {
    /// Zero-based level; `None` for the limit.
    pub level: Option<usize>,
    pub max_relative: f64,
    pub argmax: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub backend: Backend,
    pub trials: usize,
    pub seed: u64,
    pub levels: Vec<LevelDefect>,
    pub limit: LevelDefect,
    /// Only the graph Dirichlet backend is held to a tolerance.
    pub asserted: bool,
    pub all_quadratic: bool,
}

/// Runs the parallelogram scan with the same seed at every level and at the limit.
pub fn hilbertianity_stability_experiment(
    family: &MonotoneDistanceFamily,
    cfg: &EnergyConfig,
    trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let m = family.measure();
    let scan = |level: Option<usize>, d: &DistanceMatrix| {
        hilbertianity_scan(d, m, cfg, trials, seed).map(|s| LevelDefect {
            level,
            max_relative: s.max_relative,
            argmax: s.argmax,
        })
    };
    let levels = family
        .levels()
        .iter()
        .enumerate()
        .map(|(i, d)| scan(Some(i), d))
        .collect::<Result<Vec<_>>>()?;
    let limit = scan(None, family.limit())?;
    let asserted = cfg.backend == Backend::GraphDirichlet;
    let all_quadratic = levels
        .iter()
        .chain(std::iter::once(&limit))
        .all(|l| l.max_relative <= QUADRATIC_TOL);
    if asserted && !all_quadratic {
        let worst = levels
            .iter()
            .chain(std::iter::once(&limit))
            .map(|l| l.max_relative)
            .fold(0.0, f64::max);
        return Err(LabError::invariant(
            "energy",
            "graph Dirichlet energy failed the parallelogram law",
            QUADRATIC_TOL - worst,
        ));
    }
    Ok(StabilityReport {
        backend: cfg.backend,
        trials,
        seed,
        levels,
        limit,
        asserted,
        all_quadratic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    /// Snowflake index `i`, distance `d^(1 - 1/i)`.
    pub level: u32,
    pub radius: f64,
    pub energy: f64,
    /// `Lip_d(f) r^(1/(i-1))`.
    pub bound: f64,
    /// `bound - max_x slope(x)`.
    pub margin: f64,
    pub max_slope: f64,
    /// Points where the slope exceeds `bound`.
    pub violations: usize,
    /// `Lip_d(f) (2r)^(1/(i-1))`, which also covers pairs on opposite sides of the center.
    pub bound_2r: f64,
    pub violations_2r: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaseRow {
    pub radius: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub level: u32,
    /// Least-squares slope of `ln E` against `ln r`; `None` with fewer than two positive energies.
    pub exponent: Option<f64>,
    pub expected: f64,
    pub relative_error: Option<f64>,
    /// Radii with zero energy are left out of the fit.
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SnowflakeTable {
    pub p: f64,
    pub kind: BallKind,
    pub lip: f64,
    pub rows: Vec<ScalingRow>,
    pub base: Vec<BaseRow>,
    pub fits: Vec<ExponentFit>,
    pub violations: usize,
    pub violations_2r: usize,
}

fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|&(r, e)| (r.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Energies of `f` under the snowflake distances `d^(1 - 1/i)` across `radii`, with the
/// pointwise slope bound and a log-log fit of the energy decay for each `i`.
pub fn snowflake_counterexample(
    base: &MetricMeasureSpace,
    f: &ScalarField,
    p: f64,
    radii: &[f64],
    levels: &[u32],
    kind: BallKind,
) -> Result<SnowflakeTable> {
    EnergyConfig::slope(p, 1.0).validate()?;
    let d = base.dist();
    if d.max_entry() > 1.0 {
        return Err(LabError::Domain(format!(
            "snowflake needs d <= 1, max entry is {}",
            d.max_entry()
        )));
    }
    if levels.is_empty() || levels.iter().any(|&i| i < 2) {
        return Err(LabError::Parameter("snowflake indices must be >= 2".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(LabError::Parameter("radii must be positive".into()));
    }
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    if radii.len() < 2 || hi <= lo {
        return Err(LabError::Parameter(
            "radius grid needs at least two distinct radii".into(),
        ));
    }
    if f.len() != d.len() {
        return Err(LabError::Shape("field and space sizes differ".into()));
    }
    let m = base.measure();
    let lip = lip_global(f, d);
    let integral = |slopes: &[f64]| {
        let dens: Vec<f64> = slopes.iter().map(|&s| pow_p(s, p)).collect();
        m.integrate(&dens) / p
    };

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &i in levels {
        let alpha = 1.0 - 1.0 / f64::from(i);
        let di = snowflake_transform(d, alpha)?;
        let e = 1.0 / (f64::from(i) - 1.0);
        let mut pts = Vec::with_capacity(radii.len());
        for &r in radii {
            let slopes = slope_values(f.values(), &di, r, kind);
            let bound = lip * r.powf(e);
            let bound_2r = lip * (2.0 * r).powf(e);
            let over = |b: f64| {
                slopes
                    .iter()
                    .filter(|&&s| s > b * (1.0 + LIP_SLACK))
                    .count()
            };
            let max_slope = slopes.iter().copied().fold(0.0, f64::max);
            let energy = integral(&slopes);
            pts.push((r, energy));
            rows.push(ScalingRow {
                level: i,
                radius: r,
                energy,
                bound,
                margin: bound - max_slope,
                max_slope,
                violations: over(bound),
                bound_2r,
                violations_2r: over(bound_2r),
            });
        }
        let expected = p * e;
        let exponent = fit_exponent(&pts);
        fits.push(ExponentFit {
            level: i,
            exponent,
            expected,
            relative_error: exponent.map(|x| (x - expected).abs() / expected),
            points: pts.iter().filter(|(_, e)| *e > 0.0).count(),
        });
    }
    let base_rows = radii
        .iter()
        .map(|&r| BaseRow {
            radius: r,
            energy: integral(&slope_values(f.values(), d, r, kind)),
        })
        .collect();
    Ok(SnowflakeTable {
        p,
        kind,
        lip,
        violations: rows.iter().map(|r| r.violations).sum(),
        violations_2r: rows.iter().map(|r| r.violations_2r).sum(),
        rows,
        base: base_rows,
        fits,
    })
}
