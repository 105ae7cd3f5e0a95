//! Fixed-scale p-energies and the checks built on them: Sobolev norm, energy comparison
//! under a distance increase, and the parallelogram defect used to test quadraticity.
//!
//! Two backends are available. `Slope` integrates the p-th power of the fixed-scale
//! slope field, the discrete stand-in for the asymptotic slope. `GraphDirichlet` is a
//! weighted graph Dirichlet energy on the same balls; at `p = 2` it is a quadratic form
//! by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lipschitz::{slope_values, ScalarField};
use crate::metric::{BallKind, DistanceMatrix, Measure};

/// Relative defect below which a scan is declared Hilbertian.
pub const HILBERTIAN_TOL: f64 = 1e-6;
/// Relative defect the graph Dirichlet backend must stay under at `p = 2`.
pub const QUADRATIC_TOL: f64 = 1e-9;
/// Floor on the denominator of the relative defect.
pub const DEFECT_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Slope,
    GraphDirichlet,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Slope => "slope",
            Backend::GraphDirichlet => "graph-dirichlet",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub p: f64,
    pub scale: f64,
    #[serde(default)]
    pub kind: BallKind,
    #[serde(default)]
    pub backend: Backend,
}

impl EnergyConfig {
    pub fn slope(p: f64, scale: f64) -> Self {
        Self {
            p,
            scale,
            kind: BallKind::Open,
            backend: Backend::Slope,
        }
    }

    pub fn graph_dirichlet(p: f64, scale: f64) -> Self {
        Self {
            backend: Backend::GraphDirichlet,
            ..Self::slope(p, scale)
        }
    }

    pub fn with_kind(self, kind: BallKind) -> Self {
        Self { kind, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(LabError::Parameter(format!(
                "exponent p must be > 1, got {}",
                self.p
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(LabError::Parameter(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub value: f64,
    /// Per-point integrand before the measure: `slope^p` for the slope backend.
    pub density: Vec<f64>,
    pub config: EnergyConfig,
    /// Set when the value stands for the relaxed (envelope) energy, which on a finite
    /// space at fixed scale coincides with the unrelaxed one.
    pub envelope_trivial: bool,
}

#[inline]
pub(crate) fn pow_p(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

fn check_shapes(f: &ScalarField, d: &DistanceMatrix, m: &Measure) -> Result<()> {
    if f.len() != d.len() || m.len() != d.len() {
        return Err(LabError::Shape(format!(
            "field {} / distance {} / measure {} sizes differ",
            f.len(),
            d.len(),
            m.len()
        )));
    }
    Ok(())
}

fn densities(f: &ScalarField, d: &DistanceMatrix, cfg: &EnergyConfig) -> Vec<f64> {
    match cfg.backend {
        Backend::Slope => slope_values(f.values(), d, cfg.scale, cfg.kind)
            .into_iter()
            .map(|s| pow_p(s, cfg.p))
            .collect(),
        Backend::GraphDirichlet => {
            let v = f.values();
            (0..d.len())
                .into_par_iter()
                .map(|x| {
                    let row = d.row(x);
                    let nbrs: Vec<usize> = d
                        .ball_members(x, cfg.scale, cfg.kind)
                        .into_iter()
                        .filter(|&y| y != x)
                        .collect();
                    if nbrs.is_empty() {
                        return 0.0;
                    }
                    let count = nbrs.len() as f64;
                    let s: f64 = nbrs
                        .iter()
                        .map(|&y| {
                            let diff = v[x] - v[y];
                            diff * diff / (count * row[y] * row[y])
                        })
                        .sum();
                    if cfg.p == 2.0 {
                        s
                    } else {
                        s.powf(cfg.p / 2.0)
                    }
                })
                .collect()
        }
    }
}

/// `(1/p) sum_x density(x) m(x)`, summed in point order.
pub fn asymptotic_energy(
    f: &ScalarField,
    d: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
) -> Result<EnergyReport> {
    cfg.validate()?;
    check_shapes(f, d, m)?;
    let density = densities(f, d, cfg);
    let value = m.integrate(&density) / cfg.p;
    Ok(EnergyReport {
        value,
        density,
        config: *cfg,
        envelope_trivial: false,
    })
}

/// The relaxed energy. On a finite space the fixed-scale energy is continuous in `f`,
/// so it is its own lower semicontinuous envelope and this returns the same value,
/// tagged `envelope_trivial`.
pub fn cheeger_energy(
    f: &ScalarField,
    d: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
) -> Result<EnergyReport> {
    let mut report = asymptotic_energy(f, d, m, cfg)?;
    report.envelope_trivial = true;
    Ok(report)
}

/// `(||f||_p^p + p E(f))^(1/p)`.
pub fn sobolev_norm(
    f: &ScalarField,
    d: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
) -> Result<f64> {
    let energy = cheeger_energy(f, d, m, cfg)?.value;
    let lp: Vec<f64> = f.values().iter().map(|v| pow_p(v.abs(), cfg.p)).collect();
    Ok((m.integrate(&lp) + cfg.p * energy).powf(1.0 / cfg.p))
}

/// `sum_x |f(x) - g(x)|^p m(x)`.
pub fn lp_distance_p(f: &ScalarField, g: &ScalarField, m: &Measure, p: f64) -> f64 {
    let diff: Vec<f64> = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| pow_p((a - b).abs(), p))
        .collect();
    m.integrate(&diff)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyComparison {
    /// Energy under the smaller distance `d`.
    pub energy_smaller: f64,
    /// Energy under the larger distance `d'`.
    pub energy_larger: f64,
    /// `energy_smaller - energy_larger`; nonnegative for the slope backend.
    pub margin: f64,
    pub asserted: bool,
}

/// Compares the energies of `f` under `d <= d_larger`. For the slope backend the larger
/// distance must not produce a larger energy.
pub fn energy_comparison_check(
    f: &ScalarField,
    d: &DistanceMatrix,
    d_larger: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
) -> Result<EnergyComparison> {
    if d.len() != d_larger.len() {
        return Err(LabError::Shape("distance matrices differ in size".into()));
    }
    if let Some((i, j)) = d.dominated_by(d_larger) {
        return Err(LabError::Precondition(format!(
            "d({i},{j}) = {} exceeds d'({i},{j}) = {}",
            d.get(i, j),
            d_larger.get(i, j)
        )));
    }
    let e = asymptotic_energy(f, d, m, cfg)?.value;
    let e_larger = asymptotic_energy(f, d_larger, m, cfg)?.value;
    let asserted = cfg.backend == Backend::Slope;
    if asserted && e_larger > e + 1e-12 * e {
        return Err(LabError::invariant(
            "energy",
            "energy increased under a larger distance",
            e - e_larger,
        ));
    }
    Ok(EnergyComparison {
        energy_smaller: e,
        energy_larger: e_larger,
        margin: e - e_larger,
        asserted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Defect {
    /// `E(f+g) + E(f-g) - 2E(f) - 2E(g)`.
    pub defect: f64,
    /// `|defect| / max(E(f) + E(g), floor)`.
    pub relative: f64,
    pub energy_f: f64,
    pub energy_g: f64,
}

/// Parallelogram defect of the 2-energy at the pair `(f, g)`.
pub fn parallelogram_defect(
    f: &ScalarField,
    g: &ScalarField,
    d: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
) -> Result<Defect> {
    if cfg.p != 2.0 {
        return Err(LabError::Parameter(format!(
            "parallelogram defect needs p = 2, got {}",
            cfg.p
        )));
    }
    if f.len() != g.len() {
        return Err(LabError::Shape("fields differ in length".into()));
    }
    let e = |h: &ScalarField| asymptotic_energy(h, d, m, cfg).map(|r| r.value);
    let (ef, eg) = (e(f)?, e(g)?);
    let defect = e(&f.add(g))? + e(&f.sub(g))? - 2.0 * ef - 2.0 * eg;
    Ok(Defect {
        defect,
        relative: defect.abs() / (ef + eg).max(DEFECT_FLOOR),
        energy_f: ef,
        energy_g: eg,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HilbertianityScan {
    pub trials: usize,
    pub backend: Backend,
    pub max_relative: f64,
    /// Index of the first trial attaining the maximum.
    pub argmax: usize,
    pub worst_pair: (ScalarField, ScalarField),
    /// `max_relative <= HILBERTIAN_TOL`.
    pub hilbertian: bool,
}

/// A field with entries uniform in `[-1, 1]`.
pub fn random_field(n: usize, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_fn(n, |_| rng.gen_range(-1.0..=1.0))
}

/// Random fields with entries uniform in `[-1, 1]`, drawn pairwise from a seeded stream.
pub fn random_field_pairs(n: usize, trials: usize, seed: u64) -> Vec<(ScalarField, ScalarField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let f = ScalarField::from_fn(n, |_| rng.gen_range(-1.0..=1.0));
            let g = ScalarField::from_fn(n, |_| rng.gen_range(-1.0..=1.0));
            (f, g)
        })
        .collect()
}

/// Largest relative parallelogram defect over `trials` random field pairs.
pub fn hilbertianity_scan(
    d: &DistanceMatrix,
    m: &Measure,
    cfg: &EnergyConfig,
    trials: usize,
    seed: u64,
) -> Result<HilbertianityScan> {
    if trials == 0 {
        return Err(LabError::Parameter("need at least one trial".into()));
    }
    let pairs = random_field_pairs(d.len(), trials, seed);
    let defects = pairs
        .iter()
        .map(|(f, g)| parallelogram_defect(f, g, d, m, cfg).map(|x| x.relative))
        .collect::<Result<Vec<_>>>()?;
    let mut argmax = 0;
    for (t, &v) in defects.iter().enumerate() {
        if v > defects[argmax] {
            argmax = t;
        }
    }
    let max_relative = defects[argmax];
    Ok(HilbertianityScan {
        trials,
        backend: cfg.backend,
        max_relative,
        argmax,
        worst_pair: pairs[argmax].clone(),
        hilbertian: max_relative <= HILBERTIAN_TOL,
    })
}
