//! Approximation of a function by Lipschitz functions of a smaller distance in the
//! family, with the integral of the slope kept under control.
//!
//! The pipeline runs in five steps: good-set selection, a partition of unity on the good
//! set, patching of local cone approximants, a McShane extension off the good set, and a
//! cut-off around the support of `f`.

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::pow_p;
use crate::error::{LabError, Result};
use crate::lipschitz::{
    approx_lipschitz_from, lip_constant, lip_global, slope_values, ScalarField, LIP_SLACK,
};
use crate::metric::{BallKind, DistanceMatrix, Measure, MonotoneDistanceFamily};

/// Tolerance on `sum_j psi_j = 1`.
pub const PARTITION_TOL: f64 = 1e-12;
/// Number of halvings of `eps'` tried when the slope integral is not under control.
pub const RETRY_BUDGET: u32 = 4;
/// Upper cap for `eps'`, strictly below 1/4.
pub const EPS_PRIME_CAP: f64 = 0.24;

#[derive(Clone, Debug, Serialize)]
pub struct EgorovSelection {
    pub good_set: Vec<usize>,
    pub ambient: Vec<usize>,
    pub radius: f64,
    pub reference_scale: f64,
    pub eps_prime: f64,
    pub bad_mass: f64,
    pub radii_tried: usize,
}

fn good_points(
    values: &[f64],
    d: &DistanceMatrix,
    ambient: &[usize],
    reference: &[f64],
    radius: f64,
    kind: BallKind,
    eps_prime: f64,
) -> Vec<usize> {
    let f = ScalarField::new(values.to_vec());
    ambient
        .par_iter()
        .copied()
        .filter(|&x| {
            let ball = d.ball_members(x, 4.0 * radius, kind);
            let local = lip_constant(&f, &ball, d).expect("ball members are valid ids");
            local <= reference[x] + eps_prime
        })
        .collect()
}

/// Picks the largest radius `r0 / 2^j` for which the points of `ambient` whose local
/// Lipschitz constant on the `4r`-ball exceeds the reference slope by more than
/// `eps_prime` carry mass at most `eps_prime`.
pub fn egorov_select(
    f: &ScalarField,
    d: &DistanceMatrix,
    ambient: &[usize],
    eps_prime: f64,
    m: &Measure,
    r0: f64,
    kind: BallKind,
) -> Result<EgorovSelection> {
    if !(eps_prime > 0.0 && eps_prime < 0.25) {
        return Err(LabError::Parameter(format!(
            "eps' must lie in (0, 1/4), got {eps_prime}"
        )));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(LabError::Parameter(format!(
            "reference scale must be > 0, got {r0}"
        )));
    }
    if f.len() != d.len() || m.len() != d.len() {
        return Err(LabError::Shape(
            "field, distance and measure sizes differ".into(),
        ));
    }
    for &x in ambient {
        d.check_point(x)?;
    }
    let reference = slope_values(f.values(), d, r0, kind);
    let delta = d.min_positive().unwrap_or(f64::INFINITY);
    let ambient_mass = m.mass_of(ambient);
    let mut radius = r0;
    let mut tried = 0;
    loop {
        tried += 1;
        let good = good_points(f.values(), d, ambient, &reference, radius, kind, eps_prime);
        let bad_mass = ambient_mass - m.mass_of(&good);
        // every 4r-ball is a singleton past this point, so the whole ambient set is good
        let collapsed = 4.0 * radius < delta;
        if bad_mass <= eps_prime || collapsed {
            debug!("egorov radius {radius} after {tried} tries, bad mass {bad_mass}");
            return Ok(EgorovSelection {
                good_set: good,
                ambient: ambient.to_vec(),
                radius,
                reference_scale: r0,
                eps_prime,
                bad_mass: bad_mass.max(0.0),
                radii_tried: tried,
            });
        }
        radius /= 2.0;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionOfUnity {
    pub anchors: Vec<usize>,
    pub radius: f64,
    /// One weight per anchor, zero off the covered set.
    pub weights: Vec<ScalarField>,
    /// Lipschitz constant of each weight on the covered set under the first level.
    pub lip_bounds: Vec<f64>,
}

impl PartitionOfUnity {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Farthest-point cover of `k` by open `d`-balls of radius `r`, starting from the lowest
/// index, followed by normalized tent bumps `max(0, 1 - d(x, x_j)/r)`.
pub fn build_partition(
    k: &[usize],
    r: f64,
    d: &DistanceMatrix,
    d1: &DistanceMatrix,
) -> Result<PartitionOfUnity> {
    if k.is_empty() {
        return Err(LabError::Parameter(
            "cannot build a partition on an empty set".into(),
        ));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(LabError::Parameter(format!(
            "partition radius must be > 0, got {r}"
        )));
    }
    if d.len() != d1.len() {
        return Err(LabError::Shape("distance matrices differ in size".into()));
    }
    let mut set = k.to_vec();
    set.sort_unstable();
    set.dedup();
    for &x in &set {
        d.check_point(x)?;
    }

    let mut anchors = vec![set[0]];
    let mut nearest: Vec<f64> = set.iter().map(|&x| d.get(x, set[0])).collect();
    loop {
        let (far, &gap) = nearest
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if gap < r {
            break;
        }
        let a = set[far];
        anchors.push(a);
        for (slot, &x) in nearest.iter_mut().zip(&set) {
            *slot = slot.min(d.get(x, a));
        }
    }

    let n = d.len();
    let bumps: Vec<Vec<f64>> = anchors
        .iter()
        .map(|&a| {
            let row = d.row(a);
            let mut b = vec![0.0; n];
            for &x in &set {
                b[x] = (1.0 - row[x] / r).max(0.0);
            }
            b
        })
        .collect();
    let mut total = vec![0.0; n];
    for b in &bumps {
        for &x in &set {
            total[x] += b[x];
        }
    }
    let weights: Vec<ScalarField> = bumps
        .into_iter()
        .map(|b| ScalarField::from_fn(n, |x| if b[x] > 0.0 { b[x] / total[x] } else { 0.0 }))
        .collect();
    for &x in &set {
        let s: f64 = weights.iter().map(|w| w.get(x)).sum();
        if (s - 1.0).abs() > PARTITION_TOL {
            return Err(LabError::invariant(
                "approximation",
                format!("partition sums to {s} at point {x}"),
                (s - 1.0).abs(),
            ));
        }
    }
    let lip_bounds = weights
        .par_iter()
        .map(|w| lip_constant(w, &set, d1))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionOfUnity {
        anchors,
        radius: r,
        weights,
        lip_bounds,
    })
}

/// `min_{y in set} (f(y) + lip * d(x, y))` at every point.
pub fn mcshane(f: &ScalarField, set: &[usize], lip: f64, d: &DistanceMatrix) -> ScalarField {
    ScalarField::from_fn(d.len(), |x| {
        let row = d.row(x);
        set.iter()
            .map(|&y| f.get(y) + lip * row[y])
            .fold(f64::INFINITY, f64::min)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Patch {
    /// Zero-based level: the largest of the per-anchor levels.
    pub level: usize,
    /// Patched function on the good set, zero elsewhere.
    pub field: ScalarField,
    pub anchor_levels: Vec<usize>,
    pub tolerances: Vec<f64>,
    /// Local Lipschitz constants `Lip_d(f; B_2r(x_j))`.
    pub local_lips: Vec<f64>,
    /// `Lip` of the patched function on the good set under the chosen level.
    pub lip: f64,
    /// Largest per-anchor level found when the scan is not held above `min_level`.
    pub unconstrained_level: Option<usize>,
}

/// Patches per-anchor cone approximants with the partition weights. Each local function is
/// the McShane envelope of `f` from `B_2r(x_j)`, approximated on `k` at tolerance
/// `eps' / max(k Lip(psi_j), 1)` scanning levels from `min_level`.
pub fn patch(
    f: &ScalarField,
    k: &[usize],
    partition: &PartitionOfUnity,
    family: &MonotoneDistanceFamily,
    eps_prime: f64,
    min_level: usize,
) -> Result<Patch> {
    let d = family.limit();
    let count = partition.len() as f64;
    struct Local {
        level: usize,
        tol: f64,
        lip: f64,
        field: ScalarField,
        unconstrained: Option<usize>,
    }
    let locals = partition
        .anchors
        .par_iter()
        .zip(&partition.lip_bounds)
        .map(|(&a, &psi_lip)| {
            let ball = d.ball_members(a, 2.0 * partition.radius, BallKind::Open);
            let lip = lip_constant(f, &ball, d)?;
            let fj = mcshane(f, &ball, lip, d);
            let tol = eps_prime / (count * psi_lip).max(1.0);
            let h = approx_lipschitz_from(&fj, k, tol, family, min_level)?;
            let unconstrained = if min_level == 0 {
                Some(h.level)
            } else {
                approx_lipschitz_from(&fj, k, tol, family, 0)
                    .ok()
                    .map(|u| u.level)
            };
            Ok(Local {
                level: h.level,
                tol,
                lip,
                field: h.field,
                unconstrained,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let level = locals.iter().map(|l| l.level).max().unwrap_or(min_level);
    let n = f.len();
    let mut values = vec![0.0; n];
    for &x in k {
        values[x] = partition
            .weights
            .iter()
            .zip(&locals)
            .map(|(w, l)| w.get(x) * l.field.get(x))
            .sum();
    }
    let field = ScalarField::new(values);
    let lip = lip_constant(&field, k, family.level(level))?;
    let unconstrained_level = locals
        .iter()
        .map(|l| l.unconstrained)
        .collect::<Option<Vec<_>>>()
        .and_then(|v| v.into_iter().max());
    Ok(Patch {
        level,
        field,
        anchor_levels: locals.iter().map(|l| l.level).collect(),
        tolerances: locals.iter().map(|l| l.tol).collect(),
        local_lips: locals.iter().map(|l| l.lip).collect(),
        lip,
        unconstrained_level,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Extension {
    pub field: ScalarField,
    /// `C' = Lip(h~ on K) + eps'`.
    pub constant: f64,
    /// `max_{x in K} (slope of h) - (slope of h~ within K)`, both at scale `r`.
    pub slope_deviation: f64,
}

/// McShane extension of `h_tilde` from `k` with constant `Lip_{d_i}(h_tilde; K) + eps'`.
/// It agrees with `h_tilde` on `k`; the change in the fixed-scale slope on `k` is
/// measured, not controlled.
pub fn extend_slope_controlled(
    h_tilde: &ScalarField,
    k: &[usize],
    d: &DistanceMatrix,
    eps_prime: f64,
    r: f64,
    kind: BallKind,
) -> Result<Extension> {
    if k.is_empty() {
        return Err(LabError::Parameter(
            "cannot extend from an empty set".into(),
        ));
    }
    let constant = lip_constant(h_tilde, k, d)? + eps_prime;
    let mut field = mcshane(h_tilde, k, constant, d);
    // the envelope reproduces h~ on K up to rounding; pin it exactly
    let mut values = field.clone().into_values();
    for &x in k {
        values[x] = h_tilde.get(x);
    }
    field = ScalarField::new(values);

    let in_k = membership(d.len(), k);
    let full = slope_values(field.values(), d, r, kind);
    let slope_deviation = k
        .par_iter()
        .map(|&x| {
            let ball: Vec<usize> = d
                .ball_members(x, r, kind)
                .into_iter()
                .filter(|&y| in_k[y])
                .collect();
            let restricted = lip_constant(h_tilde, &ball, d).expect("valid ids");
            full[x] - restricted
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(Extension {
        field,
        constant,
        slope_deviation: slope_deviation.max(0.0),
    })
}

fn membership(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &x in set {
        m[x] = true;
    }
    m
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffField {
    pub eta: ScalarField,
    /// Points where `eta = 1`.
    pub core: Vec<usize>,
    /// Points within distance 2 of `spt(f) ∩ K`, outside of which `eta = 0`.
    pub halo: Vec<usize>,
    /// Set when `spt(f) ∩ K` is empty and the output is identically zero.
    pub trivial: bool,
}

/// `g = eta * h` with `eta = ((2 - d(x, spt(f) ∩ K)) ∧ 1) ∨ 0`.
pub fn apply_cutoff(
    h: &ScalarField,
    f: &ScalarField,
    k: &[usize],
    d: &DistanceMatrix,
) -> Result<(ScalarField, CutoffField)> {
    if h.len() != d.len() || f.len() != d.len() {
        return Err(LabError::Shape("field and distance sizes differ".into()));
    }
    let in_k = membership(d.len(), k);
    let anchor: Vec<usize> = f.support().into_iter().filter(|&x| in_k[x]).collect();
    let n = d.len();
    if anchor.is_empty() {
        return Ok((
            ScalarField::zeros(n),
            CutoffField {
                eta: ScalarField::zeros(n),
                core: Vec::new(),
                halo: Vec::new(),
                trivial: true,
            },
        ));
    }
    let dist: Vec<f64> = (0..n).map(|x| d.distance_to_set(x, &anchor)).collect();
    let eta = ScalarField::from_fn(n, |x| (2.0 - dist[x]).min(1.0).max(0.0));
    let g = ScalarField::from_fn(n, |x| eta.get(x) * h.get(x));

    let eta_lip = lip_global(&eta, d);
    if eta_lip > 1.0 + LIP_SLACK {
        return Err(LabError::invariant(
            "approximation",
            "cut-off is not 1-Lipschitz",
            1.0 - eta_lip,
        ));
    }
    let lhs = lip_global(&g, d);
    let rhs = lip_global(h, d) + h.sup_abs();
    if lhs > rhs * (1.0 + LIP_SLACK) {
        return Err(LabError::invariant(
            "approximation",
            "product bound for the cut-off fails",
            rhs - lhs,
        ));
    }
    Ok((
        g,
        CutoffField {
            eta,
            core: (0..n).filter(|&x| dist[x] <= 1.0).collect(),
            halo: (0..n).filter(|&x| dist[x] <= 2.0).collect(),
            trivial: false,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ApproxParams {
    pub p: f64,
    pub scale: f64,
    pub kind: BallKind,
    /// Levels below this index are never used.
    pub min_level: usize,
    pub retry_budget: u32,
}

impl ApproxParams {
    pub fn new(p: f64, scale: f64) -> Self {
        Self {
            p,
            scale,
            kind: BallKind::Open,
            min_level: 0,
            retry_budget: RETRY_BUDGET,
        }
    }

    pub fn with_kind(self, kind: BallKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_min_level(self, min_level: usize) -> Self {
        Self { min_level, ..self }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Constants {
    /// `Lip_d(f)` under the limit distance.
    pub lip: f64,
    /// `5L + 2 eps'`.
    pub c: f64,
    pub eps_prime: f64,
    pub sup_abs: f64,
    pub ambient_mass: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub bad_mass: f64,
    pub good_points: usize,
    pub egorov_radius: f64,
    pub partition_size: usize,
    /// Smallest level with `d <= d_i + eps' r` on the good set.
    pub uniform_level: usize,
    pub unconstrained_level: Option<usize>,
    pub patch_lip: f64,
    pub extension_constant: f64,
    pub slope_deviation: f64,
    pub retries: u32,
    /// `spt(f) ∩ K` was empty and `g = 0`.
    pub trivial: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxReport {
    pub level: usize,
    pub eps: f64,
    pub p: f64,
    pub scale: f64,
    pub kind: BallKind,
    /// `sum |g - f|^p m`.
    pub lp_gap: f64,
    /// `sum slope(g)^p m` at the chosen level.
    pub slope_integral_g: f64,
    /// `sum slope(f)^p m` under the limit distance.
    pub slope_integral_f: f64,
    pub energy_excess: f64,
    pub slope_controlled: bool,
    pub constants: Constants,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct Approximation {
    pub level: usize,
    pub field: ScalarField,
    pub report: ApproxReport,
}

/// `eps'` for the given budget: the largest value keeping the final error terms within
/// `eps`, capped below 1/4.
pub fn eps_prime_for(eps: f64, p: f64, lip: f64, sup_abs: f64, ambient_mass: f64) -> f64 {
    let denom =
        (3.0 * p * lip.powf(p - 1.0) + 1.0) * ambient_mass + (15.0 * lip + sup_abs + 7.0).powf(p);
    (eps / denom).min(EPS_PRIME_CAP)
}

fn slope_integral(values: &[f64], d: &DistanceMatrix, m: &Measure, params: &ApproxParams) -> f64 {
    let s: Vec<f64> = slope_values(values, d, params.scale, params.kind)
        .into_iter()
        .map(|v| pow_p(v, params.p))
        .collect();
    m.integrate(&s)
}

fn lp_gap(f: &ScalarField, g: &ScalarField, m: &Measure, p: f64) -> f64 {
    crate::energy::lp_distance_p(f, g, m, p)
}

fn uniform_level(
    family: &MonotoneDistanceFamily,
    k: &[usize],
    tolerance: f64,
    min_level: usize,
) -> Result<usize> {
    let gaps = family.uniform_convergence_gap(k)?.per_level;
    let mut best = (min_level, f64::INFINITY);
    for (i, &g) in gaps.iter().enumerate().skip(min_level) {
        if g <= tolerance {
            return Ok(i);
        }
        if g < best.1 {
            best = (i, g);
        }
    }
    Err(LabError::Exhaustion {
        best_level: best.0,
        best_gap: best.1,
        tolerance,
    })
}

struct Attempt {
    level: usize,
    field: ScalarField,
    diagnostics: Diagnostics,
    slope_integral_g: f64,
}

fn run_steps(
    f: &ScalarField,
    family: &MonotoneDistanceFamily,
    params: &ApproxParams,
    eps_prime: f64,
    lip: f64,
) -> Result<Attempt> {
    let d = family.limit();
    let m = family.measure();
    let all: Vec<usize> = (0..d.len()).collect();

    let sel = egorov_select(f, d, &all, eps_prime, m, params.scale, params.kind)?;
    let k = sel.good_set.clone();
    if k.is_empty() {
        return Err(LabError::Precondition("good set is empty".into()));
    }
    let partition = build_partition(&k, sel.radius, d, family.level(0))?;
    let i0 = uniform_level(family, &k, eps_prime * sel.radius, params.min_level)?;
    let patched = patch(f, &k, &partition, family, eps_prime, i0)?;
    let level = patched.level;
    let d_i = family.level(level);

    let worst = patched.field.max_gap_on(f, &k);
    if worst > eps_prime * (1.0 + LIP_SLACK) {
        return Err(LabError::invariant(
            "approximation",
            "patched function is not within eps' of f on the good set",
            eps_prime - worst,
        ));
    }
    let step_bound = 5.0 * lip + eps_prime;
    if patched.lip > step_bound * (1.0 + LIP_SLACK) {
        return Err(LabError::invariant(
            "approximation",
            format!(
                "patched Lipschitz constant {} exceeds 5L + eps'",
                patched.lip
            ),
            step_bound - patched.lip,
        ));
    }

    let ext = extend_slope_controlled(
        &patched.field,
        &k,
        d_i,
        eps_prime,
        params.scale,
        params.kind,
    )?;
    let (g, cut) = apply_cutoff(&ext.field, f, &k, d_i)?;
    let slope_integral_g = slope_integral(g.values(), d_i, m, params);
    Ok(Attempt {
        level,
        field: g,
        slope_integral_g,
        diagnostics: Diagnostics {
            bad_mass: sel.bad_mass,
            good_points: k.len(),
            egorov_radius: sel.radius,
            partition_size: partition.len(),
            uniform_level: i0,
            unconstrained_level: patched.unconstrained_level,
            patch_lip: patched.lip,
            extension_constant: ext.constant,
            slope_deviation: ext.slope_deviation,
            retries: 0,
            trivial: cut.trivial,
        },
    })
}

/// Runs the five steps and returns `g` at some level `i >= params.min_level` with
/// `sum |g - f|^p m <= eps` (always checked) and, when `slope_controlled` is set,
/// `sum slope_i(g)^p m <= sum slope(f)^p m + eps`. When the slope bound fails, `eps'` is
/// halved up to `retry_budget` times; the last attempt is returned with the flag cleared.
pub fn approx_with_slope_control(
    f: &ScalarField,
    eps: f64,
    family: &MonotoneDistanceFamily,
    params: &ApproxParams,
) -> Result<Approximation> {
    family.require_increasing("the slope-controlled approximation")?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LabError::Parameter(format!("eps must be > 0, got {eps}")));
    }
    if !(params.p > 1.0 && params.p.is_finite()) {
        return Err(LabError::Parameter(format!(
            "exponent p must be > 1, got {}",
            params.p
        )));
    }
    if !(params.scale > 0.0 && params.scale.is_finite()) {
        return Err(LabError::Parameter(format!(
            "scale must be > 0, got {}",
            params.scale
        )));
    }
    if f.len() != family.num_points() {
        return Err(LabError::Shape("field and family sizes differ".into()));
    }
    if params.min_level >= family.len() {
        return Err(LabError::Exhaustion {
            best_level: family.len(),
            best_gap: f64::INFINITY,
            tolerance: eps,
        });
    }
    let d = family.limit();
    let m = family.measure();
    let lip = lip_global(f, d);
    let sup_abs = f.sup_abs();
    let ambient_mass = m.total();
    let mut eps_prime = eps_prime_for(eps, params.p, lip, sup_abs, ambient_mass);
    let slope_integral_f = slope_integral(f.values(), d, m, params);

    let report = |level: usize, g: &ScalarField, sig: f64, eps_prime: f64, diag: Diagnostics| {
        let excess = sig - slope_integral_f;
        ApproxReport {
            level,
            eps,
            p: params.p,
            scale: params.scale,
            kind: params.kind,
            lp_gap: lp_gap(f, g, m, params.p),
            slope_integral_g: sig,
            slope_integral_f,
            energy_excess: excess,
            slope_controlled: excess <= eps,
            constants: Constants {
                lip,
                c: 5.0 * lip + 2.0 * eps_prime,
                eps_prime,
                sup_abs,
                ambient_mass,
            },
            diagnostics: diag,
        }
    };

    if f.support().is_empty() {
        let g = ScalarField::zeros(f.len());
        let diag = Diagnostics {
            trivial: true,
            uniform_level: params.min_level,
            ..Diagnostics::default()
        };
        let r = report(params.min_level, &g, 0.0, eps_prime, diag);
        return Ok(Approximation {
            level: params.min_level,
            field: g,
            report: r,
        });
    }

    let mut retries = 0;
    loop {
        let mut attempt = run_steps(f, family, params, eps_prime, lip)?;
        attempt.diagnostics.retries = retries;
        let r = report(
            attempt.level,
            &attempt.field,
            attempt.slope_integral_g,
            eps_prime,
            attempt.diagnostics,
        );
        if r.lp_gap > eps {
            return Err(LabError::invariant(
                "approximation",
                format!("L^p gap {} exceeds eps {eps}", r.lp_gap),
                eps - r.lp_gap,
            ));
        }
        if r.slope_controlled || retries >= params.retry_budget {
            if !r.slope_controlled {
                warn!(
                    "slope integral exceeds the target by {} after {retries} retries",
                    r.energy_excess - eps
                );
            }
            return Ok(Approximation {
                level: attempt.level,
                field: attempt.field,
                report: r,
            });
        }
        retries += 1;
        eps_prime /= 2.0;
        debug!("retrying with eps' = {eps_prime}");
    }
}
