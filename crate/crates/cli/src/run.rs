//! Experiment execution, output files and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use mosco_lab::approximation::{approx_with_slope_control, ApproxParams};
use mosco_lab::energy::{asymptotic_energy, sobolev_norm, EnergyConfig, EnergyReport};
use mosco_lab::io;
use mosco_lab::lipschitz::{slope_field, ScalarField};
use mosco_lab::metric::{validate_metric, MetricVerdict};
use mosco_lab::mosco::{
    gamma_liminf_check, hilbertianity_stability_experiment, recovery_sequence,
    snowflake_counterexample, FunctionSequence,
};
use mosco_lab::LabError;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ScenarioConfig, SequenceKind, SpaceSpec};
use crate::error::CliError;
use crate::scenario::{self, Scenario};

pub const MANIFEST: &str = "manifest.json";
pub const FAILURE: &str = "failure.json";

/// Command-line overrides applied on top of the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub experiment: Option<Experiment>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub dir: String,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub experiment: Experiment,
    pub config: ScenarioConfig,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
    pub stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<SweepEntry>,
}

/// Files written by one experiment plus its headline numbers.
struct Outcome {
    files: Vec<String>,
    summary: Vec<(String, String)>,
    failure: Option<CliError>,
}

struct Writer<'a> {
    dir: &'a Path,
    prefix: String,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, prefix: &str) -> Self {
        Self {
            dir,
            prefix: prefix.to_string(),
            files: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(format!("{}{name}", self.prefix));
        self.dir.join(name)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.path(name);
        Ok(io::write_json(&p, value)?)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let p = self.path(name);
        Ok(io::write_csv(&p, rows)?)
    }

    fn column(&mut self, name: &str, values: &[f64]) -> Result<(), CliError> {
        let p = self.path(name);
        Ok(io::write_column(&p, values)?)
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn prepare(path: &Path, overrides: &Overrides) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    cfg.resolve_paths(&base);
    if let Some(e) = overrides.experiment {
        cfg.experiment = Some(e);
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = overrides
        .out
        .clone()
        .or_else(|| {
            cfg.out.as_ref().map(|o| {
                if o.is_relative() {
                    base.join(o)
                } else {
                    o.clone()
                }
            })
        })
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn write_failure(out: &Path, err: &CliError) {
    if let Err(e) = io::write_json(&out.join(FAILURE), &err.record()) {
        log::error!("could not write failure record: {e}");
    }
}

fn finish(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    for f in &manifest.files {
        let meta = std::fs::metadata(out.join(f)).map_err(|e| CliError::Io(format!("{f}: {e}")))?;
        if meta.len() == 0 {
            return Err(CliError::Io(format!("output {f} is empty")));
        }
    }
    io::write_json(&out.join(MANIFEST), manifest)?;
    Ok(())
}

/// Runs the experiment selected by the scenario file and writes its outputs, the
/// manifest, and on failure a `failure.json` record.
pub fn run(config: &Path, overrides: &Overrides) -> Result<RunManifest, CliError> {
    let (cfg, out) = prepare(config, overrides)?;
    let _ = std::fs::remove_file(out.join(FAILURE));
    let exp = cfg.experiment()?;
    let start = Instant::now();
    let outcome = match execute(&cfg, &out, "") {
        Ok(o) => o,
        Err(e) => {
            write_failure(&out, &e);
            return Err(e);
        }
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        experiment: exp,
        config: cfg,
        files: outcome.files,
        stages: vec![Stage {
            name: exp.name().into(),
            seconds: start.elapsed().as_secs_f64(),
        }],
        runs: Vec::new(),
    };
    finish(&out, &manifest)?;
    if let Some(e) = outcome.failure {
        write_failure(&out, &e);
        return Err(e);
    }
    Ok(manifest)
}

/// Runs one experiment per point of the `[sweep]` grid into `run-NNN` subdirectories and
/// writes a `sweep.csv` summary with one row per grid point, in grid order.
pub fn sweep(config: &Path, overrides: &Overrides) -> Result<RunManifest, CliError> {
    let (cfg, out) = prepare(config, overrides)?;
    let _ = std::fs::remove_file(out.join(FAILURE));
    let exp = cfg.experiment()?;
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("missing table `sweep`".into()))?;
    let combos = spec.combinations(&cfg);
    let start = Instant::now();
    let results: Vec<(String, Result<Outcome, CliError>)> = combos
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let dir_name = format!("run-{i:03}");
            let dir = out.join(&dir_name);
            let res = std::fs::create_dir_all(&dir)
                .map_err(CliError::from)
                .and_then(|_| execute(c, &dir, &format!("{dir_name}/")));
            (dir_name, res)
        })
        .collect();

    let mut files = Vec::new();
    let mut runs = Vec::new();
    let mut first_failure = None;
    let mut header: Vec<String> = ["index", "p", "scale", "eps", "seed", "trials", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut table: Vec<Vec<String>> = Vec::new();
    for (i, ((dir, res), c)) in results.into_iter().zip(&combos).enumerate() {
        let scale = c.energy.scale.map_or_else(|| "default".to_string(), fmt);
        let mut row = vec![
            i.to_string(),
            fmt(c.energy.p),
            scale,
            fmt(c.params.eps),
            c.seed.to_string(),
            c.params.trials.to_string(),
        ];
        let status = match res {
            Ok(o) => {
                files.extend(o.files);
                if header.len() == 7 {
                    header.extend(o.summary.iter().map(|(k, _)| k.clone()));
                }
                let status = match &o.failure {
                    Some(e) => e.record().kind.to_string(),
                    None => "ok".to_string(),
                };
                row.push(status.clone());
                row.extend(o.summary.into_iter().map(|(_, v)| v));
                if let Some(e) = o.failure {
                    first_failure.get_or_insert(e);
                }
                status
            }
            Err(e) => {
                let status = e.record().kind.to_string();
                row.push(status.clone());
                write_failure(&out.join(&dir), &e);
                first_failure.get_or_insert(e);
                status
            }
        };
        runs.push(SweepEntry {
            index: i,
            dir,
            status,
        });
        table.push(row);
    }
    let width = header.len();
    for row in &mut table {
        row.resize(width, String::new());
    }
    let mut rows = vec![header];
    rows.extend(table);
    io::write_atomic(&out.join("sweep.csv"), &io::csv_bytes(&rows)?)?;
    files.push("sweep.csv".into());

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        experiment: exp,
        config: cfg,
        files,
        stages: vec![Stage {
            name: "sweep".into(),
            seconds: start.elapsed().as_secs_f64(),
        }],
        runs,
    };
    finish(&out, &manifest)?;
    match first_failure {
        Some(e) => {
            write_failure(&out, &e);
            Err(e)
        }
        None => Ok(manifest),
    }
}

#[derive(Serialize)]
struct LevelVerdict {
    level: usize,
    verdict: MetricVerdict,
}

#[derive(Serialize)]
struct ValidationReport {
    points: usize,
    space: MetricVerdict,
    levels: Vec<LevelVerdict>,
    monotone_violations: usize,
    ok: bool,
}

#[derive(Serialize)]
struct EnergyRow {
    scale: f64,
    level: String,
    p: f64,
    backend: String,
    value: f64,
}

#[derive(Serialize)]
struct EnergySummary<'a> {
    limit: &'a EnergyReport,
    sobolev_norm: f64,
    levels: Vec<f64>,
}

#[derive(Serialize)]
struct ApproxRow {
    level: usize,
    eps: f64,
    p: f64,
    scale: f64,
    lp_gap: f64,
    energy_excess: f64,
    slope_controlled: bool,
    eps_prime: f64,
    retries: u32,
    slope_deviation: f64,
}

#[derive(Serialize)]
struct DefectRow {
    level: String,
    max_relative: f64,
    argmax: usize,
}

fn level_name(level: Option<usize>) -> String {
    level.map_or_else(|| "limit".to_string(), |l| l.to_string())
}

fn require_family(s: &Scenario) -> Result<&mosco_lab::metric::MonotoneDistanceFamily, CliError> {
    s.family
        .as_ref()
        .ok_or_else(|| CliError::Config("missing key `family`".into()))
}

fn execute(cfg: &ScenarioConfig, out: &Path, prefix: &str) -> Result<Outcome, CliError> {
    let exp = cfg.experiment()?;
    info!("running {exp} into {}", out.display());
    let mut w = Writer::new(out, prefix);
    let mut summary: Vec<(String, String)> = Vec::new();
    let mut failure = None;

    if exp == Experiment::Validate {
        if let SpaceSpec::Csv { distances, .. } = &cfg.space {
            let rows = io::read_rows(distances)?;
            let verdict = validate_metric(&rows)?;
            if !verdict.is_ok() {
                let report = ValidationReport {
                    points: rows.len(),
                    ok: false,
                    space: verdict,
                    levels: Vec::new(),
                    monotone_violations: 0,
                };
                w.json("verdict.json", &report)?;
                return Ok(Outcome {
                    files: w.files,
                    summary: vec![("ok".into(), "false".into())],
                    failure: Some(CliError::Lab(LabError::invariant(
                        "metric_core",
                        "distance matrix violates the metric axioms",
                        -(report.space.violations.len() as f64),
                    ))),
                });
            }
        }
    }

    let sc = scenario::build(cfg)?;
    let space = &sc.space;
    match exp {
        Experiment::Validate => {
            let levels: Vec<LevelVerdict> = sc
                .family
                .iter()
                .flat_map(|f| f.levels().iter().enumerate())
                .map(|(level, d)| LevelVerdict {
                    level,
                    verdict: d.verdict(),
                })
                .collect();
            let monotone_violations = sc
                .family
                .as_ref()
                .map_or(0, |f| f.monotonicity_violations().len());
            let space_verdict = space.dist().verdict();
            let ok = space_verdict.is_ok()
                && levels.iter().all(|l| l.verdict.is_ok())
                && monotone_violations == 0;
            w.json(
                "verdict.json",
                &ValidationReport {
                    points: space.len(),
                    space: space_verdict,
                    levels,
                    monotone_violations,
                    ok,
                },
            )?;
            summary.push(("ok".into(), ok.to_string()));
            if !ok {
                failure = Some(CliError::Lab(LabError::invariant(
                    "metric_core",
                    "metric or monotonicity check failed",
                    -(monotone_violations as f64),
                )));
            }
        }
        Experiment::Energy => {
            let f = scenario::field(cfg, space)?;
            let ec = scenario::energy_config(cfg, space)?;
            let limit = asymptotic_energy(&f, space.dist(), space.measure(), &ec)?;
            let norm = sobolev_norm(&f, space.dist(), space.measure(), &ec)?;
            let mut rows = Vec::new();
            let mut level_values = Vec::new();
            if let Some(fam) = &sc.family {
                for (i, d) in fam.levels().iter().enumerate() {
                    let v = asymptotic_energy(&f, d, space.measure(), &ec)?.value;
                    level_values.push(v);
                    rows.push(EnergyRow {
                        scale: ec.scale,
                        level: i.to_string(),
                        p: ec.p,
                        backend: ec.backend.to_string(),
                        value: v,
                    });
                }
            }
            rows.push(EnergyRow {
                scale: ec.scale,
                level: "limit".into(),
                p: ec.p,
                backend: ec.backend.to_string(),
                value: limit.value,
            });
            let slope = slope_field(&f, space.dist(), ec.scale, ec.kind)?;
            w.json(
                "energy.json",
                &EnergySummary {
                    limit: &limit,
                    sobolev_norm: norm,
                    levels: level_values,
                },
            )?;
            w.csv("energies.csv", &rows)?;
            let p = w.path("slope.csv");
            io::write_slope(&p, &slope)?;
            summary.push(("energy".into(), fmt(limit.value)));
            summary.push(("sobolev_norm".into(), fmt(norm)));
        }
        Experiment::Approx => {
            let fam = require_family(&sc)?;
            let f = scenario::field(cfg, space)?;
            let ec = scenario::energy_config(cfg, space)?;
            let params = ApproxParams::new(ec.p, ec.scale).with_kind(ec.kind);
            let a = approx_with_slope_control(&f, cfg.params.eps, fam, &params)?;
            let r = &a.report;
            w.json("approx.json", r)?;
            w.csv(
                "approx_summary.csv",
                &[ApproxRow {
                    level: r.level,
                    eps: r.eps,
                    p: r.p,
                    scale: r.scale,
                    lp_gap: r.lp_gap,
                    energy_excess: r.energy_excess,
                    slope_controlled: r.slope_controlled,
                    eps_prime: r.constants.eps_prime,
                    retries: r.diagnostics.retries,
                    slope_deviation: r.diagnostics.slope_deviation,
                }],
            )?;
            w.column("g.csv", a.field.values())?;
            summary.push(("level".into(), r.level.to_string()));
            summary.push(("lp_gap".into(), fmt(r.lp_gap)));
            summary.push(("energy_excess".into(), fmt(r.energy_excess)));
            summary.push(("slope_controlled".into(), r.slope_controlled.to_string()));
        }
        Experiment::MoscoLiminf => {
            let fam = require_family(&sc)?;
            let f = scenario::field(cfg, space)?;
            let ec = slope_config(cfg, space)?;
            let len = cfg.params.length.unwrap_or(fam.len());
            let seq = match cfg.params.sequence {
                SequenceKind::Constant => FunctionSequence::constant(f, len)?,
                SequenceKind::Bump => {
                    space.dist().check_point(cfg.params.bump_point)?;
                    let fields = (0..len)
                        .map(|i| {
                            let mut v = f.clone().into_values();
                            v[cfg.params.bump_point] += 1.0 / (i + 1) as f64;
                            ScalarField::new(v)
                        })
                        .collect();
                    FunctionSequence::new(fields, f)?
                }
            };
            let r = gamma_liminf_check(fam, &seq, &ec)?;
            w.json("liminf.json", &r)?;
            w.csv("liminf.csv", &r.rows)?;
            summary.push(("liminf_margin".into(), fmt(r.liminf_margin)));
            summary.push(("final_kappa".into(), fmt(r.final_kappa)));
            summary.push(("liminf_ok".into(), r.liminf_ok.to_string()));
        }
        Experiment::MoscoRecovery => {
            let fam = require_family(&sc)?;
            let f = scenario::field(cfg, space)?;
            let ec = slope_config(cfg, space)?;
            let r = recovery_sequence(&f, fam, &ec, &cfg.params.schedule)?;
            w.json("recovery.json", &r)?;
            w.csv("recovery.csv", &r.rows)?;
            summary.push(("blocks".into(), r.blocks.len().to_string()));
            summary.push(("limsup_margin".into(), fmt(r.limsup_margin)));
            summary.push(("limsup_ok".into(), r.limsup_ok.to_string()));
            summary.push(("truncated".into(), r.truncated.to_string()));
            if !r.limsup_ok {
                failure = Some(CliError::Lab(LabError::invariant(
                    "mosco",
                    "recovery energies exceed the limit energy beyond tolerance",
                    r.limsup_tolerance + r.limsup_margin,
                )));
            }
        }
        Experiment::Hilbertianity => {
            let fam = require_family(&sc)?;
            let ec = scenario::energy_config(cfg, space)?;
            let r = hilbertianity_stability_experiment(fam, &ec, cfg.params.trials, cfg.seed)?;
            let rows: Vec<DefectRow> = r
                .levels
                .iter()
                .chain(std::iter::once(&r.limit))
                .map(|l| DefectRow {
                    level: level_name(l.level),
                    max_relative: l.max_relative,
                    argmax: l.argmax,
                })
                .collect();
            w.json("hilbertianity.json", &r)?;
            w.csv("hilbertianity.csv", &rows)?;
            summary.push(("limit_defect".into(), fmt(r.limit.max_relative)));
            summary.push(("all_quadratic".into(), r.all_quadratic.to_string()));
        }
        Experiment::Snowflake => {
            let f = scenario::field(cfg, space)?;
            let radii = cfg.radii()?;
            let t = snowflake_counterexample(
                space,
                &f,
                cfg.energy.p,
                &radii,
                &cfg.params.levels,
                cfg.energy.kind,
            )?;
            w.csv("snowflake.csv", &t.rows)?;
            w.csv("snowflake_base.csv", &t.base)?;
            w.json("snowflake.json", &t)?;
            summary.push(("violations".into(), t.violations.to_string()));
            summary.push(("violations_2r".into(), t.violations_2r.to_string()));
            for fit in &t.fits {
                summary.push((
                    format!("exponent_{}", fit.level),
                    fit.exponent.map_or_else(String::new, fmt),
                ));
            }
        }
    }
    Ok(Outcome {
        files: w.files,
        summary,
        failure,
    })
}

fn slope_config(
    cfg: &ScenarioConfig,
    space: &mosco_lab::metric::MetricMeasureSpace,
) -> Result<EnergyConfig, CliError> {
    let ec = scenario::energy_config(cfg, space)?;
    if ec.backend != mosco_lab::energy::Backend::Slope {
        return Err(CliError::Config(format!(
            "experiment `{}` needs `energy.backend = \"slope\"`",
            cfg.experiment.map_or("", Experiment::name)
        )));
    }
    Ok(ec)
}
