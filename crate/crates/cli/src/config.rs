//! Scenario files: which space, family, field and energy to use, and which experiment to run.

use std::fmt;
use std::path::{Path, PathBuf};

use mosco_lab::energy::Backend;
use mosco_lab::metric::BallKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Energy,
    Approx,
    MoscoLiminf,
    MoscoRecovery,
    Hilbertianity,
    Snowflake,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Energy => "energy",
            Experiment::Approx => "approx",
            Experiment::MoscoLiminf => "mosco-liminf",
            Experiment::MoscoRecovery => "mosco-recovery",
            Experiment::Hilbertianity => "hilbertianity",
            Experiment::Snowflake => "snowflake",
        }
    }

    fn needs_family(self) -> bool {
        matches!(
            self,
            Experiment::Approx
                | Experiment::MoscoLiminf
                | Experiment::MoscoRecovery
                | Experiment::Hilbertianity
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorName {
    Identity,
    Heisenberg,
    Grushin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceSpec {
    Csv {
        distances: PathBuf,
        measure: Option<PathBuf>,
    },
    UnitInterval {
        n: usize,
    },
    RandomEuclidean {
        n: usize,
        dim: usize,
    },
    /// The grid carries its own family of shortest-path metrics.
    RiemannianGrid {
        dims: Vec<usize>,
        step: f64,
        #[serde(default)]
        diagonals: bool,
        tensor: TensorName,
        penalties: Vec<f64>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    SnowflakeBelow {
        schedule: Option<Vec<u32>>,
        /// Shorthand for the schedule `2, 4, ..., 2^dyadic`.
        dyadic: Option<u32>,
        #[serde(default = "yes")]
        include_limit: bool,
    },
    SnowflakeAbove {
        schedule: Vec<u32>,
    },
    Constant {
        count: usize,
    },
    /// Level matrices, increasing towards the space's distance.
    Csv {
        levels: Vec<PathBuf>,
    },
    /// The shortest-path levels of a `riemannian-grid` space.
    Riemannian,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    #[serde(default = "default_p")]
    pub p: f64,
    /// Defaults to twice the median nearest-neighbour distance.
    pub scale: Option<f64>,
    #[serde(default)]
    pub kind: BallKind,
    #[serde(default)]
    pub backend: Backend,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self {
            p: default_p(),
            scale: None,
            kind: BallKind::Open,
            backend: Backend::Slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// One coordinate of generated points.
    Coordinate {
        #[serde(default)]
        axis: usize,
    },
    Distance {
        center: usize,
    },
    /// `max(radius - d(x, center), 0)`.
    ClampedDistance {
        center: usize,
        radius: f64,
    },
    /// Entries uniform in `[-1, 1]` drawn from the scenario seed.
    Random,
    Csv {
        path: PathBuf,
    },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::ClampedDistance {
            center: 0,
            radius: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Constant,
    /// `f_i = f + e_x / (i + 1)` with `x = bump_point`.
    #[default]
    Bump,
}

fn default_eps() -> f64 {
    0.05
}

fn default_trials() -> usize {
    100
}

fn default_schedule() -> Vec<u64> {
    vec![1, 2, 3, 4]
}

fn default_levels() -> Vec<u32> {
    vec![2, 3, 4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Values of `n` for the recovery blocks, tolerance `1/n` each.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<u64>,
    #[serde(default)]
    pub sequence: SequenceKind,
    #[serde(default)]
    pub bump_point: usize,
    /// Sequence length; defaults to the number of levels.
    pub length: Option<usize>,
    /// Snowflake indices `i`.
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    /// Explicit radius grid; otherwise geometric from `radius_min` to `radius_max`.
    pub radii: Option<Vec<f64>>,
    pub radius_min: Option<f64>,
    pub radius_max: Option<f64>,
    pub radius_count: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            trials: default_trials(),
            schedule: default_schedule(),
            sequence: SequenceKind::default(),
            bump_point: 0,
            length: None,
            levels: default_levels(),
            radii: None,
            radius_min: None,
            radius_max: None,
            radius_count: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub p: Option<Vec<f64>>,
    pub scale: Option<Vec<f64>>,
    pub eps: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
    pub trials: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub space: SpaceSpec,
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub params: Params,
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        self.experiment
            .ok_or_else(|| CliError::Config("missing key `experiment`".into()))
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let exp = self.experiment()?;
        if exp.needs_family() && self.family.is_none() {
            let implied = matches!(self.space, SpaceSpec::RiemannianGrid { .. });
            if !implied {
                return Err(CliError::Config(format!(
                    "missing key `family`, required by experiment `{exp}`"
                )));
            }
        }
        match (&self.space, &self.family) {
            (SpaceSpec::RiemannianGrid { .. }, Some(f)) if *f != FamilySpec::Riemannian => {
                return Err(CliError::Config(
                    "a `riemannian-grid` space only supports `family.kind = \"riemannian\"`".into(),
                ))
            }
            (s, Some(FamilySpec::Riemannian)) if !matches!(s, SpaceSpec::RiemannianGrid { .. }) => {
                return Err(CliError::Config(
                    "`family.kind = \"riemannian\"` needs `space.source = \"riemannian-grid\"`"
                        .into(),
                ))
            }
            _ => {}
        }
        if let Some(FamilySpec::SnowflakeBelow {
            schedule, dyadic, ..
        }) = &self.family
        {
            if schedule.is_some() == dyadic.is_some() {
                return Err(CliError::Config(
                    "family: give exactly one of `schedule` and `dyadic`".into(),
                ));
            }
        }
        if let SpaceSpec::RiemannianGrid { penalties, .. } = &self.space {
            if penalties.is_empty() {
                return Err(CliError::Config("space.penalties must not be empty".into()));
            }
        }
        if exp == Experiment::MoscoRecovery && self.params.schedule.is_empty() {
            return Err(CliError::Config("params.schedule must not be empty".into()));
        }
        if exp == Experiment::Snowflake && self.params.levels.is_empty() {
            return Err(CliError::Config("params.levels must not be empty".into()));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        Ok(())
    }

    /// Radius grid for the snowflake experiment.
    pub fn radii(&self) -> Result<Vec<f64>, CliError> {
        let p = &self.params;
        if let Some(r) = &p.radii {
            return Ok(r.clone());
        }
        match (p.radius_min, p.radius_max, p.radius_count) {
            (Some(lo), Some(hi), Some(k)) if k >= 2 && lo > 0.0 && hi > lo => {
                let ratio = hi / lo;
                Ok((0..k)
                    .map(|j| lo * ratio.powf(j as f64 / (k - 1) as f64))
                    .collect())
            }
            _ => Err(CliError::Config(
                "params: give `radii` or `radius_min < radius_max` with `radius_count >= 2`".into(),
            )),
        }
    }

    /// Resolves relative data paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let SpaceSpec::Csv { distances, measure } = &mut self.space {
            fix(distances);
            if let Some(m) = measure {
                fix(m);
            }
        }
        if let Some(FamilySpec::Csv { levels }) = &mut self.family {
            levels.iter_mut().for_each(fix);
        }
        if let FieldSpec::Csv { path } = &mut self.field {
            fix(path);
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let axes = [
            ("p", self.p.as_ref().map(Vec::len)),
            ("scale", self.scale.as_ref().map(Vec::len)),
            ("eps", self.eps.as_ref().map(Vec::len)),
            ("seed", self.seed.as_ref().map(Vec::len)),
            ("trials", self.trials.as_ref().map(Vec::len)),
        ];
        if axes.iter().all(|(_, len)| len.is_none()) {
            return Err(CliError::Config("sweep: no parameter axis given".into()));
        }
        if let Some((name, _)) = axes.iter().find(|(_, len)| *len == Some(0)) {
            return Err(CliError::Config(format!("sweep.{name} is empty")));
        }
        Ok(())
    }

    /// Cartesian product in axis order `p, scale, eps, seed, trials`, last axis fastest.
    pub fn combinations(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let mut out = vec![base.clone()];
        macro_rules! axis {
            ($values:expr, |$cfg:ident, $v:ident| $apply:expr) => {
                if let Some(values) = &$values {
                    out = out
                        .into_iter()
                        .flat_map(|c| {
                            values.iter().map(move |&$v| {
                                let mut $cfg = c.clone();
                                $apply;
                                $cfg
                            })
                        })
                        .collect();
                }
            };
        }
        axis!(self.p, |c, v| c.energy.p = v);
        axis!(self.scale, |c, v| c.energy.scale = Some(v));
        axis!(self.eps, |c, v| c.params.eps = v);
        axis!(self.seed, |c, v| c.seed = v);
        axis!(self.trials, |c, v| c.params.trials = v);
        for c in &mut out {
            c.sweep = None;
        }
        out
    }
}
