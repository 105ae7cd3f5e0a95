//! Turns a [`ScenarioConfig`] into spaces, families and fields.

use mosco_lab::energy::{random_field, EnergyConfig};
use mosco_lab::io;
use mosco_lab::lipschitz::ScalarField;
use mosco_lab::metric::{
    dyadic_schedule, riemannian_grid_family, Direction, GridSpec, HeisenbergTensor, IdentityTensor,
    MetricMeasureSpace, MonotoneDistanceFamily, PenalizedGrushinTensor, TensorField,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FamilySpec, FieldSpec, ScenarioConfig, SpaceSpec, TensorName};
use crate::error::CliError;

pub struct Scenario {
    pub space: MetricMeasureSpace,
    pub family: Option<MonotoneDistanceFamily>,
}

fn tensor(name: TensorName, dim: usize) -> Box<dyn TensorField> {
    match name {
        TensorName::Identity => Box::new(IdentityTensor { dim }),
        TensorName::Heisenberg => Box::new(HeisenbergTensor),
        TensorName::Grushin => Box::new(PenalizedGrushinTensor),
    }
}

pub fn build(cfg: &ScenarioConfig) -> Result<Scenario, CliError> {
    let (space, grid_family) = match &cfg.space {
        SpaceSpec::Csv { distances, measure } => {
            let d = io::read_distances(distances)?;
            let space =
                MetricMeasureSpace::new(d.clone(), mosco_lab::metric::Measure::uniform(d.len()))?;
            let space = match measure {
                Some(m) => space.with_measure(io::read_measure(m)?)?,
                None => space,
            };
            (space, None)
        }
        SpaceSpec::UnitInterval { n } => (MetricMeasureSpace::unit_interval(*n)?, None),
        SpaceSpec::RandomEuclidean { n, dim } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (
                MetricMeasureSpace::random_euclidean(*n, *dim, &mut rng)?,
                None,
            )
        }
        SpaceSpec::RiemannianGrid {
            dims,
            step,
            diagonals,
            tensor: name,
            penalties,
        } => {
            let grid = GridSpec {
                dims: dims.clone(),
                step: *step,
                diagonals: *diagonals,
            };
            let fam =
                riemannian_grid_family(&grid, tensor(*name, dims.len()).as_ref(), penalties, None)?;
            (fam.base().clone(), Some(fam))
        }
    };
    let family = match (&cfg.family, grid_family) {
        (None, fam) | (Some(FamilySpec::Riemannian), fam) => fam,
        (Some(spec), _) => Some(build_family(spec, &space)?),
    };
    Ok(Scenario { space, family })
}

fn build_family(
    spec: &FamilySpec,
    space: &MetricMeasureSpace,
) -> Result<MonotoneDistanceFamily, CliError> {
    let base = space.clone();
    Ok(match spec {
        FamilySpec::SnowflakeBelow {
            schedule,
            dyadic,
            include_limit,
        } => {
            let schedule = match (schedule, dyadic) {
                (Some(s), None) => s.clone(),
                (None, Some(k)) => dyadic_schedule(*k),
                _ => {
                    return Err(CliError::Config(
                        "family: give exactly one of `schedule` and `dyadic`".into(),
                    ))
                }
            };
            MonotoneDistanceFamily::snowflake_from_below(base, &schedule, *include_limit)?
        }
        FamilySpec::SnowflakeAbove { schedule } => {
            MonotoneDistanceFamily::snowflake_from_above(base, schedule)?
        }
        FamilySpec::Constant { count } => MonotoneDistanceFamily::constant(base, *count)?,
        FamilySpec::Csv { levels } => {
            let levels = levels
                .iter()
                .map(|p| io::read_distances(p))
                .collect::<Result<Vec<_>, _>>()?;
            MonotoneDistanceFamily::new(base, levels, Direction::Increasing)?
        }
        FamilySpec::Riemannian => {
            return Err(CliError::Config(
                "`family.kind = \"riemannian\"` needs `space.source = \"riemannian-grid\"`".into(),
            ))
        }
    })
}

pub fn field(cfg: &ScenarioConfig, space: &MetricMeasureSpace) -> Result<ScalarField, CliError> {
    let n = space.len();
    let d = space.dist();
    let check = |x: usize| d.check_point(x).map_err(CliError::from);
    let f = match &cfg.field {
        FieldSpec::Zero => ScalarField::zeros(n),
        FieldSpec::Coordinate { axis } => {
            let coords = space.coords().ok_or_else(|| {
                CliError::Config("field `coordinate` needs a generated space".into())
            })?;
            if coords.first().is_some_and(|c| *axis >= c.len()) {
                return Err(CliError::Config(format!(
                    "field.axis {axis} is out of range"
                )));
            }
            ScalarField::from_fn(n, |x| coords[x][*axis])
        }
        FieldSpec::Distance { center } => {
            check(*center)?;
            ScalarField::from_fn(n, |x| d.get(x, *center))
        }
        FieldSpec::ClampedDistance { center, radius } => {
            check(*center)?;
            ScalarField::from_fn(n, |x| (radius - d.get(x, *center)).max(0.0))
        }
        FieldSpec::Random => random_field(n, cfg.seed),
        FieldSpec::Csv { path } => {
            let f = io::read_field(path)?;
            if f.len() != n {
                return Err(CliError::Config(format!(
                    "field file has {} values for {n} points",
                    f.len()
                )));
            }
            f
        }
    };
    Ok(f)
}

pub fn energy_config(
    cfg: &ScenarioConfig,
    space: &MetricMeasureSpace,
) -> Result<EnergyConfig, CliError> {
    let e = &cfg.energy;
    let config = EnergyConfig {
        p: e.p,
        scale: e.scale.unwrap_or_else(|| space.dist().default_scale()),
        kind: e.kind,
        backend: e.backend,
    };
    config.validate()?;
    Ok(config)
}
