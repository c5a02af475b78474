//! Declarative twin-experiment configuration, the built-in presets and the
//! end-to-end pipeline shared by the command line and the browser demo.

mod presets;
mod run;

use serde::{Deserialize, Serialize};

use crate::assimilate::{DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_TSVD_THRESHOLD};
use crate::dynamics::{
    builtin_model, gaussian_field_ic, AdvectionDiffusion2d, Burgers1d, ControlVector, ModelKind,
    ModelOptions, ModelSystem, TimeGrid,
};
use crate::error::{Error, Result};
use crate::observe::{ObservationOperator, PlacementConstraints, ScalarObservation};

pub use presets::{preset, PRESET_NAMES};
pub use run::{
    run, run_sweep, sensitivity_table, ErrorStats, FieldSummary, LevelOutput, LevelSummary,
    RunError, RunOutput, RunSummary, SeedOutput, SeedSummary, SweepOutput, SweepSummary, Table,
    TableFormat,
};

/// Model name plus its options, e.g. `{"name": "burgers_1d", "n": 128, "re": 500}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub options: ModelOptions,
}

/// How a control vector is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Explicit {
        initial_state: Vec<f64>,
        #[serde(default)]
        parameters: Vec<f64>,
    },
    /// Burgers ramp-and-front profile; `re` defaults to the model's.
    ShockProfile {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        re: Option<f64>,
    },
    /// Burgers `sin(2πx/L)`.
    SineProfile,
    /// Advection–diffusion Gaussian bump; `width` defaults to the model's `nu`.
    Gaussian {
        center: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
    },
}

impl ControlSpec {
    pub fn scalar(x0: f64, alpha: f64) -> Self {
        Self::Explicit {
            initial_state: vec![x0],
            parameters: vec![alpha],
        }
    }

    fn resolve(&self, model: &ModelSpec) -> Result<ControlVector> {
        let wrong = |what: &str| {
            Error::Invalid(format!(
                "{what} control needs model {}",
                match what {
                    "gaussian" => "advdiff_2d",
                    _ => "burgers_1d",
                }
            ))
        };
        match self {
            Self::Explicit {
                initial_state,
                parameters,
            } => Ok(ControlVector::new(
                initial_state.clone(),
                parameters.clone(),
            )),
            Self::ShockProfile { re } => {
                if model.name != "burgers_1d" {
                    return Err(wrong("shock_profile"));
                }
                let m = Burgers1d::from_options(&model.options)?;
                let re = re.unwrap_or(m.reynolds());
                Ok(ControlVector::new(
                    m.shock_profile(re).as_slice().to_vec(),
                    vec![],
                ))
            }
            Self::SineProfile => {
                if model.name != "burgers_1d" {
                    return Err(wrong("sine_profile"));
                }
                let m = Burgers1d::from_options(&model.options)?;
                Ok(ControlVector::new(
                    m.sine_profile().as_slice().to_vec(),
                    vec![],
                ))
            }
            Self::Gaussian { center, width } => {
                if model.name != "advdiff_2d" {
                    return Err(wrong("gaussian"));
                }
                let m = AdvectionDiffusion2d::from_options(&model.options)?;
                let ic = gaussian_field_ic(
                    (center[0], center[1]),
                    width.unwrap_or(m.viscosity()),
                    m.grid(),
                )?;
                Ok(ControlVector::new(ic.as_slice().to_vec(), vec![]))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operator", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    #[default]
    Identity,
    Square,
    Pointwise {
        indices: Vec<usize>,
    },
}

impl ObservationSpec {
    pub fn operator(&self) -> ObservationOperator {
        match self {
            Self::Identity => ObservationOperator::Identity,
            Self::Square => ObservationOperator::Scalar(ScalarObservation::square()),
            Self::Pointwise { indices } => ObservationOperator::Pointwise(indices.clone()),
        }
    }
}

/// Trajectory along which sensitivities are computed for placement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Truth,
    Background,
}

fn default_count() -> usize {
    2
}

fn default_min_time() -> f64 {
    PlacementConstraints::default().min_time
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlacementSpec {
    Auto {
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default = "default_min_time")]
        min_time: f64,
        #[serde(default)]
        min_separation: f64,
    },
    Explicit {
        times: Vec<f64>,
    },
}

impl PlacementSpec {
    /// Smallest admissible time; `0` for explicit plans.
    pub fn min_time(&self) -> f64 {
        match self {
            Self::Auto { min_time, .. } => *min_time,
            Self::Explicit { .. } => 0.0,
        }
    }
}

/// One noise fraction or a list of them (`0.1` is 10%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevels {
    One(f64),
    Many(Vec<f64>),
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self::One(0.0)
    }
}

impl NoiseLevels {
    pub fn levels(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Newton,
    LinearClosedForm,
    GaussNewtonTsvd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub tol: f64,
    pub max_iter: usize,
    pub tsvd_threshold: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Newton,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            tsvd_threshold: DEFAULT_TSVD_THRESHOLD,
        }
    }
}

/// Which artifacts to write and how densely to sample time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub trajectory: bool,
    pub sensitivities: bool,
    pub placement: bool,
    pub observations: bool,
    pub estimates: bool,
    pub summary: bool,
    /// Write every `stride`-th grid step to the CSV time series.
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: true,
            sensitivities: true,
            placement: true,
            observations: true,
            estimates: true,
            summary: true,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub t1: AxisSpec,
    pub t2: AxisSpec,
}

impl SweepSpec {
    /// `count × count` cells over `(0, horizon]`.
    pub fn uniform(horizon: f64, count: usize) -> Self {
        let axis = AxisSpec {
            start: 0.0,
            end: horizon,
            count,
        };
        Self { t1: axis, t2: axis }
    }
}

/// A complete twin experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub truth: ControlSpec,
    pub guess: ControlSpec,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub observation: ObservationSpec,
    pub placement: PlacementSpec,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub noise_pct: NoiseLevels,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    /// Second placement estimated with the same noise and seeds, for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// A validated configuration with its model, grid and controls built.
#[derive(Debug)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub model: Box<dyn ModelSystem>,
    pub grid: TimeGrid,
    pub truth: ControlVector,
    pub guess: ControlVector,
    pub operator: ObservationOperator,
}

impl ResolvedExperiment {
    pub fn reference_control(&self) -> &ControlVector {
        match self.config.reference {
            Reference::Truth => &self.truth,
            Reference::Background => &self.guess,
        }
    }
}

fn check_times(what: &str, times: &[f64], grid: &TimeGrid) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Invalid(format!("{what} lists no times")));
    }
    for &t in times {
        if !(grid.t0..=grid.end() + 1e-12).contains(&t) {
            return Err(Error::Invalid(format!(
                "{what} time {t} lies outside [0, {}]",
                grid.end()
            )));
        }
        grid.index_of(t)?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces the seed list.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    /// Replaces the noise levels with a single one.
    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise_pct = NoiseLevels::One(noise);
        self
    }

    /// Replaces the placement with explicit times.
    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.placement = PlacementSpec::Explicit { times };
        self
    }

    /// Checks the configuration and builds its model, grid and controls.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let mut config = self.clone();
        if !(config.horizon > 0.0) || !config.horizon.is_finite() {
            return Err(Error::Invalid(format!(
                "horizon must be positive, got {}",
                config.horizon
            )));
        }
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(Error::Invalid(format!(
                "dt must be positive, got {}",
                config.dt
            )));
        }
        if config.model.name == "advdiff_2d" {
            match config.model.options.dt {
                None => config.model.options.dt = Some(config.dt),
                Some(d) if (d - config.dt).abs() > 1e-12 * d => {
                    return Err(Error::Invalid(format!(
                        "model step {d} differs from experiment dt {}",
                        config.dt
                    )))
                }
                Some(_) => {}
            }
        }
        let model = builtin_model(&config.model.name, &config.model.options)?;
        let grid = TimeGrid::over(config.horizon, config.dt)?;
        if let ModelKind::DiscreteMap { dt } = model.kind() {
            if (dt - grid.dt).abs() > 1e-12 * dt {
                return Err(Error::Invalid(format!(
                    "model step {dt} differs from grid step {}",
                    grid.dt
                )));
            }
        }
        let truth = config.truth.resolve(&config.model)?;
        let guess = config.guess.resolve(&config.model)?;
        truth.check_dims(model.as_ref())?;
        guess.check_dims(model.as_ref())?;
        let operator = config.observation.operator();
        operator.check(model.state_dim())?;

        match &config.placement {
            PlacementSpec::Auto {
                count,
                min_time,
                min_separation,
            } => {
                if *count == 0 {
                    return Err(Error::Invalid("placement count must be positive".into()));
                }
                if !(*min_time >= 0.0) || !(*min_separation >= 0.0) {
                    return Err(Error::Invalid(
                        "min_time and min_separation must be non-negative".into(),
                    ));
                }
            }
            PlacementSpec::Explicit { times } => check_times("placement", times, &grid)?,
        }
        if let Some(times) = &config.comparison_times {
            check_times("comparison", times, &grid)?;
        }

        let levels = config.noise_pct.levels();
        if levels.is_empty() {
            return Err(Error::Invalid("noise_pct lists no levels".into()));
        }
        if levels.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Invalid(
                "noise levels must be non-negative fractions".into(),
            ));
        }
        if config.seeds.is_empty() {
            if levels.iter().any(|&l| l > 0.0) {
                return Err(Error::Invalid(
                    "seeds must be non-empty when noise_pct > 0".into(),
                ));
            }
            config.seeds = vec![0];
        }

        let est = &config.estimator;
        if !(est.tol >= 0.0) || !(est.tsvd_threshold >= 0.0) || est.tsvd_threshold >= 1.0 {
            return Err(Error::Invalid(
                "estimator tol must be non-negative and tsvd_threshold in [0, 1)".into(),
            ));
        }
        if est.kind == EstimatorKind::LinearClosedForm {
            if model.linear_map().is_none() || model.param_dim() != 0 {
                return Err(Error::Invalid(format!(
                    "linear_closed_form needs a linear one-step map without parameters; `{}` is not",
                    model.name()
                )));
            }
            if !operator.is_linear() {
                return Err(Error::Invalid(
                    "linear_closed_form needs a linear observation operator".into(),
                ));
            }
        }
        if config.outputs.stride == 0 {
            return Err(Error::Invalid("outputs.stride must be at least 1".into()));
        }
        if let Some(sweep) = &config.sweep {
            for axis in [sweep.t1, sweep.t2] {
                let degenerate = axis.count == 1 && axis.end == axis.start;
                if axis.count == 0
                    || !(axis.end > axis.start || degenerate)
                    || axis.start < 0.0
                    || axis.end > grid.end() + 1e-12
                {
                    return Err(Error::Invalid(format!(
                        "sweep axis ({}, {}] with {} points must lie within (0, {}]",
                        axis.start,
                        axis.end,
                        axis.count,
                        grid.end()
                    )));
                }
            }
        }
        Ok(ResolvedExperiment {
            config,
            model,
            grid,
            truth,
            guess,
            operator,
        })
    }
}
