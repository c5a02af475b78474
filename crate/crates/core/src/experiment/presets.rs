use super::{
    ControlSpec, EstimatorKind, EstimatorSpec, ExperimentConfig, ModelSpec, NoiseLevels,
    ObservationSpec, OutputSpec, PlacementSpec, Reference, SweepSpec,
};
use crate::dynamics::{Boundary, ModelOptions};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = ["linear-decay", "quadratic-decay", "burgers", "advdiff"];

fn scalar(name: &str, model: &str, guess: (f64, f64)) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        model: ModelSpec {
            name: model.into(),
            options: ModelOptions::default(),
        },
        truth: ControlSpec::scalar(2.0, -1.0),
        guess: ControlSpec::scalar(guess.0, guess.1),
        horizon: 2.0,
        dt: 1e-3,
        observation: ObservationSpec::Identity,
        placement: PlacementSpec::Auto {
            count: 2,
            min_time: 0.1,
            min_separation: 0.0,
        },
        reference: Reference::Truth,
        noise_pct: NoiseLevels::One(0.1),
        seeds: (0..10).collect(),
        estimator: EstimatorSpec::default(),
        comparison_times: None,
        sweep: Some(SweepSpec::uniform(2.0, 100)),
        outputs: OutputSpec {
            stride: 10,
            ..OutputSpec::default()
        },
    }
}

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let near_start = PlacementSpec::Explicit {
        times: vec![0.01, 0.05],
    };
    match name {
        "linear-decay" => Ok(scalar(name, "linear_decay", (1.8, -0.8))),
        "quadratic-decay" => Ok(scalar(name, "quadratic_decay", (1.75, -0.75))),
        "burgers" => Ok(ExperimentConfig {
            name: name.into(),
            model: ModelSpec {
                name: "burgers_1d".into(),
                options: ModelOptions {
                    n: Some(128),
                    re: Some(500.0),
                    length: Some(1.0),
                    ..ModelOptions::default()
                },
            },
            truth: ControlSpec::ShockProfile { re: None },
            guess: ControlSpec::SineProfile,
            horizon: 1.0,
            dt: 0.0025,
            observation: ObservationSpec::Identity,
            placement: near_start,
            reference: Reference::Background,
            noise_pct: NoiseLevels::Many(vec![0.01, 0.05, 0.1]),
            seeds: vec![0],
            estimator: EstimatorSpec {
                kind: EstimatorKind::GaussNewtonTsvd,
                ..EstimatorSpec::default()
            },
            comparison_times: None,
            sweep: None,
            outputs: OutputSpec {
                stride: 4,
                ..OutputSpec::default()
            },
        }),
        "advdiff" => Ok(ExperimentConfig {
            name: name.into(),
            model: ModelSpec {
                name: "advdiff_2d".into(),
                options: ModelOptions {
                    n: Some(32),
                    cx: Some(0.5),
                    cy: Some(0.5),
                    nu: Some(0.01),
                    dt: Some(0.005),
                    boundary: Some(Boundary::Dirichlet),
                    ..ModelOptions::default()
                },
            },
            truth: ControlSpec::Gaussian {
                center: [0.25, 0.25],
                width: None,
            },
            guess: ControlSpec::Gaussian {
                center: [0.5, 0.5],
                width: None,
            },
            horizon: 1.0,
            dt: 0.005,
            observation: ObservationSpec::Identity,
            placement: near_start,
            reference: Reference::Background,
            noise_pct: NoiseLevels::One(0.1),
            seeds: vec![0],
            estimator: EstimatorSpec {
                kind: EstimatorKind::LinearClosedForm,
                ..EstimatorSpec::default()
            },
            comparison_times: None,
            sweep: None,
            outputs: OutputSpec {
                stride: 20,
                ..OutputSpec::default()
            },
        }),
        other => Err(Error::Invalid(format!(
            "unknown preset `{other}`; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
