//! Browser bindings for the placement demo. Every export returns a JSON
//! string; the plain functions are usable natively as well.

use fsm_placer::dynamics::integrate;
use fsm_placer::experiment::{
    preset, run, run_sweep, sensitivity_table, ControlSpec, ExperimentConfig, SweepSpec,
};
use fsm_placer::observe::{plan_placement_streaming, PlacementConstraints};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const SCALAR_PRESETS: [&str; 2] = ["linear-decay", "quadratic-decay"];
pub const TWIN_PRESETS: [&str; 3] = ["linear-decay", "quadratic-decay", "burgers"];

const CURVE_POINTS: usize = 400;

fn scalar_config(name: &str, x0: f64, alpha: f64) -> Result<ExperimentConfig, String> {
    if !SCALAR_PRESETS.contains(&name) {
        return Err(format!("`{name}` is not a scalar preset"));
    }
    let mut cfg = preset(name).map_err(|e| e.to_string())?;
    cfg.truth = ControlSpec::scalar(x0, alpha);
    Ok(cfg)
}

#[derive(Serialize)]
struct Curves {
    t: Vec<f64>,
    x: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    planned: Vec<f64>,
}

/// State, `u = ∂x/∂x₀` and `v = ∂x/∂α` over the horizon, plus the planned
/// observation pair.
pub fn curves_json(name: &str, x0: f64, alpha: f64) -> Result<String, String> {
    let cfg = scalar_config(name, x0, alpha)?;
    let resolved = cfg.resolve().map_err(|e| e.to_string())?;
    let model = resolved.model.as_ref();
    let traj = integrate(model, &resolved.truth, &resolved.grid).map_err(|e| e.to_string())?;
    let stride = (resolved.grid.len() / CURVE_POINTS).max(1);
    let table = sensitivity_table(&resolved, &traj, stride).map_err(|e| e.to_string())?;
    let plan = plan_placement_streaming(
        model,
        &traj,
        &resolved.operator,
        2,
        PlacementConstraints::default(),
    )
    .map_err(|e| e.to_string())?;
    let column = |j: usize| table.rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let x = table
        .rows
        .iter()
        .map(|r| traj.state_at(r[0]).map(|s| s[0]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let curves = Curves {
        t: column(0),
        x,
        u: column(1),
        v: column(2),
        planned: plan.times,
    };
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

/// Squared estimate sensitivities and `|G|` over a `count × count` grid.
pub fn sweep_json(name: &str, x0: f64, alpha: f64, count: usize) -> Result<String, String> {
    let mut cfg = scalar_config(name, x0, alpha)?;
    cfg.sweep = Some(SweepSpec::uniform(cfg.horizon, count));
    let out = run_sweep(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&serde_json::json!({ "grid": out.grid, "summary": out.summary }))
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Twin {
    times: Vec<f64>,
    truth: Vec<f64>,
    guess: Vec<f64>,
    estimate: Vec<f64>,
    error: f64,
    background_error: f64,
    iterations: usize,
    converged: bool,
    cost_history: Vec<f64>,
}

/// One twin experiment with observations at `t1`, `t2` and noise as a fraction
/// of the observed signal.
pub fn twin_json(name: &str, t1: f64, t2: f64, noise: f64, seed: u64) -> Result<String, String> {
    if !TWIN_PRESETS.contains(&name) {
        return Err(format!("`{name}` is not available in the demo"));
    }
    let mut cfg = preset(name)
        .map_err(|e| e.to_string())?
        .with_times(vec![t1, t2])
        .with_noise(noise)
        .with_seeds(vec![seed]);
    cfg.outputs.trajectory = false;
    cfg.outputs.sensitivities = false;
    let resolved = cfg.resolve().map_err(|e| e.to_string())?;
    let out = run(&cfg).map_err(|e| e.to_string())?;
    let s = &out.levels[0].seeds[0];
    let est = s.estimate.as_ref().ok_or_else(|| {
        s.failure
            .clone()
            .unwrap_or_else(|| "estimation failed".into())
    })?;
    let twin = Twin {
        times: out.plan.times.clone(),
        truth: resolved.truth.stacked().as_slice().to_vec(),
        guess: resolved.guess.stacked().as_slice().to_vec(),
        estimate: est.control.stacked().as_slice().to_vec(),
        error: s.error.unwrap_or(f64::NAN),
        background_error: out.summary.background_error,
        iterations: est.iterations,
        converged: est.converged,
        cost_history: est.cost_history.clone(),
    };
    serde_json::to_string(&twin).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sensitivityCurves)]
pub fn sensitivity_curves(name: &str, x0: f64, alpha: f64) -> Result<String, JsError> {
    js(curves_json(name, x0, alpha))
}

#[wasm_bindgen(js_name = sweepHeatmap)]
pub fn sweep_heatmap(name: &str, x0: f64, alpha: f64, count: usize) -> Result<String, JsError> {
    js(sweep_json(name, x0, alpha, count))
}

#[wasm_bindgen(js_name = twinExperiment)]
pub fn twin_experiment(
    name: &str,
    t1: f64,
    t2: f64,
    noise: f64,
    seed: u32,
) -> Result<String, JsError> {
    js(twin_json(name, t1, t2, noise, seed as u64))
}
