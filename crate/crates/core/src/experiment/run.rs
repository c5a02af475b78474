use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{
    EstimatorKind, ExperimentConfig, PlacementSpec, Reference, ResolvedExperiment, SweepSpec,
};
use crate::assimilate::{
    estimate_gauss_newton_tsvd, estimate_linear_closed_form, estimate_newton, relative_error,
    EstimateResult,
};
use crate::dynamics::{integrate, Trajectory};
use crate::error::Error;
use crate::metasens::{sweep, uniform_axis, SweepField, SweepGrid};
use crate::observe::{
    plan_from_times, plan_from_times_regularized, plan_placement_streaming,
    synthesize_observations, ObservationSet, PlacementConstraints, PlacementPlan,
};
use crate::sensitivity::{propagate_at, propagate_invariants};

/// Why a run stopped: bad input or a numerical breakdown.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Invalid(Error),
    Numeric(Error),
}

impl RunError {
    /// `2` for invalid input, `3` for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Invalid(e) => write!(f, "invalid experiment: {e}"),
            RunError::Numeric(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

fn classify(e: Error) -> RunError {
    match e {
        Error::NonFinite { .. } | Error::LineSearch(_) | Error::RankCollapse => {
            RunError::Numeric(e)
        }
        _ => RunError::Invalid(e),
    }
}

/// Mean, sample standard deviation and quantiles of a set of errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

impl ErrorStats {
    /// All fields are NaN (`null` in JSON) for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                p05: f64::NAN,
                p50: f64::NAN,
                p95: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Self {
            mean,
            std,
            p05: q(0.05),
            p50: q(0.5),
            p95: q(0.95),
        }
    }
}

/// One seed of one noise level.
#[derive(Debug, Clone)]
pub struct SeedOutput {
    pub seed: u64,
    pub observations: Option<ObservationSet>,
    pub estimate: Option<EstimateResult>,
    /// Relative ℓ₂ error of the estimated control against the truth.
    pub error: Option<f64>,
    pub failure: Option<String>,
    pub comparison_error: Option<f64>,
    pub comparison_failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LevelOutput {
    pub noise_pct: f64,
    pub seeds: Vec<SeedOutput>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub error: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub final_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub noise_pct: f64,
    pub runs: usize,
    pub converged: usize,
    pub failed: usize,
    pub error: ErrorStats,
    /// Componentwise mean and spread of the estimates, for small controls.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_std: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_error: Option<ErrorStats>,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub model: String,
    pub reference: Reference,
    pub estimator: EstimatorKind,
    pub placement_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_times: Option<Vec<f64>>,
    pub gramian_det: f64,
    pub gramian_log_det: f64,
    pub background_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    pub levels: Vec<LevelSummary>,
}

/// Everything a run produces, held in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub plan: PlacementPlan,
    pub trajectory: Option<Table>,
    pub sensitivities: Option<Table>,
    pub levels: Vec<LevelOutput>,
    pub summary: RunSummary,
}

const SMALL_CONTROL: usize = 16;

fn strided(len: usize, stride: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if rows.last() != Some(&(len - 1)) {
        rows.push(len - 1);
    }
    rows
}

/// Artifact encoding for tabular outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

/// Named columns of numbers, one row per time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn encode(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Json => serde_json::to_string(self).expect("table serializes"),
        }
    }
}

fn trajectory_table(traj: &Trajectory, stride: usize) -> Table {
    let n = traj.states[0].len();
    let mut columns = vec!["t".to_string()];
    columns.extend((0..n).map(|i| format!("x_{i}")));
    let rows = strided(traj.states.len(), stride)
        .into_iter()
        .map(|k| {
            std::iter::once(traj.grid.time(k))
                .chain(traj.states[k].iter().copied())
                .collect()
        })
        .collect();
    Table { columns, rows }
}

/// Time series of the forward sensitivities along a trajectory: `t,u,v` for
/// scalar models, `t,I1,I2` otherwise.
pub fn sensitivity_table(
    resolved: &ResolvedExperiment,
    trajectory: &Trajectory,
    stride: usize,
) -> Result<Table, Error> {
    let model = resolved.model.as_ref();
    if model.state_dim() == 1 && model.param_dim() <= 1 {
        let steps = strided(trajectory.grid.len(), stride);
        let sens = propagate_at(model, trajectory, &steps)?;
        let mut columns = vec!["t".to_string(), "u".to_string()];
        if model.param_dim() == 1 {
            columns.push("v".into());
        }
        let rows = (0..sens.len())
            .map(|pos| {
                let mut row = vec![sens.grid.time(sens.indices[pos]), sens.u[pos][(0, 0)]];
                row.extend(sens.v[pos].iter().copied());
                row
            })
            .collect();
        return Ok(Table { columns, rows });
    }
    let inv = propagate_invariants(model, trajectory, stride)?;
    let rows = (0..inv.times.len())
        .map(|i| vec![inv.times[i], inv.i1[i], inv.i2[i]])
        .collect();
    Ok(Table {
        columns: vec!["t".into(), "I1".into(), "I2".into()],
        rows,
    })
}

fn plan(resolved: &ResolvedExperiment, reference: &Trajectory) -> Result<PlacementPlan, Error> {
    let model = resolved.model.as_ref();
    match &resolved.config.placement {
        PlacementSpec::Auto {
            count,
            min_time,
            min_separation,
        } => plan_placement_streaming(
            model,
            reference,
            &resolved.operator,
            *count,
            PlacementConstraints {
                min_time: *min_time,
                min_separation: *min_separation,
            },
        ),
        PlacementSpec::Explicit { times } => {
            let mut sorted = times.clone();
            sorted.sort_by(f64::total_cmp);
            let steps = resolved.grid.indices_of(&sorted)?;
            let sens = propagate_at(model, reference, &steps)?;
            match resolved.config.estimator.kind {
                EstimatorKind::Newton => {
                    plan_from_times(&sens, reference, &resolved.operator, &sorted)
                }
                _ => plan_from_times_regularized(&sens, reference, &resolved.operator, &sorted),
            }
        }
    }
}

fn reference_trajectory(
    resolved: &ResolvedExperiment,
    truth: &Trajectory,
) -> Result<Trajectory, Error> {
    match resolved.config.reference {
        Reference::Truth => Ok(truth.clone()),
        Reference::Background => {
            integrate(resolved.model.as_ref(), &resolved.guess, &resolved.grid)
        }
    }
}

fn estimate(resolved: &ResolvedExperiment, obs: &ObservationSet) -> Result<EstimateResult, Error> {
    let spec = &resolved.config.estimator;
    let model = resolved.model.as_ref();
    match spec.kind {
        EstimatorKind::Newton => estimate_newton(
            model,
            &resolved.guess,
            obs,
            &resolved.grid,
            spec.tol,
            spec.max_iter,
        ),
        EstimatorKind::GaussNewtonTsvd => estimate_gauss_newton_tsvd(
            model,
            &resolved.guess,
            obs,
            &resolved.grid,
            spec.tsvd_threshold,
            spec.tol,
            spec.max_iter,
        ),
        EstimatorKind::LinearClosedForm => {
            let map = model
                .linear_map()
                .ok_or_else(|| Error::Invalid(format!("`{}` has no linear map", model.name())))?;
            estimate_linear_closed_form(
                &map,
                &resolved.operator,
                obs,
                &resolved.grid,
                spec.tsvd_threshold,
            )
        }
    }
}

fn run_seed(
    resolved: &ResolvedExperiment,
    truth: &Trajectory,
    times: &[f64],
    noise: f64,
    seed: u64,
) -> SeedOutput {
    let truth_stacked = resolved.truth.stacked();
    let attempt = |times: &[f64]| -> Result<(ObservationSet, EstimateResult, f64), Error> {
        let obs = synthesize_observations(truth, &resolved.operator, times, noise, seed)?;
        let est = estimate(resolved, &obs)?;
        let err = relative_error(est.control.stacked().as_slice(), truth_stacked.as_slice());
        Ok((obs, est, err))
    };
    let mut out = SeedOutput {
        seed,
        observations: None,
        estimate: None,
        error: None,
        failure: None,
        comparison_error: None,
        comparison_failure: None,
    };
    match attempt(times) {
        Ok((obs, est, err)) => {
            out.observations = Some(obs);
            out.estimate = Some(est);
            out.error = Some(err);
        }
        Err(e) => out.failure = Some(e.to_string()),
    }
    if let Some(cmp) = &resolved.config.comparison_times {
        match attempt(cmp) {
            Ok((_, _, err)) => out.comparison_error = Some(err),
            Err(e) => out.comparison_failure = Some(e.to_string()),
        }
    }
    out
}

fn summarize_level(level: &LevelOutput, q: usize, with_comparison: bool) -> LevelSummary {
    let errors: Vec<f64> = level.seeds.iter().filter_map(|s| s.error).collect();
    let estimates: Vec<Vec<f64>> = level
        .seeds
        .iter()
        .filter_map(|s| s.estimate.as_ref())
        .map(|e| e.control.stacked().as_slice().to_vec())
        .collect();
    let (estimate_mean, estimate_std) = if q <= SMALL_CONTROL && !estimates.is_empty() {
        let per_component: Vec<ErrorStats> = (0..q)
            .map(|j| ErrorStats::of(&estimates.iter().map(|e| e[j]).collect::<Vec<_>>()))
            .collect();
        (
            Some(per_component.iter().map(|s| s.mean).collect()),
            Some(per_component.iter().map(|s| s.std).collect()),
        )
    } else {
        (None, None)
    };
    let comparison: Vec<f64> = level
        .seeds
        .iter()
        .filter_map(|s| s.comparison_error)
        .collect();
    LevelSummary {
        noise_pct: level.noise_pct,
        runs: level.seeds.len(),
        converged: level
            .seeds
            .iter()
            .filter(|s| s.estimate.as_ref().is_some_and(|e| e.converged))
            .count(),
        failed: level.seeds.iter().filter(|s| s.failure.is_some()).count(),
        error: ErrorStats::of(&errors),
        estimate_mean,
        estimate_std,
        comparison_error: with_comparison.then(|| ErrorStats::of(&comparison)),
        seeds: level
            .seeds
            .iter()
            .map(|s| SeedSummary {
                seed: s.seed,
                error: s.error,
                converged: s.estimate.as_ref().map(|e| e.converged),
                iterations: s.estimate.as_ref().map(|e| e.iterations),
                final_cost: s.estimate.as_ref().map(|e| e.final_cost),
                comparison_error: s.comparison_error,
                failure: s.failure.clone().or_else(|| s.comparison_failure.clone()),
            })
            .collect(),
    }
}

fn map_seeds(seeds: &[u64], f: impl Fn(u64) -> SeedOutput + Sync + Send) -> Vec<SeedOutput> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| f(s)).collect()
    }
}

/// Integrates, places observations, synthesizes them for every noise level
/// and seed, and estimates the control.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let resolved = config.resolve().map_err(RunError::Invalid)?;
    let cfg = &resolved.config;
    let model = resolved.model.as_ref();
    let truth = integrate(model, &resolved.truth, &resolved.grid).map_err(RunError::Numeric)?;
    let reference = reference_trajectory(&resolved, &truth).map_err(RunError::Numeric)?;
    let plan = plan(&resolved, &reference).map_err(classify)?;

    let trajectory = cfg
        .outputs
        .trajectory
        .then(|| trajectory_table(&truth, cfg.outputs.stride));
    let sensitivities = if cfg.outputs.sensitivities {
        Some(sensitivity_table(&resolved, &reference, cfg.outputs.stride).map_err(classify)?)
    } else {
        None
    };

    let levels: Vec<LevelOutput> = cfg
        .noise_pct
        .levels()
        .into_iter()
        .map(|noise| LevelOutput {
            noise_pct: noise,
            seeds: map_seeds(&cfg.seeds, |seed| {
                run_seed(&resolved, &truth, &plan.times, noise, seed)
            }),
        })
        .collect();

    if let Some(first) = levels
        .iter()
        .flat_map(|l| &l.seeds)
        .find_map(|s| s.failure.clone())
    {
        if levels
            .iter()
            .flat_map(|l| &l.seeds)
            .all(|s| s.failure.is_some())
        {
            return Err(RunError::Numeric(Error::Invalid(format!(
                "estimation failed for every seed: {first}"
            ))));
        }
    }

    let truth_stacked = resolved.truth.stacked();
    let q = truth_stacked.len();
    let summary = RunSummary {
        name: cfg.name.clone(),
        model: cfg.model.name.clone(),
        reference: cfg.reference,
        estimator: cfg.estimator.kind,
        placement_times: plan.times.clone(),
        comparison_times: cfg.comparison_times.clone(),
        gramian_det: plan.gramian_det,
        gramian_log_det: plan.gramian_log_det,
        background_error: relative_error(
            resolved.guess.stacked().as_slice(),
            truth_stacked.as_slice(),
        ),
        truth: (q <= SMALL_CONTROL).then(|| truth_stacked.as_slice().to_vec()),
        levels: levels
            .iter()
            .map(|l| summarize_level(l, q, cfg.comparison_times.is_some()))
            .collect(),
    };
    Ok(RunOutput {
        config: cfg.clone(),
        plan,
        trajectory,
        sensitivities,
        levels,
        summary,
    })
}

fn noise_label(noise: f64) -> String {
    let pct = (noise * 100.0 * 1e6).round() / 1e6;
    format!("noise_{pct}pct")
}

impl RunOutput {
    /// Relative paths and contents of every enabled artifact. Per-seed files
    /// go to `seed_<s>/`, nested under `noise_<p>pct/` when several noise
    /// levels are run.
    pub fn artifact_files(&self, format: TableFormat) -> Vec<(String, String)> {
        let toggles = &self.config.outputs;
        let mut files = Vec::new();
        let ext = format.extension();
        if let Some(table) = &self.trajectory {
            files.push((format!("trajectory.{ext}"), table.encode(format)));
        }
        if let Some(table) = &self.sensitivities {
            files.push((format!("sensitivities.{ext}"), table.encode(format)));
        }
        if toggles.placement {
            files.push((
                "placement.json".to_string(),
                serde_json::to_string_pretty(&self.plan).expect("plan serializes"),
            ));
        }
        let nested = self.levels.len() > 1;
        for level in &self.levels {
            let prefix = if nested {
                format!("{}/", noise_label(level.noise_pct))
            } else {
                String::new()
            };
            for s in &level.seeds {
                let dir = format!("{prefix}seed_{}", s.seed);
                if toggles.observations {
                    if let Some(obs) = &s.observations {
                        files.push((
                            format!("{dir}/observations.json"),
                            obs.to_json().expect("observations serialize"),
                        ));
                    }
                }
                if toggles.estimates {
                    if let Some(est) = &s.estimate {
                        files.push((
                            format!("{dir}/estimate.json"),
                            serde_json::to_string_pretty(est).expect("estimate serializes"),
                        ));
                    }
                }
            }
        }
        if toggles.summary {
            files.push(("summary.json".to_string(), self.summary_json()));
        }
        files
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSummary {
    pub argmin: Option<[f64; 2]>,
    pub argmax: Option<[f64; 2]>,
    /// Extrema over cells with both times at or after `min_time`.
    pub constrained_argmin: Option<[f64; 2]>,
    pub constrained_argmax: Option<[f64; 2]>,
    /// `t₂` minimizing the field along the row through the first planned time.
    pub row_argmin_t2: Option<f64>,
    /// `t₁` minimizing the field down the column through the second planned time.
    pub column_argmin_t1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub name: String,
    pub planned_times: Vec<f64>,
    pub min_time: f64,
    pub t1_count: usize,
    pub t2_count: usize,
    pub singular_cells: usize,
    pub fields: BTreeMap<String, FieldSummary>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub grid: SweepGrid,
    pub summary: SweepSummary,
}

impl SweepOutput {
    pub fn artifact_files(&self, format: TableFormat) -> Vec<(String, String)> {
        let grid = match format {
            TableFormat::Csv => self.grid.to_csv(),
            TableFormat::Json => serde_json::to_string(&self.grid).expect("grid serializes"),
        };
        vec![
            (format!("sweep.{}", format.extension()), grid),
            (
                "sweep_summary.json".to_string(),
                serde_json::to_string_pretty(&self.summary).expect("summary serializes"),
            ),
        ]
    }
}

fn pair(p: Option<(f64, f64)>) -> Option<[f64; 2]> {
    p.map(|(a, b)| [a, b])
}

/// Sweeps the two-observation estimate sensitivities of a scalar experiment
/// and locates the extrema of each field.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput, RunError> {
    let resolved = config.resolve().map_err(RunError::Invalid)?;
    let cfg = &resolved.config;
    let model = resolved.model.as_ref();
    if model.state_dim() != 1 || model.param_dim() != 1 {
        return Err(RunError::Invalid(Error::Invalid(format!(
            "sweep needs a scalar model with one parameter, `{}` is not",
            model.name()
        ))));
    }
    let spec = cfg
        .sweep
        .unwrap_or_else(|| SweepSpec::uniform(cfg.horizon, 100));
    let t1 = uniform_axis(&resolved.grid, spec.t1.start, spec.t1.end, spec.t1.count)
        .map_err(RunError::Invalid)?;
    let t2 = uniform_axis(&resolved.grid, spec.t2.start, spec.t2.end, spec.t2.count)
        .map_err(RunError::Invalid)?;
    let control = resolved.reference_control();
    let reference = integrate(model, control, &resolved.grid).map_err(RunError::Numeric)?;
    let planned = plan(&resolved, &reference).map_err(classify)?;
    let grid =
        sweep(model, control, &resolved.operator, &resolved.grid, &t1, &t2).map_err(classify)?;

    let min_time = cfg.placement.min_time();
    let keep = |a: f64, b: f64| a >= min_time - 1e-12 && b >= min_time - 1e-12;
    let fields = SweepField::ALL
        .iter()
        .map(|&f| {
            let (row, column) = match planned.times.as_slice() {
                [a, b] => (
                    grid.row_argmin(f, *a, min_time),
                    grid.column_argmin(f, *b, min_time),
                ),
                _ => (None, None),
            };
            (
                f.name().to_string(),
                FieldSummary {
                    argmin: pair(grid.argmin(f)),
                    argmax: pair(grid.argmax(f)),
                    constrained_argmin: pair(grid.argmin_where(f, keep)),
                    constrained_argmax: pair(grid.argmax_where(f, keep)),
                    row_argmin_t2: row,
                    column_argmin_t1: column,
                },
            )
        })
        .collect();
    let summary = SweepSummary {
        name: cfg.name.clone(),
        planned_times: planned.times.clone(),
        min_time,
        t1_count: t1.len(),
        t2_count: t2.len(),
        singular_cells: grid.singular.iter().filter(|&&s| s).count(),
        fields,
    };
    Ok(SweepOutput { grid, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::preset;

    #[test]
    fn error_stats() {
        let s = ErrorStats::of(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.p50, 3.0);
        assert!((s.p05 - 1.2).abs() < 1e-12);
        assert!((s.p95 - 4.8).abs() < 1e-12);
        assert!(ErrorStats::of(&[]).mean.is_nan());
        assert_eq!(ErrorStats::of(&[2.0]).std, 0.0);
    }

    #[test]
    fn linear_preset_run() {
        let cfg = preset("linear-decay").unwrap().with_seeds(vec![1, 2, 3]);
        let out = run(&cfg).unwrap();
        assert_eq!(out.plan.times, vec![0.1, 1.0]);
        assert_eq!(out.summary.levels[0].runs, 3);
        let files = out.artifact_files(TableFormat::Csv);
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        for want in [
            "trajectory.csv",
            "sensitivities.csv",
            "placement.json",
            "seed_1/observations.json",
            "seed_3/estimate.json",
            "summary.json",
        ] {
            assert!(names.contains(&want), "missing {want} in {names:?}");
        }
        let sens = &files
            .iter()
            .find(|(n, _)| n == "sensitivities.csv")
            .unwrap()
            .1;
        assert!(sens.starts_with("t,u,v\n0,1,0\n"));
        let again = run(&cfg).unwrap();
        assert_eq!(out.summary_json(), again.summary_json());
    }

    #[test]
    fn zero_noise_recovers_truth() {
        for name in ["linear-decay", "quadratic-decay"] {
            let out = run(&preset(name).unwrap().with_noise(0.0).with_seeds(vec![0])).unwrap();
            let est = out.levels[0].seeds[0].estimate.as_ref().unwrap();
            assert!(est.converged);
            assert!(out.levels[0].seeds[0].error.unwrap() < 1e-7);
        }
    }

    #[test]
    fn multi_level_layout_and_comparison() {
        let mut cfg = preset("quadratic-decay").unwrap().with_seeds(vec![4]);
        cfg.noise_pct = super::super::NoiseLevels::Many(vec![0.01, 0.05]);
        cfg.comparison_times = Some(vec![1.5, 2.0]);
        let out = run(&cfg).unwrap();
        let names: Vec<String> = out
            .artifact_files(TableFormat::Csv)
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert!(names.contains(&"noise_1pct/seed_4/estimate.json".to_string()));
        assert!(names.contains(&"noise_5pct/seed_4/observations.json".to_string()));
        assert!(out.summary.levels[1].comparison_error.is_some());
    }

    #[test]
    fn explicit_equal_times_are_invalid() {
        let cfg = preset("linear-decay").unwrap().with_times(vec![0.5, 0.5]);
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("singular"));
    }

    #[test]
    fn sweep_summary_for_scalar_preset() {
        let mut cfg = preset("linear-decay").unwrap();
        cfg.sweep = Some(SweepSpec::uniform(2.0, 40));
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.summary.planned_times, vec![0.1, 1.0]);
        assert_eq!(out.grid.t1_axis.len(), 40);
        assert_eq!(out.summary.singular_cells, 40);
        let y1 = &out.summary.fields["y1sq"];
        assert_eq!(y1.column_argmin_t1, Some(0.1));
        let files = out.artifact_files(TableFormat::Csv);
        assert_eq!(files[0].1.lines().count(), 1601);
        let bad = run_sweep(&preset("burgers").unwrap()).unwrap_err();
        assert_eq!(bad.exit_code(), 2);
    }
}
