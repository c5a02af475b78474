//! Observation operators, synthetic twin-experiment data, the observability
//! Gramian and the squared-sensitivity placement rule.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, ControlVector, ModelSystem, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::sensitivity::{
    propagate, propagate_at, propagate_i1, Channel, ControlSelection, SensitivityTrajectory,
};

/// Componentwise scalar observable `h(x)` with derivative `h'(x)`.
#[derive(Clone, Copy)]
pub struct ScalarObservation {
    pub name: &'static str,
    pub h: fn(f64) -> f64,
    pub dh: fn(f64) -> f64,
}

impl ScalarObservation {
    pub fn square() -> Self {
        Self {
            name: "square",
            h: |x| x * x,
            dh: |x| 2.0 * x,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "square" => Some(Self::square()),
            _ => None,
        }
    }
}

impl fmt::Debug for ScalarObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ScalarObservation")
            .field(&self.name)
            .finish()
    }
}

impl PartialEq for ScalarObservation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Maps a model state to an observation vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ObservationOperator {
    #[default]
    Identity,
    /// `z = H x`.
    Linear(DMatrix<f64>),
    /// Samples the listed state components.
    Pointwise(Vec<usize>),
    /// Applies a scalar function to every state component.
    Scalar(ScalarObservation),
}

impl ObservationOperator {
    pub fn obs_dim(&self, state_dim: usize) -> usize {
        match self {
            Self::Identity | Self::Scalar(_) => state_dim,
            Self::Linear(h) => h.nrows(),
            Self::Pointwise(idx) => idx.len(),
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, Self::Scalar(_))
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Linear(_) => "linear",
            Self::Pointwise(_) => "pointwise",
            Self::Scalar(s) => s.name,
        }
    }

    pub fn check(&self, state_dim: usize) -> Result<()> {
        match self {
            Self::Linear(h) if h.ncols() != state_dim => Err(Error::Dimension(format!(
                "observation matrix has {} columns, state has {state_dim}",
                h.ncols()
            ))),
            Self::Pointwise(idx) if idx.iter().any(|&i| i >= state_dim) => Err(Error::Dimension(
                format!("sampling index out of range for state of {state_dim}"),
            )),
            Self::Pointwise(idx) if idx.is_empty() => {
                Err(Error::Invalid("pointwise operator samples nothing".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Identity => x.clone(),
            Self::Linear(h) => h * x,
            Self::Pointwise(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i])),
            Self::Scalar(s) => x.map(s.h),
        }
    }

    /// `D_h(x)·block` without forming `D_h` for the structured operators.
    pub fn jacobian_times(&self, x: &DVector<f64>, block: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Identity => block.clone(),
            Self::Linear(h) => h * block,
            Self::Pointwise(idx) => block.select_rows(idx.iter()),
            Self::Scalar(s) => {
                let mut out = block.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= (s.dh)(x[i]);
                }
                out
            }
        }
    }

    /// Dense `m × n` Jacobian `D_h(x)`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_times(x, &DMatrix::identity(x.len(), x.len()))
    }
}

/// Noisy observations `z_i = h(x̄(t_i)) + η_i`, `η_i ~ N(0, σ_i² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    /// One standard deviation per observation time; also the weighting `R_i = σ_i² I`.
    pub noise_std: Vec<f64>,
    pub operator: ObservationOperator,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationFile {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    noise_std: Vec<f64>,
    operator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.times.len() || self.noise_std.len() != self.times.len() {
            return Err(Error::Dimension(
                "times, values and noise_std must have equal lengths".into(),
            ));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "observation times must be strictly increasing".into(),
            ));
        }
        if self
            .values
            .iter()
            .flat_map(|v| v.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Invalid("observation values must be finite".into()));
        }
        if self.noise_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid(
                "noise standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ObservationFile {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.as_slice().to_vec()).collect(),
            noise_std: self.noise_std.clone(),
            operator: self.operator.tag().to_string(),
            indices: match &self.operator {
                ObservationOperator::Pointwise(idx) => Some(idx.clone()),
                _ => None,
            },
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Invalid(e.to_string()))
    }

    /// Parses the JSON form. Linear-matrix operators carry no matrix in the
    /// file and cannot be read back.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ObservationFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))?;
        let operator = match (file.operator.as_str(), file.indices) {
            ("identity", _) => ObservationOperator::Identity,
            ("pointwise", Some(idx)) => ObservationOperator::Pointwise(idx),
            ("pointwise", None) => {
                return Err(Error::Invalid("pointwise operator needs `indices`".into()))
            }
            (name, _) => {
                ObservationOperator::Scalar(ScalarObservation::by_name(name).ok_or_else(|| {
                    Error::Invalid(format!("operator `{name}` cannot be read from JSON"))
                })?)
            }
        };
        let set = Self {
            times: file.times,
            values: file.values.into_iter().map(DVector::from_vec).collect(),
            noise_std: file.noise_std,
            operator,
        };
        set.validate()?;
        Ok(set)
    }
}

/// Noise scale of an observable: `|h|` for scalars, RMS for vectors.
fn observable_scale(value: &DVector<f64>) -> f64 {
    if value.len() == 1 {
        value[0].abs()
    } else {
        (value.norm_squared() / value.len() as f64).sqrt()
    }
}

/// Samples `operator` along a truth trajectory and adds Gaussian noise with
/// `σ_i = noise_pct · scale(h(x̄(t_i)))`.
///
/// With `noise_pct == 0` the values are exact and `σ_i = 1` serves only as
/// the weighting of the cost.
pub fn synthesize_observations(
    truth: &Trajectory,
    operator: &ObservationOperator,
    times: &[f64],
    noise_pct: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if !(noise_pct >= 0.0) || !noise_pct.is_finite() {
        return Err(Error::Invalid(format!(
            "noise level must be non-negative, got {noise_pct}"
        )));
    }
    operator.check(truth.states[0].len())?;
    let indices = truth.grid.indices_of(times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(times.len());
    let mut noise_std = Vec::with_capacity(times.len());
    for (&k, &t) in indices.iter().zip(times) {
        let clean = operator.apply(&truth.states[k]);
        if noise_pct == 0.0 {
            values.push(clean);
            noise_std.push(1.0);
            continue;
        }
        let sigma = noise_pct * observable_scale(&clean);
        if !(sigma > 0.0) {
            return Err(Error::Invalid(format!(
                "observable vanishes at t = {t}; relative noise is undefined"
            )));
        }
        let noisy = clean.map(|v| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            v + sigma * eta
        });
        values.push(noisy);
        noise_std.push(sigma);
    }
    let set = ObservationSet {
        times: times.to_vec(),
        values,
        noise_std,
        operator: operator.clone(),
    };
    set.validate()?;
    Ok(set)
}

/// Integrates the truth control on `grid`, then calls [`synthesize_observations`].
pub fn twin_observations(
    truth_model: &dyn ModelSystem,
    truth_control: &ControlVector,
    grid: &TimeGrid,
    operator: &ObservationOperator,
    times: &[f64],
    noise_pct: f64,
    seed: u64,
) -> Result<ObservationSet> {
    let truth = integrate(truth_model, truth_control, grid)?;
    synthesize_observations(&truth, operator, times, noise_pct, seed)
}

/// Observability Gramian `G = Σ G_i` over the selected control components.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian {
    pub total: DMatrix<f64>,
    pub parts: Vec<DMatrix<f64>>,
    /// Stacked weighted rows `A` with `G = AᵀA`, when known.
    pub factor: Option<DMatrix<f64>>,
}

const CAUCHY_BINET_ROWS: usize = 64;

impl Gramian {
    pub fn from_parts(parts: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = parts
            .first()
            .map(|g| g.nrows())
            .ok_or_else(|| Error::Invalid("Gramian needs at least one observation".into()))?;
        let mut total = DMatrix::zeros(q, q);
        for g in &parts {
            total += g;
        }
        Ok(Self {
            total,
            parts,
            factor: None,
        })
    }

    /// `G = Σ AᵢᵀAᵢ` from weighted row blocks `Aᵢ`, keeping the rows.
    pub fn from_rows(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = blocks
            .first()
            .map(|b| b.ncols())
            .ok_or_else(|| Error::Invalid("Gramian needs at least one observation".into()))?;
        if blocks.iter().any(|b| b.ncols() != q) {
            return Err(Error::Dimension("row blocks differ in width".into()));
        }
        let total_rows = blocks.iter().map(|b| b.nrows()).sum();
        let mut factor = DMatrix::zeros(total_rows, q);
        let mut offset = 0;
        for b in &blocks {
            factor.rows_mut(offset, b.nrows()).copy_from(b);
            offset += b.nrows();
        }
        let mut gramian = Self::from_parts(blocks.iter().map(|b| b.tr_mul(b)).collect())?;
        gramian.factor = Some(factor);
        Ok(gramian)
    }

    pub fn dim(&self) -> usize {
        self.total.nrows()
    }

    /// For 2×2 Gramians with known rows this is the Cauchy–Binet sum
    /// `Σ_{i<j} (a_i × a_j)²`, which avoids the cancellation in `g₁₁g₂₂ − g₁₂²`.
    pub fn det(&self) -> f64 {
        match &self.factor {
            Some(a) if self.dim() == 2 && a.nrows() <= CAUCHY_BINET_ROWS => {
                let mut det = 0.0;
                for i in 0..a.nrows() {
                    for j in i + 1..a.nrows() {
                        let minor = a[(i, 0)] * a[(j, 1)] - a[(j, 0)] * a[(i, 1)];
                        det += minor * minor;
                    }
                }
                det
            }
            _ => self.total.determinant(),
        }
    }

    /// Ascending eigenvalues of the total.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.total.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `ln |G|` from the eigenvalues; `-inf` when singular.
    pub fn log_det(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|&l| if l > 0.0 { l.ln() } else { f64::NEG_INFINITY })
            .sum()
    }

    /// Scale-aware singularity test: `|G| ≤ 1e-12·(tr G)²` for 2×2 (and
    /// smaller) Gramians, `λ_min ≤ 1e-12·λ_max` otherwise.
    pub fn is_singular(&self) -> bool {
        let q = self.dim();
        if q <= 2 {
            let tr = self.total.trace();
            return !(tr > 0.0) || self.det() <= 1e-12 * tr.powi(q as i32);
        }
        let ev = self.eigenvalues();
        let max = *ev.last().unwrap();
        !(max > 0.0) || ev[0] <= 1e-12 * max
    }

    /// `(|G|, ln|G|, is_singular)` from a single factorization. Large Gramians
    /// report `|G| = exp(ln|G|)`, which may under- or overflow.
    pub fn spectral_summary(&self) -> (f64, f64, bool) {
        if self.dim() <= 2 {
            let det = self.det();
            return (det, det.ln(), self.is_singular());
        }
        let ev = self.eigenvalues();
        let max = *ev.last().unwrap();
        let log_det: f64 = ev
            .iter()
            .map(|&l| if l > 0.0 { l.ln() } else { f64::NEG_INFINITY })
            .sum();
        (log_det.exp(), log_det, !(max > 0.0) || ev[0] <= 1e-12 * max)
    }
}

/// Rows `R_i^{-1/2} D_h(x(t_k)) F(t_k)` for one observation.
pub(crate) fn weighted_block(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    k: usize,
    sigma: f64,
    selection: ControlSelection,
) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    let f = sens.control_block(k, selection)?;
    Ok(operator.jacobian_times(&trajectory.states[k], &f) / sigma)
}

/// `G_i = F_iᵀ D_hᵀ R_i⁻¹ D_h F_i` at each observation time, and their sum.
pub fn build_gramian(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    times: &[f64],
    noise_std: &[f64],
    selection: ControlSelection,
) -> Result<Gramian> {
    if times.len() != noise_std.len() {
        return Err(Error::Dimension(format!(
            "{} observation times but {} noise levels",
            times.len(),
            noise_std.len()
        )));
    }
    operator.check(sens.state_dim())?;
    let indices = trajectory.grid.indices_of(times)?;
    let blocks = indices
        .iter()
        .zip(noise_std)
        .map(|(&k, &sigma)| weighted_block(sens, trajectory, operator, k, sigma, selection))
        .collect::<Result<Vec<_>>>()?;
    Gramian::from_rows(blocks)
}

/// `|G| = d₁²d₂²(u₁v₂ − u₂v₁)²` for two scalar observations with weights
/// `d_i = D_h(x(t_i))/σ_i`.
pub fn gramian_det_closed_form(u1: f64, v1: f64, u2: f64, v2: f64, d1: f64, d2: f64) -> f64 {
    let cross = u1 * v2 - u2 * v1;
    d1 * d1 * d2 * d2 * cross * cross
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConstraints {
    /// Earliest admissible observation time.
    pub min_time: f64,
    /// Smallest allowed gap between two observation times.
    pub min_separation: f64,
}

impl Default for PlacementConstraints {
    fn default() -> Self {
        Self {
            min_time: 0.1,
            min_separation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub time: f64,
    /// `u[j]`, `v[j]`, `I1` or `explicit`.
    pub channel: String,
    pub squared_value: f64,
}

/// Selected observation times and why each was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub times: Vec<f64>,
    pub rationale: Vec<PlacementRecord>,
    /// Determinant of the unit-noise Gramian of the plan.
    pub gramian_det: f64,
    pub gramian_log_det: f64,
    /// False when the plan was accepted for a regularizing estimator despite
    /// a singular Gramian.
    #[serde(default = "well_conditioned_default")]
    pub well_conditioned: bool,
}

fn well_conditioned_default() -> bool {
    true
}

fn channel_label(channel: Channel) -> String {
    match channel {
        Channel::InitialState(j) => format!("u[{j}]"),
        Channel::Parameter(j) => format!("v[{j}]"),
    }
}

fn check_count(n: usize, p: usize, m: usize, count: usize) -> Result<()> {
    let needed = (n + p).div_ceil(m.max(1));
    if count < needed {
        return Err(Error::Infeasible(format!(
            "{count} observations of dimension {m} cannot determine {} control components",
            n + p
        )));
    }
    Ok(())
}

/// Greedy pick over candidate `times`: round `r` takes the best admissible
/// time of ranking `r mod rankings.len()`; ties go to the earliest time.
fn greedy_select(
    times: &[f64],
    rankings: &[(String, Vec<f64>)],
    count: usize,
    constraints: PlacementConstraints,
) -> Result<Vec<PlacementRecord>> {
    if times.is_empty() {
        return Err(Error::Infeasible(format!(
            "no recorded time at or after min_time = {}",
            constraints.min_time
        )));
    }
    let mut chosen: Vec<PlacementRecord> = Vec::with_capacity(count);
    for round in 0..count {
        let (label, scores) = &rankings[round % rankings.len()];
        let mut best: Option<(usize, f64)> = None;
        for (c, &t) in times.iter().enumerate() {
            let clear = chosen
                .iter()
                .all(|r| (r.time - t).abs() >= constraints.min_separation - 1e-12);
            if clear && best.is_none_or(|(_, b)| scores[c] > b) {
                best = Some((c, scores[c]));
            }
        }
        let (c, value) = best.ok_or_else(|| {
            Error::Infeasible(format!(
                "no admissible time left for observation {} under min_separation = {}",
                round + 1,
                constraints.min_separation
            ))
        })?;
        chosen.push(PlacementRecord {
            time: times[c],
            channel: label.clone(),
            squared_value: value,
        });
    }
    chosen.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(chosen)
}

/// Places `count` observations at squared-sensitivity maxima.
///
/// Scalar-state models cycle through the control channels (`u²`, then `v²`,
/// …), each taking its best admissible time. Vector-state models rank times by
/// `I₁ = tr(uᵀu)` instead. Times must satisfy `t ≥ min_time` and be at least
/// `min_separation` apart; the resulting unit-noise Gramian must be
/// nonsingular.
pub fn plan_placement(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    count: usize,
    constraints: PlacementConstraints,
) -> Result<PlacementPlan> {
    let n = sens.state_dim();
    let p = sens.param_dim();
    check_count(n, p, operator.obs_dim(n), count)?;
    let candidates: Vec<usize> = (0..sens.len())
        .filter(|&pos| sens.grid.time(sens.indices[pos]) >= constraints.min_time - 1e-12)
        .collect();
    let times: Vec<f64> = candidates
        .iter()
        .map(|&pos| sens.grid.time(sens.indices[pos]))
        .collect();

    let rankings: Vec<(String, Vec<f64>)> = if n == 1 {
        Channel::all(n, p)
            .into_iter()
            .map(|ch| {
                let scores = candidates
                    .iter()
                    .map(|&pos| ch.squared(&sens.u[pos], &sens.v[pos]))
                    .collect::<Result<Vec<_>>>()?;
                Ok((channel_label(ch), scores))
            })
            .collect::<Result<_>>()?
    } else {
        let scores = candidates
            .iter()
            .map(|&pos| sens.u[pos].norm_squared())
            .collect();
        vec![("I1".to_string(), scores)]
    };
    let chosen = greedy_select(&times, &rankings, count, constraints)?;
    finish_plan(sens, trajectory, operator, chosen, false)
}

/// [`plan_placement`] without storing every sensitivity matrix: vector-state
/// models stream `I₁` and propagate again only to the chosen times.
pub fn plan_placement_streaming(
    model: &dyn ModelSystem,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    count: usize,
    constraints: PlacementConstraints,
) -> Result<PlacementPlan> {
    let n = model.state_dim();
    if n == 1 {
        let sens = propagate(model, trajectory)?;
        return plan_placement(&sens, trajectory, operator, count, constraints);
    }
    check_count(n, model.param_dim(), operator.obs_dim(n), count)?;
    let i1 = propagate_i1(model, trajectory)?;
    let grid = &trajectory.grid;
    let (times, scores): (Vec<f64>, Vec<f64>) = (0..grid.len())
        .filter(|&k| grid.time(k) >= constraints.min_time - 1e-12)
        .map(|k| (grid.time(k), i1[k]))
        .unzip();
    let chosen = greedy_select(&times, &[("I1".to_string(), scores)], count, constraints)?;
    let steps = grid.indices_of(&chosen.iter().map(|r| r.time).collect::<Vec<_>>())?;
    let sens = propagate_at(model, trajectory, &steps)?;
    finish_plan(&sens, trajectory, operator, chosen, false)
}

fn explicit_records(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    times: &[f64],
) -> Result<Vec<PlacementRecord>> {
    let mut records = Vec::with_capacity(times.len());
    for &t in times {
        let k = trajectory.grid.index_of(t)?;
        let f = sens.control_block(k, ControlSelection::Full)?;
        records.push(PlacementRecord {
            time: t,
            channel: "explicit".into(),
            squared_value: f.norm_squared(),
        });
    }
    records.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(records)
}

/// Validates user-supplied observation times as a plan.
pub fn plan_from_times(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    times: &[f64],
) -> Result<PlacementPlan> {
    let records = explicit_records(sens, trajectory, times)?;
    finish_plan(sens, trajectory, operator, records, false)
}

/// As [`plan_from_times`], for estimators that regularize: only repeated
/// times are rejected and an ill-conditioned Gramian is flagged instead.
pub fn plan_from_times_regularized(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    times: &[f64],
) -> Result<PlacementPlan> {
    let records = explicit_records(sens, trajectory, times)?;
    finish_plan(sens, trajectory, operator, records, true)
}

fn finish_plan(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    records: Vec<PlacementRecord>,
    allow_ill_conditioned: bool,
) -> Result<PlacementPlan> {
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let gramian = build_gramian(
        sens,
        trajectory,
        operator,
        &times,
        &vec![1.0; times.len()],
        ControlSelection::Full,
    )?;
    let (det, log_det, singular) = gramian.spectral_summary();
    if times.windows(2).any(|w| w[0] == w[1]) || (singular && !allow_ill_conditioned) {
        return Err(Error::Singular(format!(
            "observations at {times:?} do not determine the control"
        )));
    }
    Ok(PlacementPlan {
        gramian_det: det,
        gramian_log_det: log_det,
        well_conditioned: !singular,
        times,
        rationale: records,
    })
}
