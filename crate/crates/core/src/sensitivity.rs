//! Forward sensitivities `u = ∂x/∂x₀`, `v = ∂x/∂α` along a trajectory.
//!
//! Continuous models push `[u | v]` through the tangent of the same RK4 step
//! that advanced the state, with Jacobians frozen at each stage state. The
//! recorded sensitivities are therefore the exact derivatives of the discrete
//! flow map, not an independent approximation of the variational ODE.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_grid, rk4_step, ModelKind, ModelSystem, TimeGrid, Trajectory};
use crate::error::{Error, Result};

/// Sensitivity matrices at a set of recorded grid indices.
#[derive(Debug, Clone)]
pub struct SensitivityTrajectory {
    pub grid: TimeGrid,
    /// Recorded grid indices, strictly increasing.
    pub indices: Vec<usize>,
    /// `n × n` blocks `∂x_k/∂x₀`.
    pub u: Vec<DMatrix<f64>>,
    /// `n × p` blocks `∂x_k/∂α`.
    pub v: Vec<DMatrix<f64>>,
}

impl SensitivityTrajectory {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.u.first().map_or(0, |u| u.nrows())
    }

    pub fn param_dim(&self) -> usize {
        self.v.first().map_or(0, |v| v.ncols())
    }

    /// Position of grid index `k` among the recorded indices.
    pub fn position(&self, k: usize) -> Option<usize> {
        self.indices.binary_search(&k).ok()
    }

    pub fn at(&self, k: usize) -> Result<(&DMatrix<f64>, &DMatrix<f64>)> {
        let pos = self
            .position(k)
            .ok_or_else(|| Error::Invalid(format!("sensitivities not recorded at step {k}")))?;
        Ok((&self.u[pos], &self.v[pos]))
    }

    /// `F = [u | v]` at grid index `k`, restricted to `selection`.
    pub fn control_block(&self, k: usize, selection: ControlSelection) -> Result<DMatrix<f64>> {
        let (u, v) = self.at(k)?;
        Ok(match selection {
            ControlSelection::Full => {
                let mut f = DMatrix::zeros(u.nrows(), u.ncols() + v.ncols());
                f.columns_mut(0, u.ncols()).copy_from(u);
                f.columns_mut(u.ncols(), v.ncols()).copy_from(v);
                f
            }
            ControlSelection::InitialState => u.clone(),
            ControlSelection::Parameters => v.clone(),
        })
    }
}

/// Which control components an estimate or Gramian covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSelection {
    #[default]
    Full,
    InitialState,
    Parameters,
}

/// Walks the tangent recurrence, calling `visit(k, S_k)` with `S_k = [u_k | v_k]`
/// until `visit` returns `false` or the grid ends.
pub(crate) fn walk_tangent(
    model: &dyn ModelSystem,
    trajectory: &Trajectory,
    mut visit: impl FnMut(usize, &DMatrix<f64>) -> Result<bool>,
) -> Result<()> {
    let n = model.state_dim();
    let p = model.param_dim();
    if trajectory.states.first().map(|x| x.len()) != Some(n) || trajectory.params.len() != p {
        return Err(Error::Dimension(format!(
            "trajectory does not belong to model `{}`",
            model.name()
        )));
    }
    if trajectory.states.len() != trajectory.grid.len() {
        return Err(Error::Dimension(
            "trajectory length disagrees with its grid".into(),
        ));
    }
    check_grid(model, &trajectory.grid)?;
    let params = trajectory.params.as_slice();
    let dt = trajectory.grid.dt;

    let mut s = DMatrix::<f64>::zeros(n, n + p);
    s.columns_mut(0, n).fill_with_identity();
    if !visit(0, &s)? {
        return Ok(());
    }
    for (k, x) in trajectory.states[..trajectory.states.len() - 1]
        .iter()
        .enumerate()
    {
        s = match model.kind() {
            ModelKind::DiscreteMap { .. } => {
                let mut next = model.jac_state(x, params).mul_mat(&s);
                add_param_forcing(&mut next, &model.jac_param(x, params), n, 1.0);
                next
            }
            ModelKind::Continuous => {
                let (stages, _) = rk4_step(model, x, params, dt);
                let slope = |x_stage: &nalgebra::DVector<f64>, arg: &DMatrix<f64>| {
                    let mut k = model.jac_state(x_stage, params).mul_mat(arg);
                    add_param_forcing(&mut k, &model.jac_param(x_stage, params), n, 1.0);
                    k
                };
                let k1 = slope(&stages[0], &s);
                let k2 = slope(&stages[1], &(&s + &k1 * (0.5 * dt)));
                let k3 = slope(&stages[2], &(&s + &k2 * (0.5 * dt)));
                let k4 = slope(&stages[3], &(&s + &k3 * dt));
                &s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "sensitivity",
                step: k + 1,
            });
        }
        if !visit(k + 1, &s)? {
            break;
        }
    }
    Ok(())
}

fn add_param_forcing(block: &mut DMatrix<f64>, forcing: &DMatrix<f64>, n: usize, scale: f64) {
    if forcing.ncols() > 0 {
        let mut cols = block.columns_mut(n, forcing.ncols());
        cols += forcing * scale;
    }
}

/// Sensitivities at every grid point of `trajectory`.
pub fn propagate(
    model: &dyn ModelSystem,
    trajectory: &Trajectory,
) -> Result<SensitivityTrajectory> {
    let all: Vec<usize> = (0..trajectory.grid.len()).collect();
    propagate_at(model, trajectory, &all)
}

/// Sensitivities recorded only at `indices` (any order, duplicates ignored).
/// Propagation stops at the last requested index.
pub fn propagate_at(
    model: &dyn ModelSystem,
    trajectory: &Trajectory,
    indices: &[usize],
) -> Result<SensitivityTrajectory> {
    let mut wanted = indices.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if let Some(&last) = wanted.last() {
        if last > trajectory.grid.steps {
            return Err(Error::Invalid(format!(
                "step {last} lies beyond the trajectory ({} steps)",
                trajectory.grid.steps
            )));
        }
    }
    let n = model.state_dim();
    let mut out = SensitivityTrajectory {
        grid: trajectory.grid,
        indices: Vec::with_capacity(wanted.len()),
        u: Vec::with_capacity(wanted.len()),
        v: Vec::with_capacity(wanted.len()),
    };
    if wanted.is_empty() {
        return Ok(out);
    }
    let last = *wanted.last().unwrap();
    let mut next = 0;
    walk_tangent(model, trajectory, |k, s| {
        if wanted.get(next) == Some(&k) {
            out.indices.push(k);
            out.u.push(s.columns(0, n).into_owned());
            out.v.push(s.columns(n, s.ncols() - n).into_owned());
            next += 1;
        }
        Ok(k < last)
    })?;
    Ok(out)
}

/// Trace invariants of the Gram matrix `uᵀu` over time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityInvariants {
    pub times: Vec<f64>,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
}

impl SensitivityInvariants {
    /// Indices (into `times`) of strict interior local maxima of `I1`.
    pub fn i1_local_maxima(&self) -> Vec<usize> {
        (1..self.i1.len().saturating_sub(1))
            .filter(|&k| self.i1[k] > self.i1[k - 1] && self.i1[k] >= self.i1[k + 1])
            .collect()
    }
}

/// `(I₁, I₂) = (tr(uᵀu), ½(tr(uᵀu)² − tr((uᵀu)²)))`.
pub fn gram_invariants(u: &DMatrix<f64>) -> (f64, f64) {
    let gram = u.transpose() * u;
    let i1 = gram.trace();
    let i2 = 0.5 * (i1 * i1 - gram.norm_squared());
    (i1, i2)
}

pub fn invariants(sens: &SensitivityTrajectory) -> SensitivityInvariants {
    let mut out = SensitivityInvariants {
        times: Vec::with_capacity(sens.len()),
        i1: Vec::with_capacity(sens.len()),
        i2: Vec::with_capacity(sens.len()),
    };
    for (&k, u) in sens.indices.iter().zip(&sens.u) {
        let (i1, i2) = gram_invariants(u);
        out.times.push(sens.grid.time(k));
        out.i1.push(i1);
        out.i2.push(i2);
    }
    out
}

/// Invariants every `stride` steps without storing the sensitivity matrices.
pub fn propagate_invariants(
    model: &dyn ModelSystem,
    trajectory: &Trajectory,
    stride: usize,
) -> Result<SensitivityInvariants> {
    let stride = stride.max(1);
    let n = model.state_dim();
    let mut out = SensitivityInvariants {
        times: Vec::new(),
        i1: Vec::new(),
        i2: Vec::new(),
    };
    let last = trajectory.grid.steps;
    walk_tangent(model, trajectory, |k, s| {
        if k % stride == 0 || k == last {
            let (i1, i2) = gram_invariants(&s.columns(0, n).into_owned());
            out.times.push(trajectory.grid.time(k));
            out.i1.push(i1);
            out.i2.push(i2);
        }
        Ok(true)
    })?;
    Ok(out)
}

/// A single control component whose sensitivity is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "channel", content = "index")]
pub enum Channel {
    InitialState(usize),
    Parameter(usize),
}

impl Channel {
    /// Squared sensitivity of the whole state to this component: the squared
    /// norm of the matching column of `u` or `v` (`u²` or `v²` for scalars).
    pub fn squared(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
        let (m, j) = match *self {
            Channel::InitialState(j) => (u, j),
            Channel::Parameter(j) => (v, j),
        };
        if j >= m.ncols() {
            return Err(Error::Dimension(format!("no control component {self:?}")));
        }
        Ok(m.column(j).norm_squared())
    }

    /// Channels of a control with `n` states and `p` parameters, states first.
    pub fn all(n: usize, p: usize) -> Vec<Channel> {
        (0..n)
            .map(Channel::InitialState)
            .chain((0..p).map(Channel::Parameter))
            .collect()
    }
}

/// Closed `[start, end]` or left-open `(start, end]` interval of times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub open_start: bool,
}

impl TimeWindow {
    pub fn closed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            open_start: false,
        }
    }

    pub fn left_open(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            open_start: true,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = 1e-12 * t.abs().max(1.0);
        let above = if self.open_start {
            t > self.start + tol
        } else {
            t >= self.start - tol
        };
        above && t <= self.end + tol
    }
}

/// `I₁ = ‖u‖²_F` at every grid step without storing the sensitivity matrices.
pub fn propagate_i1(model: &dyn ModelSystem, trajectory: &Trajectory) -> Result<Vec<f64>> {
    let n = model.state_dim();
    let mut out = Vec::with_capacity(trajectory.grid.len());
    walk_tangent(model, trajectory, |_, s| {
        out.push(s.columns(0, n).norm_squared());
        Ok(true)
    })?;
    Ok(out)
}

/// Grid index maximising the squared sensitivity of `channel` within
/// `window`; ties go to the earliest time.
pub fn argmax_squared_sensitivity(
    sens: &SensitivityTrajectory,
    channel: Channel,
    window: TimeWindow,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &k) in sens.indices.iter().enumerate() {
        if !window.contains(sens.grid.time(k)) {
            continue;
        }
        let value = channel.squared(&sens.u[pos], &sens.v[pos])?;
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((k, value));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::EmptyWindow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        builtin_model, integrate, ControlVector, LinearDecay, ModelOptions, QuadraticDecay,
        MODEL_NAMES,
    };
    use nalgebra::DVector;

    fn scalar_run(model: &dyn ModelSystem) -> (Trajectory, SensitivityTrajectory) {
        let grid = TimeGrid::over(2.0, 1e-3).unwrap();
        let traj = integrate(model, &ControlVector::scalar(2.0, -1.0), &grid).unwrap();
        let sens = propagate(model, &traj).unwrap();
        (traj, sens)
    }

    #[test]
    fn linear_decay_closed_forms() {
        let (_, sens) = scalar_run(&LinearDecay);
        let (u, v) = sens.at(1000).unwrap();
        assert!((u[(0, 0)] - 0.367_879_441_171_442_3).abs() < 1e-10);
        assert!((v[(0, 0)] - 0.735_758_882_342_884_6).abs() < 1e-10);
        let (u0, v0) = sens.at(0).unwrap();
        assert_eq!(u0[(0, 0)], 1.0);
        assert_eq!(v0[(0, 0)], 0.0);
        assert_eq!(sens.len(), 2001);
    }

    #[test]
    fn quadratic_decay_closed_forms() {
        let (_, sens) = scalar_run(&QuadraticDecay);
        let (u, v) = sens.at(500).unwrap();
        assert!((u[(0, 0)] - 0.25).abs() < 1e-10);
        assert!((v[(0, 0)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn discrete_linear_map_gives_matrix_powers() {
        let model = builtin_model(
            "advdiff_2d",
            &ModelOptions {
                n: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        let m = model.linear_map().unwrap().to_dense();
        let grid = TimeGrid::new(0.0, 0.005, 6).unwrap();
        let x0 = ControlVector::new(vec![0.1; 25], vec![]);
        let traj = integrate(model.as_ref(), &x0, &grid).unwrap();
        let sens = propagate(model.as_ref(), &traj).unwrap();
        let mut power = DMatrix::<f64>::identity(25, 25);
        for k in 0..=6 {
            let (u, v) = sens.at(k).unwrap();
            assert_eq!(v.ncols(), 0);
            assert!((u - &power).amax() <= 1e-15 * power.amax().max(1.0));
            power = &m * power;
        }
    }

    #[test]
    fn sensitivities_match_finite_differences_of_the_flow() {
        let opts = ModelOptions {
            n: Some(10),
            ..Default::default()
        };
        for name in MODEL_NAMES {
            let model = builtin_model(name, &opts).unwrap();
            let (grid, control) = match name {
                "linear_decay" | "quadratic_decay" => (
                    TimeGrid::over(2.0, 1e-3).unwrap(),
                    ControlVector::scalar(2.0, -1.0),
                ),
                "burgers_1d" => {
                    let b = crate::dynamics::Burgers1d::new(10, 500.0, 1.0).unwrap();
                    (
                        TimeGrid::over(0.5, 2.5e-3).unwrap(),
                        ControlVector::new(b.shock_profile(500.0).as_slice().to_vec(), vec![]),
                    )
                }
                _ => (
                    TimeGrid::new(0.0, 0.005, 100).unwrap(),
                    ControlVector::new((0..100).map(|k| (k as f64 * 0.3).sin()).collect(), vec![]),
                ),
            };
            let traj = integrate(model.as_ref(), &control, &grid).unwrap();
            let sens = propagate(model.as_ref(), &traj).unwrap();
            let c = control.stacked();
            let n = model.state_dim();
            let sample: Vec<usize> = (1..=10).map(|i| i * grid.steps / 10).collect();
            for j in 0..c.len().min(4) {
                let h = 1e-6 * (1.0 + c[j].abs());
                let perturbed = |sign: f64| {
                    let mut cc = c.clone();
                    cc[j] += sign * h;
                    integrate(model.as_ref(), &ControlVector::from_stacked(&cc, n), &grid).unwrap()
                };
                let (plus, minus) = (perturbed(1.0), perturbed(-1.0));
                for &k in &sample {
                    let fd: DVector<f64> = (&plus.states[k] - &minus.states[k]) / (2.0 * h);
                    let f = sens.control_block(k, ControlSelection::Full).unwrap();
                    let col = f.column(j);
                    let err = (&fd - col).norm() / col.norm().max(1e-12);
                    assert!(err <= 1e-4, "{name} component {j} step {k}: {err}");
                }
            }
        }
    }

    #[test]
    fn invariants_of_identity_and_scalars() {
        let (i1, i2) = gram_invariants(&DMatrix::identity(3, 3));
        assert_eq!((i1, i2), (3.0, 3.0));
        let (_, sens) = scalar_run(&QuadraticDecay);
        let inv = invariants(&sens);
        for (k, (&i1, &i2)) in inv.i1.iter().zip(&inv.i2).enumerate() {
            let u = sens.u[k][(0, 0)];
            assert!((i1 - u * u).abs() <= 1e-15 * i1.max(1.0));
            assert!(i1 >= 0.0);
            assert!(i2.abs() <= 1e-15 * i1 * i1);
        }
    }

    #[test]
    fn argmax_places_at_sensitivity_peaks() {
        let (_, sens) = scalar_run(&LinearDecay);
        let k = argmax_squared_sensitivity(
            &sens,
            Channel::Parameter(0),
            TimeWindow::left_open(0.0, 2.0),
        )
        .unwrap();
        assert_eq!(sens.grid.time(k), 1.0);
        let k = argmax_squared_sensitivity(
            &sens,
            Channel::InitialState(0),
            TimeWindow::closed(0.0, 2.0),
        )
        .unwrap();
        assert_eq!(k, 0);
    }

    #[test]
    fn argmax_ties_go_to_earliest() {
        let grid = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let sens = SensitivityTrajectory {
            grid,
            indices: (0..=5).collect(),
            u: vec![DMatrix::from_element(1, 1, 0.5); 6],
            v: vec![DMatrix::from_element(1, 1, -2.0); 6],
        };
        let k =
            argmax_squared_sensitivity(&sens, Channel::Parameter(0), TimeWindow::closed(0.2, 0.5))
                .unwrap();
        assert_eq!(k, 2);
        assert_eq!(
            argmax_squared_sensitivity(
                &sens,
                Channel::Parameter(0),
                TimeWindow::closed(0.62, 0.68)
            ),
            Err(Error::EmptyWindow)
        );
    }

    #[test]
    fn streaming_invariants_agree_with_stored() {
        let model = crate::dynamics::Burgers1d::new(16, 500.0, 1.0).unwrap();
        let grid = TimeGrid::over(0.2, 2.5e-3).unwrap();
        let control = ControlVector::new(model.shock_profile(500.0).as_slice().to_vec(), vec![]);
        let traj = integrate(&model, &control, &grid).unwrap();
        let stored = invariants(&propagate(&model, &traj).unwrap());
        let streamed = propagate_invariants(&model, &traj, 4).unwrap();
        for (pos, &t) in streamed.times.iter().enumerate() {
            let k = grid.index_of(t).unwrap();
            assert_eq!(streamed.i1[pos], stored.i1[k]);
            assert_eq!(streamed.i2[pos], stored.i2[k]);
        }
    }
}
