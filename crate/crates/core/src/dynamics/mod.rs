//! Model abstraction, the built-in models and fixed-step trajectory integration.
//!
//! A [`ModelSystem`] is either a continuous right-hand side `ẋ = f(x, α)`,
//! advanced with classical RK4, or a discrete one-step map `x_{k+1} = M(x_k, α)`
//! applied verbatim. Every model supplies analytic Jacobians with respect to the
//! state and to the parameters; PDE models hand them out in CSR form.

mod advdiff;
mod burgers;
mod scalar;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use advdiff::{gaussian_field_ic, AdvectionDiffusion2d, Boundary, SpatialGrid2d};
pub use burgers::Burgers1d;
pub use scalar::{LinearDecay, QuadraticDecay};

/// Continuous right-hand side or discrete one-step map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Continuous,
    /// One-step map built for a fixed step size.
    DiscreteMap {
        dt: f64,
    },
}

/// A state or parameter Jacobian, dense or CSR.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl Jacobian {
    pub fn nrows(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.nrows(),
            Jacobian::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.ncols(),
            Jacobian::Sparse(m) => m.ncols(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Jacobian::Dense(m) => m * x,
            Jacobian::Sparse(m) => {
                let mut out = DVector::zeros(m.nrows());
                for (i, row) in m.row_iter().enumerate() {
                    out[i] = row
                        .col_indices()
                        .iter()
                        .zip(row.values())
                        .map(|(&j, &a)| a * x[j])
                        .sum();
                }
                out
            }
        }
    }

    pub fn mul_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m * rhs,
            Jacobian::Sparse(m) => {
                let (offsets, cols, vals) = m.csr_data();
                let mut out = DMatrix::zeros(m.nrows(), rhs.ncols());
                for (c, src) in rhs.column_iter().enumerate() {
                    let src = src.as_slice();
                    let mut dst = out.column_mut(c);
                    for i in 0..m.nrows() {
                        let mut acc = 0.0;
                        for idx in offsets[i]..offsets[i + 1] {
                            acc += vals[idx] * src[cols[idx]];
                        }
                        dst[i] = acc;
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.clone(),
            Jacobian::Sparse(m) => DMatrix::from(m),
        }
    }
}

/// A dynamical model together with its analytic Jacobians.
///
/// For [`ModelKind::Continuous`] models `rhs` is `f(x, α)`; for discrete maps
/// it is the one-step map `M(x, α)` itself.
pub trait ModelSystem: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn kind(&self) -> ModelKind;
    fn rhs(&self, state: &DVector<f64>, params: &[f64]) -> DVector<f64>;
    /// `state_dim × state_dim`.
    fn jac_state(&self, state: &DVector<f64>, params: &[f64]) -> Jacobian;
    /// `state_dim × param_dim`.
    fn jac_param(&self, state: &DVector<f64>, params: &[f64]) -> DMatrix<f64>;

    /// The constant one-step matrix, for linear discrete maps only.
    fn linear_map(&self) -> Option<Jacobian> {
        None
    }
}

/// The unknowns of the inverse problem: initial state and model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub parameters: Vec<f64>,
}

impl ControlVector {
    pub fn new(initial_state: Vec<f64>, parameters: Vec<f64>) -> Self {
        Self {
            initial_state,
            parameters,
        }
    }

    pub fn scalar(x0: f64, alpha: f64) -> Self {
        Self::new(vec![x0], vec![alpha])
    }

    /// Total number of control components `n + p`.
    pub fn len(&self) -> usize {
        self.initial_state.len() + self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked `(x₀, α)` vector.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.initial_state
                .iter()
                .chain(self.parameters.iter())
                .copied(),
        )
    }

    /// Inverse of [`ControlVector::stacked`] for a model with `state_dim` states.
    pub fn from_stacked(stacked: &DVector<f64>, state_dim: usize) -> Self {
        let (x0, p) = stacked.as_slice().split_at(state_dim);
        Self::new(x0.to_vec(), p.to_vec())
    }

    pub fn check_dims(&self, model: &dyn ModelSystem) -> Result<()> {
        if self.initial_state.len() != model.state_dim() {
            return Err(Error::Dimension(format!(
                "initial state has {} components, model `{}` has {}",
                self.initial_state.len(),
                model.name(),
                model.state_dim()
            )));
        }
        if self.parameters.len() != model.param_dim() {
            return Err(Error::Dimension(format!(
                "control has {} parameters, model `{}` has {}",
                self.parameters.len(),
                model.name(),
                model.param_dim()
            )));
        }
        Ok(())
    }
}

/// Uniform time grid `t_k = t0 + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::Invalid(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid on `[0, horizon]`; `horizon` must be a whole number of steps.
    pub fn over(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon >= 0.0) {
            return Err(Error::Invalid(format!(
                "need dt > 0 and horizon >= 0, got dt = {dt}, horizon = {horizon}"
            )));
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Invalid(format!(
                "horizon {horizon} is not a multiple of dt = {dt}"
            )));
        }
        Self::new(0.0, dt, steps as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Grid index of `t`, rejecting times that fall between grid points.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if !k.is_finite() || k < 0.0 || k as usize > self.steps {
            return Err(Error::OffGrid(t));
        }
        let k = k as usize;
        if (self.time(k) - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::OffGrid(t));
        }
        Ok(k)
    }

    pub fn indices_of(&self, times: &[f64]) -> Result<Vec<usize>> {
        times.iter().map(|&t| self.index_of(t)).collect()
    }
}

/// States of a model run, one per grid point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    /// Parameters the run used.
    pub params: Vec<f64>,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> Result<&DVector<f64>> {
        Ok(&self.states[self.grid.index_of(t)?])
    }
}

/// Stage states `X₁..X₄` of one classical RK4 step and the advanced state.
pub(crate) fn rk4_step(
    model: &dyn ModelSystem,
    x: &DVector<f64>,
    params: &[f64],
    dt: f64,
) -> ([DVector<f64>; 4], DVector<f64>) {
    let k1 = model.rhs(x, params);
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = model.rhs(&x2, params);
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = model.rhs(&x3, params);
    let x4 = x + &k3 * dt;
    let k4 = model.rhs(&x4, params);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    ([x.clone(), x2, x3, x4], next)
}

pub(crate) fn check_grid(model: &dyn ModelSystem, grid: &TimeGrid) -> Result<()> {
    if let ModelKind::DiscreteMap { dt } = model.kind() {
        if (dt - grid.dt).abs() > 1e-12 * dt {
            return Err(Error::Invalid(format!(
                "model `{}` is a one-step map for dt = {dt}, grid uses dt = {}",
                model.name(),
                grid.dt
            )));
        }
    }
    Ok(())
}

/// Advances `control` over `grid`: RK4 for continuous models, the exact map
/// recurrence for discrete ones.
pub fn integrate(
    model: &dyn ModelSystem,
    control: &ControlVector,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    control.check_dims(model)?;
    check_grid(model, grid)?;
    let params = control.parameters.as_slice();
    let mut states = Vec::with_capacity(grid.len());
    let mut x = DVector::from_column_slice(&control.initial_state);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "state",
            step: 0,
        });
    }
    states.push(x.clone());
    for step in 1..=grid.steps {
        x = match model.kind() {
            ModelKind::Continuous => rk4_step(model, &x, params, grid.dt).1,
            ModelKind::DiscreteMap { .. } => model.rhs(&x, params),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "state",
                step,
            });
        }
        states.push(x.clone());
    }
    Ok(Trajectory {
        grid: *grid,
        states,
        params: control.parameters.clone(),
    })
}

/// Plain-data options for [`builtin_model`]; unset fields take model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Interior nodes (Burgers) or nodes per side (advection–diffusion).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Step size folded into discrete one-step maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

pub const MODEL_NAMES: [&str; 4] = [
    "linear_decay",
    "quadratic_decay",
    "burgers_1d",
    "advdiff_2d",
];

/// Instantiates one of the built-in models by name.
pub fn builtin_model(name: &str, options: &ModelOptions) -> Result<Box<dyn ModelSystem>> {
    match name {
        "linear_decay" => Ok(Box::new(LinearDecay)),
        "quadratic_decay" => Ok(Box::new(QuadraticDecay)),
        "burgers_1d" => Ok(Box::new(Burgers1d::from_options(options)?)),
        "advdiff_2d" => Ok(Box::new(AdvectionDiffusion2d::from_options(options)?)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}
