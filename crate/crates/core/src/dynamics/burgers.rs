use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::{Jacobian, ModelKind, ModelSystem};
use crate::error::{Error, Result};

/// Viscous Burgers equation on `(0, L)` with zero Dirichlet walls.
///
/// Semi-discrete on `n` interior nodes `x_i = i·Δx`, `Δx = L/(n+1)`:
///
/// ```text
/// du_i/dt = -(u_{i+1} + u_i + u_{i-1})(u_{i+1} - u_{i-1}) / (6Δx)
///           + (u_{i+1} - 2u_i + u_{i-1}) / (Re·Δx²)
/// ```
///
/// The nonlinear term is the skew-symmetric (energy-conserving) average of
/// the advective and conservative forms. The model has no parameters; the
/// control is the initial velocity field.
#[derive(Debug, Clone)]
pub struct Burgers1d {
    n: usize,
    re: f64,
    length: f64,
    dx: f64,
}

impl Burgers1d {
    pub const DEFAULT_N: usize = 128;
    pub const DEFAULT_RE: f64 = 500.0;

    /// `re = f64::INFINITY` drops the viscous term.
    pub fn new(n: usize, re: f64, length: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid(
                "Burgers grid needs at least one node".into(),
            ));
        }
        if !(re > 0.0) {
            return Err(Error::Invalid(format!(
                "Reynolds number must be positive, got {re}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Invalid(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Self {
            n,
            re,
            length,
            dx: length / (n + 1) as f64,
        })
    }

    pub fn from_options(options: &super::ModelOptions) -> Result<Self> {
        Self::new(
            options.n.unwrap_or(Self::DEFAULT_N),
            options.re.unwrap_or(Self::DEFAULT_RE),
            options.length.unwrap_or(1.0),
        )
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn reynolds(&self) -> f64 {
        self.re
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64 * self.dx).collect()
    }

    /// `u(x, 0) = x / (1 + exp(Re/16·(4x² − 1)))`, a ramp that steepens into
    /// a shock at `x = L/2`.
    pub fn shock_profile(&self, re: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            self.nodes()
                .into_iter()
                .map(|x| x / (1.0 + (re / 16.0 * (4.0 * x * x - 1.0)).exp())),
        )
    }

    /// `u(x, 0) = sin(2πx/L)`.
    pub fn sine_profile(&self) -> DVector<f64> {
        let k = 2.0 * std::f64::consts::PI / self.length;
        DVector::from_iterator(self.n, self.nodes().into_iter().map(|x| (k * x).sin()))
    }

    /// Largest step satisfying `max|u|·dt/Δx ≤ 0.5` and `dt/(Re·Δx²) ≤ 0.25`.
    pub fn stable_dt(&self, max_speed: f64) -> f64 {
        let advective = if max_speed > 0.0 {
            0.5 * self.dx / max_speed
        } else {
            f64::INFINITY
        };
        let viscous = 0.25 * self.dx * self.dx * self.re;
        advective.min(viscous)
    }

    fn viscosity(&self) -> f64 {
        if self.re.is_infinite() {
            0.0
        } else {
            1.0 / self.re
        }
    }

    fn neighbors(u: &DVector<f64>, i: usize) -> (f64, f64) {
        let n = u.len();
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let right = if i + 1 == n { 0.0 } else { u[i + 1] };
        (left, right)
    }
}

impl ModelSystem for Burgers1d {
    fn name(&self) -> &'static str {
        "burgers_1d"
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Continuous
    }

    fn rhs(&self, u: &DVector<f64>, _params: &[f64]) -> DVector<f64> {
        let adv = 1.0 / (6.0 * self.dx);
        let diff = self.viscosity() / (self.dx * self.dx);
        DVector::from_fn(self.n, |i, _| {
            let (l, r) = Self::neighbors(u, i);
            let c = u[i];
            -adv * (r + c + l) * (r - l) + diff * (r - 2.0 * c + l)
        })
    }

    fn jac_state(&self, u: &DVector<f64>, _params: &[f64]) -> Jacobian {
        let adv = -1.0 / (6.0 * self.dx);
        let diff = self.viscosity() / (self.dx * self.dx);
        let n = self.n;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(3 * n);
        let mut vals = Vec::with_capacity(3 * n);
        offsets.push(0);
        for i in 0..n {
            let (l, r) = Self::neighbors(u, i);
            let s = r + u[i] + l;
            let d = r - l;
            if i > 0 {
                cols.push(i - 1);
                vals.push(adv * (d - s) + diff);
            }
            cols.push(i);
            vals.push(adv * d - 2.0 * diff);
            if i + 1 < n {
                cols.push(i + 1);
                vals.push(adv * (d + s) + diff);
            }
            offsets.push(cols.len());
        }
        Jacobian::Sparse(
            CsrMatrix::try_from_csr_data(n, n, offsets, cols, vals)
                .expect("tridiagonal pattern is valid CSR"),
        )
    }

    fn jac_param(&self, _u: &DVector<f64>, _params: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.n, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_options() {
        assert!(Burgers1d::new(0, 500.0, 1.0).is_err());
        assert!(Burgers1d::new(8, 0.0, 1.0).is_err());
        assert!(Burgers1d::new(8, -3.0, 1.0).is_err());
        assert!(Burgers1d::new(8, 500.0, 0.0).is_err());
    }

    #[test]
    fn inviscid_skew_form_conserves_momentum() {
        let model = Burgers1d::new(64, f64::INFINITY, 1.0).unwrap();
        // Supported away from both walls so no flux leaves the domain.
        let u = DVector::from_iterator(
            64,
            model.nodes().into_iter().map(|x| {
                if (0.2..0.8).contains(&x) {
                    (std::f64::consts::PI * (x - 0.2) / 0.6).sin().powi(2) * (1.0 + x)
                } else {
                    0.0
                }
            }),
        );
        let total: f64 = model.rhs(&u, &[]).iter().sum();
        assert!(total.abs() <= 1e-10, "net momentum change {total}");
    }

    #[test]
    fn shock_profile_shape() {
        let model = Burgers1d::new(127, 500.0, 1.0).unwrap();
        let u = model.shock_profile(500.0);
        let nodes = model.nodes();
        // Left of the front the profile is the identity ramp, right of it ~0.
        let i_left = nodes.iter().position(|&x| x >= 0.3).unwrap();
        let i_right = nodes.iter().position(|&x| x >= 0.7).unwrap();
        assert!((u[i_left] - nodes[i_left]).abs() < 1e-6);
        assert!(u[i_right].abs() < 1e-6);
        let s = model.sine_profile();
        assert!((s[31] - (2.0 * std::f64::consts::PI * nodes[31]).sin()).abs() < 1e-15);
    }

    #[test]
    fn stable_dt_respects_both_limits() {
        let model = Burgers1d::new(128, 500.0, 1.0).unwrap();
        let dt = model.stable_dt(1.0);
        assert!(dt * 1.0 / model.dx() <= 0.5 + 1e-12);
        assert!(dt / 500.0 / model.dx().powi(2) <= 0.25 + 1e-12);
    }
}
