use nalgebra::{DMatrix, DVector};

use super::{Jacobian, ModelKind, ModelSystem};

/// `ẋ = a·x` with parameter `a`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearDecay;

impl ModelSystem for LinearDecay {
    fn name(&self) -> &'static str {
        "linear_decay"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Continuous
    }

    fn rhs(&self, state: &DVector<f64>, params: &[f64]) -> DVector<f64> {
        state * params[0]
    }

    fn jac_state(&self, _state: &DVector<f64>, params: &[f64]) -> Jacobian {
        Jacobian::Dense(DMatrix::from_element(1, 1, params[0]))
    }

    fn jac_param(&self, state: &DVector<f64>, _params: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, state[0])
    }
}

/// `ẋ = a·x²` with parameter `a`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticDecay;

impl ModelSystem for QuadraticDecay {
    fn name(&self) -> &'static str {
        "quadratic_decay"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Continuous
    }

    fn rhs(&self, state: &DVector<f64>, params: &[f64]) -> DVector<f64> {
        state.map(|x| params[0] * x * x)
    }

    fn jac_state(&self, state: &DVector<f64>, params: &[f64]) -> Jacobian {
        Jacobian::Dense(DMatrix::from_element(1, 1, 2.0 * params[0] * state[0]))
    }

    fn jac_param(&self, state: &DVector<f64>, _params: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, state[0] * state[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_jacobians() {
        let x = DVector::from_element(1, 1.5);
        let p = [-0.7];
        assert_eq!(LinearDecay.jac_state(&x, &p).to_dense()[(0, 0)], -0.7);
        assert_eq!(LinearDecay.jac_param(&x, &p)[(0, 0)], 1.5);
        assert_eq!(
            QuadraticDecay.jac_state(&x, &p).to_dense()[(0, 0)],
            2.0 * -0.7 * 1.5
        );
        assert_eq!(QuadraticDecay.jac_param(&x, &p)[(0, 0)], 2.25);
    }
}
