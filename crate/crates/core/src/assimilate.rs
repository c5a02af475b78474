//! Weighted least-squares cost, its forward-sensitivity gradient and the
//! three estimators: Newton, the linear closed form and Gauss–Newton with
//! truncated SVD.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::dynamics::{integrate, ControlVector, Jacobian, ModelSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::observe::{Gramian, ObservationOperator, ObservationSet};
use crate::sensitivity::propagate_at;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TSVD_THRESHOLD: f64 = 1e-3;
const MAX_HALVINGS: usize = 30;

/// `J(c) = ½ Σ e_iᵀ R_i⁻¹ e_i` with `e_i = z_i − h(x(t_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub value: f64,
    /// `∇J = −Σ (1/σ_i²) F_iᵀ D_hᵀ e_i`.
    pub gradient: DVector<f64>,
    pub innovations: Vec<DVector<f64>>,
}

impl CostReport {
    /// Recomputes `J` from the stored innovations.
    pub fn value_from_innovations(&self, noise_std: &[f64]) -> f64 {
        0.5 * self
            .innovations
            .iter()
            .zip(noise_std)
            .map(|(e, s)| e.norm_squared() / (s * s))
            .sum::<f64>()
    }
}

/// Outcome of an estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub control: ControlVector,
    pub iterations: usize,
    pub final_cost: f64,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub tsvd_rank: Option<usize>,
    pub gramian_det: f64,
    pub gramian_log_det: f64,
    /// Cost at the start and after every accepted iteration.
    pub cost_history: Vec<f64>,
    /// Noise-weighted Gramian at the returned control.
    #[serde(skip)]
    pub gramian: DMatrix<f64>,
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    (diff / norm).sqrt()
}

/// Everything one forward run plus one sensitivity propagation yields.
struct Linearization {
    report: CostReport,
    /// Stacked `R_i^{-1/2} D_h(x(t_i)) F(t_i)`.
    rows: DMatrix<f64>,
    /// Stacked `R_i^{-1/2} e_i`.
    residual: DVector<f64>,
}

impl Linearization {
    fn gramian(&self) -> DMatrix<f64> {
        self.rows.transpose() * &self.rows
    }
}

/// Grid truncated at the last observation, with the observation step indices.
fn observation_grid(obs: &ObservationSet, grid: &TimeGrid) -> Result<(TimeGrid, Vec<usize>)> {
    obs.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let steps = grid.indices_of(&obs.times)?;
    let last = *steps.iter().max().unwrap();
    Ok((TimeGrid::new(grid.t0, grid.dt, last)?, steps))
}

fn control_of(model: &dyn ModelSystem, stacked: &DVector<f64>) -> Result<ControlVector> {
    let c = ControlVector::from_stacked(stacked, model.state_dim());
    c.check_dims(model)?;
    Ok(c)
}

fn innovations(
    model: &dyn ModelSystem,
    control: &ControlVector,
    obs: &ObservationSet,
    grid: &TimeGrid,
    steps: &[usize],
) -> Result<(crate::dynamics::Trajectory, Vec<DVector<f64>>)> {
    obs.operator.check(model.state_dim())?;
    let traj = integrate(model, control, grid)?;
    let e = steps
        .iter()
        .zip(&obs.values)
        .map(|(&k, z)| {
            let hx = obs.operator.apply(&traj.states[k]);
            if hx.len() != z.len() {
                return Err(Error::Dimension(format!(
                    "observation has {} values, operator yields {}",
                    z.len(),
                    hx.len()
                )));
            }
            Ok(z - hx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((traj, e))
}

fn cost_only(
    model: &dyn ModelSystem,
    stacked: &DVector<f64>,
    obs: &ObservationSet,
    grid: &TimeGrid,
    steps: &[usize],
) -> Result<f64> {
    let (_, e) = innovations(model, &control_of(model, stacked)?, obs, grid, steps)?;
    Ok(0.5
        * e.iter()
            .zip(&obs.noise_std)
            .map(|(e, s)| e.norm_squared() / (s * s))
            .sum::<f64>())
}

fn linearize(
    model: &dyn ModelSystem,
    control: &ControlVector,
    obs: &ObservationSet,
    grid: &TimeGrid,
    steps: &[usize],
) -> Result<Linearization> {
    let (traj, e) = innovations(model, control, obs, grid, steps)?;
    let sens = propagate_at(model, &traj, steps)?;
    let q = control.len();
    let total_rows: usize = e.iter().map(|e| e.len()).sum();
    let mut rows = DMatrix::zeros(total_rows, q);
    let mut residual = DVector::zeros(total_rows);
    let mut offset = 0;
    for ((&k, e_i), &sigma) in steps.iter().zip(&e).zip(&obs.noise_std) {
        let f = sens.control_block(k, crate::sensitivity::ControlSelection::Full)?;
        let block = obs.operator.jacobian_times(&traj.states[k], &f) / sigma;
        rows.rows_mut(offset, e_i.len()).copy_from(&block);
        residual
            .rows_mut(offset, e_i.len())
            .copy_from(&(e_i / sigma));
        offset += e_i.len();
    }
    let gradient = -(rows.transpose() * &residual);
    let value = 0.5 * residual.norm_squared();
    Ok(Linearization {
        report: CostReport {
            value,
            gradient,
            innovations: e,
        },
        rows,
        residual,
    })
}

/// Cost, innovations and the forward-sensitivity gradient of `J`.
pub fn cost_and_gradient(
    model: &dyn ModelSystem,
    control: &ControlVector,
    obs: &ObservationSet,
    grid: &TimeGrid,
) -> Result<CostReport> {
    control.check_dims(model)?;
    let (short, steps) = observation_grid(obs, grid)?;
    Ok(linearize(model, control, obs, &short, &steps)?.report)
}

fn det_and_log_det(g: &DMatrix<f64>) -> (f64, f64) {
    let log_det = Gramian {
        total: g.clone(),
        parts: Vec::new(),
        factor: None,
    }
    .log_det();
    (g.determinant(), log_det)
}

/// Backtracking from the full step `d`, halving until the cost decreases.
/// A step whose predicted decrease is below roundoff is taken as is.
#[allow(clippy::too_many_arguments)]
fn line_search(
    model: &dyn ModelSystem,
    c: &DVector<f64>,
    d: &DVector<f64>,
    current: f64,
    predicted: f64,
    obs: &ObservationSet,
    grid: &TimeGrid,
    steps: &[usize],
    iteration: usize,
) -> Result<DVector<f64>> {
    let negligible = predicted.abs() <= 1e-14 * current.abs().max(1e-300);
    let mut scale = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let trial = c + d * scale;
        match cost_only(model, &trial, obs, grid, steps) {
            Ok(j) if j < current || (negligible && j.is_finite()) => return Ok(trial),
            Ok(_) | Err(Error::NonFinite { .. }) => scale *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::LineSearch(iteration))
}

/// Newton iteration with the Gramian as Hessian:
/// `c ← c − G⁻¹∇J`, `G = Σ F_iᵀD_hᵀR_i⁻¹D_hF_i`.
pub fn estimate_newton(
    model: &dyn ModelSystem,
    guess: &ControlVector,
    obs: &ObservationSet,
    grid: &TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<EstimateResult> {
    guess.check_dims(model)?;
    let (short, steps) = observation_grid(obs, grid)?;
    let mut c = guess.stacked();
    let mut lin = linearize(model, guess, obs, &short, &steps)?;
    let mut history = vec![lin.report.value];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        if lin.report.gradient.norm() <= tol {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        let g = lin.gramian();
        let singular = Gramian::from_rows(vec![lin.rows.clone()])?.is_singular();
        let chol = Cholesky::new(g)
            .filter(|_| !singular)
            .ok_or_else(|| Error::Singular(format!("Gramian at iteration {iterations}")))?;
        let d = -chol.solve(&lin.report.gradient);
        let predicted = -0.5 * lin.report.gradient.dot(&d);
        c = line_search(
            model,
            &c,
            &d,
            lin.report.value,
            predicted,
            obs,
            &short,
            &steps,
            iterations,
        )?;
        iterations += 1;
        lin = linearize(model, &control_of(model, &c)?, obs, &short, &steps)?;
        history.push(lin.report.value);
    }
    let gramian = lin.gramian();
    let (gramian_det, gramian_log_det) = det_and_log_det(&gramian);
    Ok(EstimateResult {
        control: control_of(model, &c)?,
        iterations,
        final_cost: lin.report.value,
        final_gradient_norm: lin.report.gradient.norm(),
        converged,
        tsvd_rank: None,
        gramian_det,
        gramian_log_det,
        cost_history: history,
        gramian,
    })
}

/// Least-squares solution of `rows·δ ≈ residual` keeping singular values
/// `≥ threshold·s_max`.
fn tsvd_solve(
    rows: &DMatrix<f64>,
    residual: &DVector<f64>,
    threshold: f64,
) -> Result<(DVector<f64>, usize)> {
    let svd = rows.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let v_t = svd.v_t.as_ref().expect("right vectors requested");
    let s_max = svd.singular_values.max();
    if !(s_max > 0.0) {
        return Err(Error::RankCollapse);
    }
    let mut step = DVector::zeros(rows.ncols());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s >= threshold * s_max {
            let coeff = u.column(k).dot(residual) / s;
            step += v_t.row(k).transpose() * coeff;
            rank += 1;
        }
    }
    Ok((step, rank))
}

/// Gauss–Newton on the full control with a truncated-SVD step and
/// backtracking on the cost. Stops when `‖δ‖ ≤ tol·(1 + ‖c‖)`.
pub fn estimate_gauss_newton_tsvd(
    model: &dyn ModelSystem,
    guess: &ControlVector,
    obs: &ObservationSet,
    grid: &TimeGrid,
    tsvd_threshold: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EstimateResult> {
    guess.check_dims(model)?;
    let (short, steps) = observation_grid(obs, grid)?;
    let mut c = guess.stacked();
    let mut lin = linearize(model, guess, obs, &short, &steps)?;
    let mut history = vec![lin.report.value];
    let mut iterations = 0;
    let mut converged = false;
    let mut rank = 0;
    while iterations < max_iter {
        let (d, r) = tsvd_solve(&lin.rows, &lin.residual, tsvd_threshold)?;
        rank = r;
        if d.norm() <= tol * (1.0 + c.norm()) {
            converged = true;
            break;
        }
        let predicted = -0.5 * lin.report.gradient.dot(&d);
        c = line_search(
            model,
            &c,
            &d,
            lin.report.value,
            predicted,
            obs,
            &short,
            &steps,
            iterations,
        )?;
        iterations += 1;
        lin = linearize(model, &control_of(model, &c)?, obs, &short, &steps)?;
        history.push(lin.report.value);
    }
    let gramian = lin.gramian();
    let (gramian_det, gramian_log_det) = det_and_log_det(&gramian);
    Ok(EstimateResult {
        control: control_of(model, &c)?,
        iterations,
        final_cost: lin.report.value,
        final_gradient_norm: lin.report.gradient.norm(),
        converged,
        tsvd_rank: Some(rank),
        gramian_det,
        gramian_log_det,
        cost_history: history,
        gramian,
    })
}

/// Weighted observation blocks `R_i^{-1/2} H M^{k_i}` of a linear map, with
/// their step indices.
pub(crate) fn linear_observation_blocks(
    map: &Jacobian,
    operator: &ObservationOperator,
    steps: &[usize],
    noise_std: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let n = map.nrows();
    if map.ncols() != n {
        return Err(Error::Dimension("one-step map must be square".into()));
    }
    if !operator.is_linear() {
        return Err(Error::Invalid(format!(
            "closed-form solve needs a linear observation operator, got `{}`",
            operator.tag()
        )));
    }
    operator.check(n)?;
    let zero = DVector::zeros(n);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let mut blocks = vec![DMatrix::zeros(0, 0); steps.len()];
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut at = 0;
    for i in order {
        while at < steps[i] {
            power = map.mul_mat(&power);
            at += 1;
        }
        let sigma = noise_std[i];
        if !(sigma > 0.0) {
            return Err(Error::Invalid(
                "noise standard deviations must be positive".into(),
            ));
        }
        blocks[i] = operator.jacobian_times(&zero, &power) / sigma;
    }
    Ok(blocks)
}

/// Closed-form estimate of the initial state of a linear map:
/// `c = G⁺ Σ (Mᵀ)^{k_i} Hᵀ R_i⁻¹ z_i`, where `G⁺` drops eigen-directions of
/// `G` with `√λ < threshold·√λ_max`.
pub fn estimate_linear_closed_form(
    map: &Jacobian,
    operator: &ObservationOperator,
    obs: &ObservationSet,
    grid: &TimeGrid,
    tsvd_threshold: f64,
) -> Result<EstimateResult> {
    obs.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let steps: Vec<usize> = grid.indices_of(&obs.times)?;
    let n = map.nrows();
    let blocks = linear_observation_blocks(map, operator, &steps, &obs.noise_std)?;
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for ((a, z), &sigma) in blocks.iter().zip(&obs.values).zip(&obs.noise_std) {
        if z.len() != a.nrows() {
            return Err(Error::Dimension(format!(
                "observation has {} values, operator yields {}",
                z.len(),
                a.nrows()
            )));
        }
        g += a.tr_mul(a);
        rhs += a.tr_mul(&(z / sigma));
    }
    let eig = SymmetricEigen::new(g.clone());
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_max > 0.0) {
        return Err(Error::RankCollapse);
    }
    let cutoff = tsvd_threshold * tsvd_threshold * lambda_max;
    let mut c = DVector::<f64>::zeros(n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda >= cutoff {
            let q = eig.eigenvectors.column(k);
            c += q * (q.dot(&rhs) / lambda);
            rank += 1;
        }
    }
    let cost = 0.5
        * blocks
            .iter()
            .zip(&obs.values)
            .zip(&obs.noise_std)
            .map(|((a, z), s)| (z / *s - a * &c).norm_squared())
            .sum::<f64>();
    let gradient_norm = (&g * &c - &rhs).norm();
    let (gramian_det, gramian_log_det) = det_and_log_det(&g);
    Ok(EstimateResult {
        control: ControlVector::new(c.as_slice().to_vec(), Vec::new()),
        iterations: 1,
        final_cost: cost,
        final_gradient_norm: gradient_norm,
        converged: true,
        tsvd_rank: Some(rank),
        gramian_det,
        gramian_log_det,
        cost_history: vec![cost],
        gramian: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LinearDecay, QuadraticDecay};
    use crate::observe::{synthesize_observations, twin_observations, ScalarObservation};
    use nalgebra_sparse::{CooMatrix, CsrMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> TimeGrid {
        TimeGrid::over(2.0, 1e-3).unwrap()
    }

    fn scalar_obs(model: &dyn ModelSystem, times: &[f64], pct: f64, seed: u64) -> ObservationSet {
        twin_observations(
            model,
            &ControlVector::scalar(2.0, -1.0),
            &grid(),
            &ObservationOperator::Identity,
            times,
            pct,
            seed,
        )
        .unwrap()
    }

    fn fd_gradient(
        model: &dyn ModelSystem,
        c: &ControlVector,
        obs: &ObservationSet,
        h: f64,
    ) -> DVector<f64> {
        let base = c.stacked();
        DVector::from_fn(base.len(), |j, _| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += h;
            minus[j] -= h;
            let jp = cost_and_gradient(model, &control_of(model, &plus).unwrap(), obs, &grid())
                .unwrap()
                .value;
            let jm = cost_and_gradient(model, &control_of(model, &minus).unwrap(), obs, &grid())
                .unwrap()
                .value;
            (jp - jm) / (2.0 * h)
        })
    }

    #[test]
    fn truth_has_zero_cost_and_gradient() {
        let obs = scalar_obs(&LinearDecay, &[0.1, 1.0], 0.0, 0);
        let r = cost_and_gradient(
            &LinearDecay,
            &ControlVector::scalar(2.0, -1.0),
            &obs,
            &grid(),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-24);
        assert!(r.gradient.norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for model in [&LinearDecay as &dyn ModelSystem, &QuadraticDecay] {
            let obs = scalar_obs(model, &[0.1, 1.0], 0.0, 0);
            let c = ControlVector::scalar(1.8, -0.8);
            let r = cost_and_gradient(model, &c, &obs, &grid()).unwrap();
            assert!(r.value > 0.0);
            let fd = fd_gradient(model, &c, &obs, 1e-6);
            assert!(
                (&r.gradient - &fd).norm() <= 1e-5 * fd.norm(),
                "{} vs {}",
                r.gradient,
                fd
            );
            assert!((r.value_from_innovations(&obs.noise_std) - r.value).abs() <= 1e-12 * r.value);
        }
    }

    #[test]
    fn single_observation_gradient_form() {
        let obs = ObservationSet {
            times: vec![0.5],
            values: vec![DVector::from_element(1, 1.0)],
            noise_std: vec![0.3],
            operator: ObservationOperator::Identity,
        };
        let c = ControlVector::scalar(2.0, -1.0);
        let r = cost_and_gradient(&LinearDecay, &c, &obs, &grid()).unwrap();
        let t: f64 = 0.5;
        let (u, v) = ((-t).exp(), 2.0 * t * (-t).exp());
        let e = 1.0 - 2.0 * (-t).exp();
        let expect = [-e * u / 0.09, -e * v / 0.09];
        assert!((r.gradient[0] - expect[0]).abs() < 1e-9);
        assert!((r.gradient[1] - expect[1]).abs() < 1e-9);
    }

    #[test]
    fn gradient_is_gramian_times_offset_near_truth() {
        let obs = scalar_obs(&QuadraticDecay, &[0.1, 0.5], 0.0, 0);
        let dc = DVector::from_vec(vec![4e-4, -7e-4]);
        let c = control_of(
            &QuadraticDecay,
            &(ControlVector::scalar(2.0, -1.0).stacked() + &dc),
        )
        .unwrap();
        let (short, steps) = observation_grid(&obs, &grid()).unwrap();
        let lin = linearize(&QuadraticDecay, &c, &obs, &short, &steps).unwrap();
        let g_dc = lin.gramian() * &dc;
        assert!((&lin.report.gradient - &g_dc).norm() <= 0.1 * g_dc.norm());
    }

    #[test]
    fn newton_recovers_truth_without_noise() {
        for (model, times, guess) in [
            (&LinearDecay as &dyn ModelSystem, [0.1, 1.0], (1.8, -0.8)),
            (&QuadraticDecay, [0.1, 0.5], (1.75, -0.75)),
        ] {
            let obs = scalar_obs(model, &times, 0.0, 0);
            let res = estimate_newton(
                model,
                &ControlVector::scalar(guess.0, guess.1),
                &obs,
                &grid(),
                DEFAULT_TOL,
                DEFAULT_MAX_ITER,
            )
            .unwrap();
            assert!(res.converged);
            assert!(res.iterations <= 20);
            assert!((res.control.initial_state[0] - 2.0).abs() <= 1e-6);
            assert!((res.control.parameters[0] + 1.0).abs() <= 1e-6);
            assert!(res.final_gradient_norm <= DEFAULT_TOL);
            assert!(res.cost_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn newton_with_noise_converges_near_truth() {
        let obs = scalar_obs(&LinearDecay, &[0.1, 1.0], 0.1, 7);
        let res = estimate_newton(
            &LinearDecay,
            &ControlVector::scalar(1.8, -0.8),
            &obs,
            &grid(),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert!(res.converged);
        assert!(res.final_cost < 1e-12 || res.final_gradient_norm <= DEFAULT_TOL);
        assert!((res.control.initial_state[0] - 2.0).abs() < 1.0);
    }

    #[test]
    fn newton_reports_exhausted_iterations() {
        let obs = scalar_obs(&LinearDecay, &[0.1, 1.0], 0.0, 0);
        let res = estimate_newton(
            &LinearDecay,
            &ControlVector::scalar(1.8, -0.8),
            &obs,
            &grid(),
            0.0,
            1,
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn newton_singular_gramian_is_an_error() {
        let obs = scalar_obs(&LinearDecay, &[1.0], 0.0, 0);
        let err = estimate_newton(
            &LinearDecay,
            &ControlVector::scalar(1.8, -0.8),
            &obs,
            &grid(),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn nonlinear_observation_newton() {
        let truth = integrate(&QuadraticDecay, &ControlVector::scalar(2.0, -1.0), &grid()).unwrap();
        let op = ObservationOperator::Scalar(ScalarObservation::square());
        let obs = synthesize_observations(&truth, &op, &[0.1, 0.5], 0.0, 0).unwrap();
        let res = estimate_newton(
            &QuadraticDecay,
            &ControlVector::scalar(1.75, -0.75),
            &obs,
            &grid(),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert!((res.control.stacked() - DVector::from_vec(vec![2.0, -1.0])).amax() < 1e-6);
    }

    fn dense_map(m: &DMatrix<f64>) -> Jacobian {
        Jacobian::Sparse(CsrMatrix::from(&CooMatrix::from(m)))
    }

    #[test]
    fn closed_form_identity_map() {
        let map = dense_map(&DMatrix::identity(3, 3));
        let x0 = DVector::from_vec(vec![0.3, -1.0, 2.5]);
        let obs = ObservationSet {
            times: vec![0.0],
            values: vec![x0.clone()],
            noise_std: vec![1.0],
            operator: ObservationOperator::Identity,
        };
        let grid = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let res =
            estimate_linear_closed_form(&map, &ObservationOperator::Identity, &obs, &grid, 1e-3)
                .unwrap();
        assert_eq!(res.tsvd_rank, Some(3));
        assert!((DVector::from_vec(res.control.initial_state) - x0).amax() < 1e-14);
    }

    #[test]
    fn closed_form_inverts_map_power() {
        let m = DMatrix::from_row_slice(2, 2, &[1.1, 0.2, -0.1, 0.9]);
        let grid = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let z = m.pow(3) * &x0;
        let obs = ObservationSet {
            times: vec![0.3],
            values: vec![z],
            noise_std: vec![0.4],
            operator: ObservationOperator::Identity,
        };
        let res = estimate_linear_closed_form(
            &dense_map(&m),
            &ObservationOperator::Identity,
            &obs,
            &grid,
            1e-6,
        )
        .unwrap();
        assert!((DVector::from_vec(res.control.initial_state) - x0).amax() < 1e-12);
        assert!(res.final_cost < 1e-24);
    }

    #[test]
    fn closed_form_rejects_bad_input() {
        let map = dense_map(&DMatrix::identity(2, 2));
        let grid = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let empty = ObservationSet {
            times: vec![],
            values: vec![],
            noise_std: vec![],
            operator: ObservationOperator::Identity,
        };
        assert!(matches!(
            estimate_linear_closed_form(&map, &ObservationOperator::Identity, &empty, &grid, 1e-3),
            Err(Error::EmptyWindow)
        ));
        let zero = ObservationSet {
            times: vec![0.1],
            values: vec![DVector::zeros(1)],
            noise_std: vec![1.0],
            operator: ObservationOperator::Linear(DMatrix::zeros(1, 2)),
        };
        assert!(matches!(
            estimate_linear_closed_form(&map, &zero.operator.clone(), &zero, &grid, 1e-3),
            Err(Error::RankCollapse)
        ));
        let square = ObservationOperator::Scalar(ScalarObservation::square());
        let obs = ObservationSet {
            operator: square.clone(),
            values: vec![DVector::zeros(2)],
            ..zero
        };
        assert!(estimate_linear_closed_form(&map, &square, &obs, &grid, 1e-3).is_err());
    }

    #[derive(Debug)]
    struct MatrixMap {
        m: DMatrix<f64>,
        dt: f64,
    }

    impl ModelSystem for MatrixMap {
        fn name(&self) -> &'static str {
            "matrix_map"
        }
        fn state_dim(&self) -> usize {
            self.m.nrows()
        }
        fn param_dim(&self) -> usize {
            0
        }
        fn kind(&self) -> crate::dynamics::ModelKind {
            crate::dynamics::ModelKind::DiscreteMap { dt: self.dt }
        }
        fn rhs(&self, x: &DVector<f64>, _: &[f64]) -> DVector<f64> {
            &self.m * x
        }
        fn jac_state(&self, _: &DVector<f64>, _: &[f64]) -> Jacobian {
            Jacobian::Dense(self.m.clone())
        }
        fn jac_param(&self, x: &DVector<f64>, _: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(x.len(), 0)
        }
    }

    #[test]
    fn gauss_newton_first_step_equals_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| {
            (if i == j { 0.9 } else { 0.0 }) + 0.1 * rng.random_range(-1.0..1.0)
        });
        let model = MatrixMap {
            m: m.clone(),
            dt: 0.1,
        };
        let grid = TimeGrid::new(0.0, 0.1, 6).unwrap();
        let op = ObservationOperator::Pointwise(vec![0, 2, 3, 5]);
        let truth = ControlVector::new((0..n).map(|i| (i as f64).sin() + 1.0).collect(), vec![]);
        let obs = twin_observations(&model, &truth, &grid, &op, &[0.2, 0.5], 0.05, 3).unwrap();
        for threshold in [1e-8, 0.3] {
            let closed =
                estimate_linear_closed_form(&dense_map(&m), &op, &obs, &grid, threshold).unwrap();
            let gn = estimate_gauss_newton_tsvd(
                &model,
                &ControlVector::new(vec![0.0; n], vec![]),
                &obs,
                &grid,
                threshold,
                DEFAULT_TOL,
                1,
            )
            .unwrap();
            assert_eq!(gn.tsvd_rank, closed.tsvd_rank);
            let diff = (gn.control.stacked() - closed.control.stacked()).amax();
            assert!(diff <= 1e-10, "threshold {threshold}: {diff}");
        }
    }

    #[test]
    fn gauss_newton_recovers_scalar_truth() {
        let obs = scalar_obs(&QuadraticDecay, &[0.1, 0.5], 0.0, 0);
        let res = estimate_gauss_newton_tsvd(
            &QuadraticDecay,
            &ControlVector::scalar(1.75, -0.75),
            &obs,
            &grid(),
            1e-8,
            1e-12,
            50,
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.control.stacked() - DVector::from_vec(vec![2.0, -1.0])).amax() < 1e-8);
        assert!(res.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[0.0, 0.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_json_fields() {
        let obs = scalar_obs(&LinearDecay, &[0.1, 1.0], 0.0, 0);
        let res = estimate_newton(
            &LinearDecay,
            &ControlVector::scalar(1.8, -0.8),
            &obs,
            &grid(),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        let v = serde_json::to_value(&res).unwrap();
        for key in [
            "control",
            "iterations",
            "final_cost",
            "final_gradient_norm",
            "converged",
            "tsvd_rank",
            "gramian_det",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("gramian").is_none());
    }
}
