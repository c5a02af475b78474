//! Sensitivity of the optimal estimate to the observations, and the
//! two-observation sweep fields.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assimilate::linear_observation_blocks;
use crate::dynamics::{integrate, ControlVector, Jacobian, ModelSystem, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::observe::{build_gramian, weighted_block, Gramian, ObservationOperator};
use crate::sensitivity::{propagate, Channel, ControlSelection, SensitivityTrajectory};

/// Blocks `∂ĉ/∂z_i`, one per observation, each `q × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSensitivity {
    pub times: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl EstimateSensitivity {
    /// `(y_i, w_i)` of a scalar model's `i`-th observation.
    pub fn scalar_pair(&self, i: usize) -> Option<(f64, f64)> {
        let b = self.blocks.get(i)?;
        (b.shape() == (2, 1)).then(|| (b[(0, 0)], b[(1, 0)]))
    }
}

/// `1/u(k)` or `1/v(k)`: the single-observation sensitivity of `x₀` or `α`
/// once the innovation is neglected.
pub fn single_obs_sensitivity(
    sens: &SensitivityTrajectory,
    channel: Channel,
    time: f64,
) -> Result<f64> {
    let k = sens.grid.index_of(time)?;
    let (u, v) = sens.at(k)?;
    if u.nrows() != 1 {
        return Err(Error::Invalid(
            "single-observation sensitivity needs a scalar state".into(),
        ));
    }
    let s = match channel {
        Channel::InitialState(0) => u[(0, 0)],
        Channel::Parameter(j) if j < v.ncols() => v[(0, j)],
        _ => {
            return Err(Error::Dimension(format!(
                "no control component {channel:?}"
            )))
        }
    };
    if s == 0.0 {
        return Err(Error::Singular(format!(
            "sensitivity vanishes at t = {time}"
        )));
    }
    Ok(1.0 / s)
}

/// `∂ĉ/∂z_i = G⁻¹ F_iᵀ D_hᵀ R_i⁻¹` for observations at `times`.
pub fn estimate_sensitivity(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    times: &[f64],
    noise_std: &[f64],
) -> Result<EstimateSensitivity> {
    let gramian = build_gramian(
        sens,
        trajectory,
        operator,
        times,
        noise_std,
        ControlSelection::Full,
    )?;
    if gramian.is_singular() {
        return Err(Error::Singular(format!(
            "Gramian of observations at {times:?}"
        )));
    }
    let inverse = gramian
        .total
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("Gramian of observations at {times:?}")))?;
    let indices = trajectory.grid.indices_of(times)?;
    let blocks = indices
        .iter()
        .zip(noise_std)
        .map(|(&k, &sigma)| {
            let rows =
                weighted_block(sens, trajectory, operator, k, sigma, ControlSelection::Full)?;
            Ok(inverse.solve(&rows.transpose()) / sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateSensitivity {
        times: times.to_vec(),
        blocks,
    })
}

/// Two-observation sensitivities with unit noise.
pub fn pair_sensitivities(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    t1: f64,
    t2: f64,
) -> Result<EstimateSensitivity> {
    if trajectory.grid.index_of(t1)? == trajectory.grid.index_of(t2)? {
        return Err(Error::Singular(format!("both observations at t = {t1}")));
    }
    estimate_sensitivity(sens, trajectory, operator, &[t1, t2], &[1.0, 1.0])
}

/// Closed forms `[y₁, w₁, y₂, w₂]` for two scalar observations:
///
/// ```text
/// y₁ =  d₁d₂² v₂ Δ / |G|    w₁ = −d₁d₂² u₂ Δ / |G|
/// y₂ = −d₁²d₂ v₁ Δ / |G|    w₂ =  d₁²d₂ u₁ Δ / |G|
/// ```
///
/// with `Δ = u₁v₂ − u₂v₁` and `|G| = d₁²d₂²Δ²`.
pub fn pair_closed_form(u1: f64, v1: f64, u2: f64, v2: f64, d1: f64, d2: f64) -> [f64; 4] {
    let delta = u1 * v2 - u2 * v1;
    let det = crate::observe::gramian_det_closed_form(u1, v1, u2, v2, d1, d2);
    [
        d1 * d2 * d2 * v2 * delta / det,
        -d1 * d2 * d2 * u2 * delta / det,
        -d1 * d1 * d2 * v1 * delta / det,
        d1 * d1 * d2 * u1 * delta / det,
    ]
}

/// `∂c/∂z_i = G⁻¹ (Mᵀ)^{k_i} Hᵀ R_i⁻¹` for a linear map observed at steps
/// `steps`, computed through the pseudo-inverse of the stacked weighted rows.
pub fn linear_vector_sensitivity(
    map: &Jacobian,
    operator: &ObservationOperator,
    steps: &[usize],
    noise_std: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    if steps.is_empty() || steps.len() != noise_std.len() {
        return Err(Error::Dimension(
            "one noise level per observation step is required".into(),
        ));
    }
    let blocks = linear_observation_blocks(map, operator, steps, noise_std)?;
    let total_rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let n = map.nrows();
    let mut stacked = DMatrix::zeros(total_rows, n);
    let mut offset = 0;
    for b in &blocks {
        stacked.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    let gramian = Gramian::from_rows(vec![stacked.clone()])?;
    if gramian.is_singular() {
        return Err(Error::Singular("Gramian of the linear observations".into()));
    }
    let pinv = stacked
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let mut offset = 0;
    Ok(blocks
        .iter()
        .zip(noise_std)
        .map(|(b, &sigma)| {
            let out = pinv.columns(offset, b.nrows()) / sigma;
            offset += b.nrows();
            out
        })
        .collect())
}

/// Squared estimate sensitivities over a `(t₁, t₂)` grid, row-major in `t₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub t1_axis: Vec<f64>,
    pub t2_axis: Vec<f64>,
    pub y1sq: Vec<f64>,
    pub w1sq: Vec<f64>,
    pub y2sq: Vec<f64>,
    pub w2sq: Vec<f64>,
    pub det_g: Vec<f64>,
    pub singular: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    Y1sq,
    W1sq,
    Y2sq,
    W2sq,
    DetG,
}

impl SweepField {
    pub const ALL: [SweepField; 5] = [
        SweepField::Y1sq,
        SweepField::W1sq,
        SweepField::Y2sq,
        SweepField::W2sq,
        SweepField::DetG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepField::Y1sq => "y1sq",
            SweepField::W1sq => "w1sq",
            SweepField::Y2sq => "y2sq",
            SweepField::W2sq => "w2sq",
            SweepField::DetG => "detG",
        }
    }
}

/// `count` grid-aligned times `start + (end − start)·k/count`, `k = 1..=count`;
/// a single point at `end` when `start == end`.
pub fn uniform_axis(grid: &TimeGrid, start: f64, end: f64, count: usize) -> Result<Vec<f64>> {
    if count == 1 && end == start {
        return Ok(vec![grid.time(grid.index_of(end)?)]);
    }
    if count == 0 || !(end > start) {
        return Err(Error::Invalid(format!(
            "axis needs end > start and at least one point, got ({start}, {end}] with {count}"
        )));
    }
    (1..=count)
        .map(|k| {
            let t = start + (end - start) * k as f64 / count as f64;
            Ok(grid.time(grid.index_of(t)?))
        })
        .collect()
}

impl SweepGrid {
    pub fn field(&self, field: SweepField) -> &[f64] {
        match field {
            SweepField::Y1sq => &self.y1sq,
            SweepField::W1sq => &self.w1sq,
            SweepField::Y2sq => &self.y2sq,
            SweepField::W2sq => &self.w2sq,
            SweepField::DetG => &self.det_g,
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.t2_axis.len() + j
    }

    fn extremum(
        &self,
        field: SweepField,
        cells: impl Iterator<Item = usize>,
        largest: bool,
    ) -> Option<usize> {
        let values = self.field(field);
        let mut best: Option<usize> = None;
        for c in cells {
            if self.singular[c] || !values[c].is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) if largest => values[c] > values[b],
                Some(b) => values[c] < values[b],
            };
            if better {
                best = Some(c);
            }
        }
        best
    }

    /// `(t₁, t₂)` of the smallest non-singular value among cells passing `keep`.
    pub fn argmin_where(
        &self,
        field: SweepField,
        keep: impl Fn(f64, f64) -> bool,
    ) -> Option<(f64, f64)> {
        let cells = (0..self.singular.len()).filter(|&c| {
            let (a, b) = self.times_of(c);
            keep(a, b)
        });
        self.extremum(field, cells, false).map(|c| self.times_of(c))
    }

    /// `(t₁, t₂)` of the largest non-singular value among cells passing `keep`.
    pub fn argmax_where(
        &self,
        field: SweepField,
        keep: impl Fn(f64, f64) -> bool,
    ) -> Option<(f64, f64)> {
        let cells = (0..self.singular.len()).filter(|&c| {
            let (a, b) = self.times_of(c);
            keep(a, b)
        });
        self.extremum(field, cells, true).map(|c| self.times_of(c))
    }

    pub fn argmin(&self, field: SweepField) -> Option<(f64, f64)> {
        self.argmin_where(field, |_, _| true)
    }

    pub fn argmax(&self, field: SweepField) -> Option<(f64, f64)> {
        self.argmax_where(field, |_, _| true)
    }

    /// `t₂ ≥ min_time` minimizing `field` along the row whose `t₁` is nearest `t1`.
    pub fn row_argmin(&self, field: SweepField, t1: f64, min_time: f64) -> Option<f64> {
        let i = nearest(&self.t1_axis, t1)?;
        let n2 = self.t2_axis.len();
        let cells = (0..n2)
            .filter(|&j| self.t2_axis[j] >= min_time - 1e-12)
            .map(|j| self.cell(i, j));
        self.extremum(field, cells, false)
            .map(|c| self.t2_axis[c % n2])
    }

    /// `t₁ ≥ min_time` minimizing `field` down the column whose `t₂` is nearest `t2`.
    pub fn column_argmin(&self, field: SweepField, t2: f64, min_time: f64) -> Option<f64> {
        let j = nearest(&self.t2_axis, t2)?;
        let n2 = self.t2_axis.len();
        let cells = (0..self.t1_axis.len())
            .filter(|&i| self.t1_axis[i] >= min_time - 1e-12)
            .map(|i| self.cell(i, j));
        self.extremum(field, cells, false)
            .map(|c| self.t1_axis[c / n2])
    }

    fn times_of(&self, c: usize) -> (f64, f64) {
        let n2 = self.t2_axis.len();
        (self.t1_axis[c / n2], self.t2_axis[c % n2])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t1,t2,y1sq,w1sq,y2sq,w2sq,detG,singular_flag\n");
        for (i, t1) in self.t1_axis.iter().enumerate() {
            for (j, t2) in self.t2_axis.iter().enumerate() {
                let c = self.cell(i, j);
                out.push_str(&format!(
                    "{t1},{t2},{},{},{},{},{},{}\n",
                    self.y1sq[c],
                    self.w1sq[c],
                    self.y2sq[c],
                    self.w2sq[c],
                    self.det_g[c],
                    u8::from(self.singular[c])
                ));
            }
        }
        out
    }
}

fn nearest(axis: &[f64], t: f64) -> Option<usize> {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(i, _)| i)
}

struct Cell {
    values: [f64; 4],
    det: f64,
    singular: bool,
}

fn sweep_cell(
    sens: &SensitivityTrajectory,
    trajectory: &Trajectory,
    operator: &ObservationOperator,
    k1: usize,
    k2: usize,
) -> Cell {
    let f = |k: usize| {
        let (u, v) = sens.at(k).expect("full propagation records every step");
        let d = operator.jacobian(&trajectory.states[k])[(0, 0)];
        (u[(0, 0)], v[(0, 0)], d)
    };
    let (u1, v1, d1) = f(k1);
    let (u2, v2, d2) = f(k2);
    let a = d1 * d1;
    let b = d2 * d2;
    let g11 = a * u1 * u1 + b * u2 * u2;
    let g22 = a * v1 * v1 + b * v2 * v2;
    let g12 = a * u1 * v1 + b * u2 * v2;
    let det = g11 * g22 - g12 * g12;
    let trace = g11 + g22;
    if k1 == k2 || !(det > 1e-12 * trace * trace) {
        return Cell {
            values: [f64::NAN; 4],
            det,
            singular: true,
        };
    }
    let y1 = d1 * (g22 * u1 - g12 * v1) / det;
    let w1 = d1 * (g11 * v1 - g12 * u1) / det;
    let y2 = d2 * (g22 * u2 - g12 * v2) / det;
    let w2 = d2 * (g11 * v2 - g12 * u2) / det;
    Cell {
        values: [y1 * y1, w1 * w1, y2 * y2, w2 * w2],
        det,
        singular: false,
    }
}

/// Evaluates the pair sensitivities over the Cartesian product of the axes
/// for a scalar model with one parameter and unit noise.
pub fn sweep(
    model: &dyn ModelSystem,
    control: &ControlVector,
    operator: &ObservationOperator,
    grid: &TimeGrid,
    t1_axis: &[f64],
    t2_axis: &[f64],
) -> Result<SweepGrid> {
    if model.state_dim() != 1 || model.param_dim() != 1 {
        return Err(Error::Invalid(format!(
            "sweeps need a scalar model with one parameter; `{}` has {} states and {} parameters",
            model.name(),
            model.state_dim(),
            model.param_dim()
        )));
    }
    operator.check(1)?;
    let k1s = grid.indices_of(t1_axis)?;
    let k2s = grid.indices_of(t2_axis)?;
    let trajectory = integrate(model, control, grid)?;
    let sens = propagate(model, &trajectory)?;
    let pairs: Vec<(usize, usize)> = k1s
        .iter()
        .flat_map(|&a| k2s.iter().map(move |&b| (a, b)))
        .collect();
    let eval = |&(a, b): &(usize, usize)| sweep_cell(&sens, &trajectory, operator, a, b);
    #[cfg(feature = "parallel")]
    let cells: Vec<Cell> = {
        use rayon::prelude::*;
        pairs.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cells: Vec<Cell> = pairs.iter().map(eval).collect();

    let pick = |i: usize| cells.iter().map(|c| c.values[i]).collect::<Vec<_>>();
    Ok(SweepGrid {
        t1_axis: k1s.iter().map(|&k| grid.time(k)).collect(),
        t2_axis: k2s.iter().map(|&k| grid.time(k)).collect(),
        y1sq: pick(0),
        w1sq: pick(1),
        y2sq: pick(2),
        w2sq: pick(3),
        det_g: cells.iter().map(|c| c.det).collect(),
        singular: cells.iter().map(|c| c.singular).collect(),
    })
}

/// Stacked `[y₁, w₁, y₂, w₂]` as a vector, for comparisons.
pub fn pair_vector(es: &EstimateSensitivity) -> Option<DVector<f64>> {
    let (y1, w1) = es.scalar_pair(0)?;
    let (y2, w2) = es.scalar_pair(1)?;
    Some(DVector::from_vec(vec![y1, w1, y2, w2]))
}
