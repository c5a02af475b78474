use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use super::{Jacobian, ModelKind, ModelSystem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Dirichlet,
    Periodic,
}

/// Node layout of a uniform grid on the unit square, x index fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid2d {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x_first: f64,
    pub y_first: f64,
    pub extent: (f64, f64),
}

impl SpatialGrid2d {
    /// `n × n` nodes on `[0, 1]²`: interior nodes for Dirichlet walls, a
    /// half-open lattice starting at the origin for periodic closure.
    pub fn unit_square(n: usize, boundary: Boundary) -> Self {
        let (h, first) = match boundary {
            Boundary::Dirichlet => {
                let h = 1.0 / (n + 1) as f64;
                (h, h)
            }
            Boundary::Periodic => (1.0 / n as f64, 0.0),
        };
        Self {
            nx: n,
            ny: n,
            dx: h,
            dy: h,
            x_first: first,
            y_first: first,
            extent: (1.0, 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = (k % self.nx, k / self.nx);
        (
            self.x_first + i as f64 * self.dx,
            self.y_first + j as f64 * self.dy,
        )
    }
}

/// Samples `exp(-((x-x₀)² + (y-y₀)²)/width)` at the grid nodes.
pub fn gaussian_field_ic(
    center: (f64, f64),
    width: f64,
    grid: &SpatialGrid2d,
) -> Result<DVector<f64>> {
    if !(width > 0.0) {
        return Err(Error::Invalid(format!(
            "Gaussian width must be positive, got {width}"
        )));
    }
    let (lx, ly) = grid.extent;
    if !(0.0..=lx).contains(&center.0) || !(0.0..=ly).contains(&center.1) {
        return Err(Error::Invalid(format!(
            "Gaussian center {center:?} lies outside the domain"
        )));
    }
    Ok(DVector::from_fn(grid.len(), |k, _| {
        let (x, y) = grid.coords(k);
        (-((x - center.0).powi(2) + (y - center.1).powi(2)) / width).exp()
    }))
}

/// Linear advection–diffusion `u_t + c·∇u = ν∇²u` on the unit square as a
/// discrete one-step map `x ↦ (I + dt·L)x`, where `L` is the second-order
/// centered five-point operator.
#[derive(Debug, Clone)]
pub struct AdvectionDiffusion2d {
    grid: SpatialGrid2d,
    velocity: (f64, f64),
    nu: f64,
    dt: f64,
    boundary: Boundary,
    map: CsrMatrix<f64>,
}

impl AdvectionDiffusion2d {
    pub const DEFAULT_N: usize = 32;
    pub const DEFAULT_DT: f64 = 0.005;

    pub fn new(n: usize, cx: f64, cy: f64, nu: f64, dt: f64, boundary: Boundary) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid(
                "advection–diffusion grid needs n > 0".into(),
            ));
        }
        if !(nu > 0.0) {
            return Err(Error::Invalid(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Invalid("advection velocity must be finite".into()));
        }
        let grid = SpatialGrid2d::unit_square(n, boundary);
        let map = assemble_step(&grid, (cx, cy), nu, dt, boundary);
        Ok(Self {
            grid,
            velocity: (cx, cy),
            nu,
            dt,
            boundary,
            map,
        })
    }

    pub fn from_options(options: &super::ModelOptions) -> Result<Self> {
        Self::new(
            options.n.unwrap_or(Self::DEFAULT_N),
            options.cx.unwrap_or(0.5),
            options.cy.unwrap_or(0.5),
            options.nu.unwrap_or(0.01),
            options.dt.unwrap_or(Self::DEFAULT_DT),
            options.boundary.unwrap_or_default(),
        )
    }

    pub fn grid(&self) -> &SpatialGrid2d {
        &self.grid
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.velocity
    }

    pub fn viscosity(&self) -> f64 {
        self.nu
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn step_matrix(&self) -> &CsrMatrix<f64> {
        &self.map
    }
}

fn assemble_step(
    grid: &SpatialGrid2d,
    (cx, cy): (f64, f64),
    nu: f64,
    dt: f64,
    boundary: Boundary,
) -> CsrMatrix<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (grid.dx, grid.dy);
    let mut coo = CooMatrix::new(grid.len(), grid.len());
    let center = 1.0 - dt * 2.0 * nu * (1.0 / (dx * dx) + 1.0 / (dy * dy));
    let east = dt * (-cx / (2.0 * dx) + nu / (dx * dx));
    let west = dt * (cx / (2.0 * dx) + nu / (dx * dx));
    let north = dt * (-cy / (2.0 * dy) + nu / (dy * dy));
    let south = dt * (cy / (2.0 * dy) + nu / (dy * dy));
    let shift = |i: usize, delta: isize, len: usize| -> Option<usize> {
        let m = i as isize + delta;
        match boundary {
            Boundary::Dirichlet => (0..len as isize).contains(&m).then_some(m as usize),
            Boundary::Periodic => Some(m.rem_euclid(len as isize) as usize),
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let row = grid.index(i, j);
            coo.push(row, row, center);
            for (di, dj, w) in [(1, 0, east), (-1, 0, west), (0, 1, north), (0, -1, south)] {
                let (Some(ii), Some(jj)) = (shift(i, di, nx), shift(j, dj, ny)) else {
                    continue;
                };
                coo.push(row, grid.index(ii, jj), w);
            }
        }
    }
    CsrMatrix::from(&coo)
}

impl ModelSystem for AdvectionDiffusion2d {
    fn name(&self) -> &'static str {
        "advdiff_2d"
    }

    fn state_dim(&self) -> usize {
        self.grid.len()
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn kind(&self) -> ModelKind {
        ModelKind::DiscreteMap { dt: self.dt }
    }

    fn rhs(&self, state: &DVector<f64>, _params: &[f64]) -> DVector<f64> {
        Jacobian::Sparse(self.map.clone()).mul_vec(state)
    }

    fn jac_state(&self, _state: &DVector<f64>, _params: &[f64]) -> Jacobian {
        Jacobian::Sparse(self.map.clone())
    }

    fn jac_param(&self, _state: &DVector<f64>, _params: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.grid.len(), 0)
    }

    fn linear_map(&self) -> Option<Jacobian> {
        Some(Jacobian::Sparse(self.map.clone()))
    }
}
