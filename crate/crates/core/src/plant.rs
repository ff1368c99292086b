//! Crank–Nicolson integration of `u_t = ε u_xx + λ(t) u` with
//! `u_x(0,t) = 0` and the held Robin input `u_x(1,t) + q u(1,t) = U`.
//!
//! Both boundary conditions are imposed with ghost nodes,
//! `u₋₁ = u₁` and `u_{N+1} = u_{N−1} + 2h(U − q u_N)`, eliminated into the
//! tridiagonal system. The resulting operator is symmetric in the
//! trapezoid-weighted inner product used by [`l2_norm`].

use crate::error::{invalid, Error, Result};
use crate::numeric::{solve_tridiagonal, trapezoid};
use crate::profile::PlantConfig;

/// Uniform grid `xᵢ = i/N`, `i = 0..=N` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialGrid {
    n_cells: usize,
}

impl SpatialGrid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < Self::MIN_CELLS {
            return Err(invalid("n_cells", format!("must be at least {}", Self::MIN_CELLS)));
        }
        Ok(Self { n_cells })
    }

    /// Grid matching a nodal vector of the given length.
    pub fn for_len(len: usize) -> Result<Self> {
        Self::new(len.saturating_sub(1))
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.x(i)).collect()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_nodes() {
            return Err(Error::GridMismatch {
                expected: self.n_nodes(),
                found: len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub u: Vec<f64>,
    pub t: f64,
}

impl PlantState {
    pub fn new(u: Vec<f64>, t: f64) -> Result<Self> {
        SpatialGrid::for_len(u.len())?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(Self { u, t })
    }

    pub fn from_fn(grid: &SpatialGrid, t: f64, f: impl Fn(f64) -> f64) -> Self {
        Self {
            u: grid.nodes().into_iter().map(f).collect(),
            t,
        }
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::for_len(self.u.len()).expect("state built with a valid grid")
    }

    /// `u(1, t)`.
    pub fn boundary(&self) -> f64 {
        *self.u.last().expect("non-empty state")
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.u)
    }
}

/// Trapezoid approximation of `(∫₀¹ |f|²)^{1/2}` from nodal values.
pub fn l2_norm(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let h = 1.0 / (values.len() - 1) as f64;
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    trapezoid(&sq, h).sqrt()
}

/// One Crank–Nicolson step with the input `u_held` held over `[t, t+dt]`.
pub fn step(state: &PlantState, dt: f64, config: &PlantConfig, u_held: f64) -> Result<PlantState> {
    step_with_forcing(state, dt, config, (u_held, u_held), None)
}

/// Crank–Nicolson step with a boundary input that may differ at the two
/// ends of the step and an optional distributed source `s(x, t)`.
///
/// This is the verification hook used for manufactured solutions; the
/// closed loop only ever calls [`step`].
pub fn step_with_forcing(
    state: &PlantState,
    dt: f64,
    config: &PlantConfig,
    boundary: (f64, f64),
    source: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<PlantState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    let grid = SpatialGrid::for_len(state.u.len())?;
    let n = grid.n_nodes();
    let last = n - 1;
    let h = grid.h();
    let eps = config.epsilon();
    let q = config.q();
    let t = state.t;
    let lam = config.profile().value(t + 0.5 * dt);

    // Off-diagonals and diagonal of εA + λ.
    let side = eps / (h * h);
    let mut lower = vec![side; n];
    let mut upper = vec![side; n];
    let mut diag = vec![lam - 2.0 * side; n];
    upper[0] = 2.0 * side;
    lower[last] = 2.0 * side;
    diag[last] -= 2.0 * h * q * side;
    lower[0] = 0.0;
    upper[last] = 0.0;

    let half = 0.5 * dt;
    let u = &state.u;
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let mut applied = diag[i] * u[i];
        if i > 0 {
            applied += lower[i] * u[i - 1];
        }
        if i < last {
            applied += upper[i] * u[i + 1];
        }
        rhs[i] = u[i] + half * applied;
    }
    rhs[last] += dt * eps * (2.0 / h) * 0.5 * (boundary.0 + boundary.1);
    if let Some(src) = source {
        for (i, r) in rhs.iter_mut().enumerate() {
            let x = grid.x(i);
            *r += half * (src(x, t) + src(x, t + dt));
        }
    }

    let sys_lower: Vec<f64> = lower.iter().map(|v| -half * v).collect();
    let sys_upper: Vec<f64> = upper.iter().map(|v| -half * v).collect();
    let sys_diag: Vec<f64> = diag.iter().map(|v| 1.0 - half * v).collect();
    let next = solve_tridiagonal(&sys_lower, &sys_diag, &sys_upper, &rhs)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t + dt });
    }
    Ok(PlantState { u: next, t: t + dt })
}

/// Boundary-condition residuals `|u_x(0)|` and `|u_x(1) + q u(1) − U|`
/// with one-sided second-order stencils.
pub fn boundary_residuals(u: &[f64], q: f64, u_held: f64) -> (f64, f64) {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let left = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    let right = (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h);
    (left.abs(), (right + q * u[n] - u_held).abs())
}
