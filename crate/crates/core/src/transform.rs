//! Forward and inverse backstepping transforms
//!
//! ```text
//! w(x,t) = u(x,t) − ∫₀ˣ K(x,y,t) u(y,t) dy
//! u(x,t) = w(x,t) + ∫₀ˣ L(x,y,t) w(y,t) dy
//! ```
//!
//! discretised with the trapezoid rule on the plant grid.

use serde::Serialize;

use crate::error::Result;
use crate::kernel::{KernelSlice, SeriesConfig};
use crate::numeric::trapezoid;
use crate::plant::{PlantState, SpatialGrid};
use crate::profile::{PlantConfig, ReactionProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub w: Vec<f64>,
    pub t: f64,
}

/// `K(xᵢ, yⱼ, t)` and `L(xᵢ, yⱼ, t)` for `j ≤ i` at one time instant.
#[derive(Debug, Clone)]
pub struct VolterraTables {
    t: f64,
    grid: SpatialGrid,
    k: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
}

impl VolterraTables {
    pub fn new(t: f64, grid: SpatialGrid, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<Self> {
        let slice = KernelSlice::new(profile, epsilon, t, cfg)?;
        Self::from_slice(&slice, grid)
    }

    pub fn from_slice(slice: &KernelSlice, grid: SpatialGrid) -> Result<Self> {
        let n = grid.n_nodes();
        let mut k = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for i in 0..n {
            let x = grid.x(i);
            let mut krow = Vec::with_capacity(i + 1);
            let mut lrow = Vec::with_capacity(i + 1);
            for j in 0..=i {
                let y = grid.x(j);
                krow.push(slice.k(x, y)?);
                lrow.push(slice.l(x, y)?);
            }
            k.push(krow);
            l.push(lrow);
        }
        Ok(Self {
            t: slice.t(),
            grid,
            k,
            l,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    fn apply(&self, table: &[Vec<f64>], v: &[f64], sign: f64) -> Result<Vec<f64>> {
        self.grid.check_len(v.len())?;
        let h = self.grid.h();
        let mut scratch = Vec::with_capacity(v.len());
        Ok(v.iter()
            .enumerate()
            .map(|(i, vi)| {
                scratch.clear();
                scratch.extend(table[i].iter().zip(&v[..=i]).map(|(kern, val)| kern * val));
                vi + sign * trapezoid(&scratch, h)
            })
            .collect())
    }

    /// `w = u − ∫ K u`.
    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.apply(&self.k, u, -1.0)
    }

    /// `u = w + ∫ L w`.
    pub fn inverse(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.apply(&self.l, w, 1.0)
    }
}

pub fn to_target(u: &PlantState, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<TargetState> {
    let grid = SpatialGrid::for_len(u.u.len())?;
    let tables = VolterraTables::new(u.t, grid, profile, epsilon, cfg)?;
    Ok(TargetState {
        w: tables.forward(&u.u)?,
        t: u.t,
    })
}

pub fn from_target(w: &TargetState, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<PlantState> {
    let grid = SpatialGrid::for_len(w.w.len())?;
    let tables = VolterraTables::new(w.t, grid, profile, epsilon, cfg)?;
    Ok(PlantState {
        u: tables.inverse(&w.w)?,
        t: w.t,
    })
}

/// `1 + (D/2ε) e^{D/4ε}`, the norm-equivalence constant between `u` and `w`.
pub fn norm_equivalence_constant(config: &PlantConfig) -> f64 {
    let d = config.profile().gevrey_d();
    let eps = config.epsilon();
    1.0 + d / (2.0 * eps) * (d / (4.0 * eps)).exp()
}

/// One stored target-system sample.
#[derive(Debug, Clone)]
pub struct TargetSample {
    pub t: f64,
    pub w: Vec<f64>,
    /// `r(t)`.
    pub r: f64,
    /// Holding deviation `d(t)`.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TargetResidualReport {
    /// `max |w_x(1,t) + r(t) w(1,t) − d(t)|`.
    pub boundary_max: f64,
    /// `max |w_t − ε w_xx|` over interior nodes, central differences.
    pub interior_max: f64,
    pub samples: usize,
}

impl TargetResidualReport {
    /// `(boundary, interior)` ratios of a coarse report to a refined one.
    pub fn refinement_ratios(&self, fine: &Self) -> (f64, f64) {
        (
            self.boundary_max / fine.boundary_max,
            self.interior_max / fine.interior_max,
        )
    }
}

/// Residuals of the perturbed target system along a window of consecutive,
/// equally spaced samples.
pub fn target_residuals(samples: &[TargetSample], epsilon: f64) -> TargetResidualReport {
    let mut boundary_max = 0.0_f64;
    let mut interior_max = 0.0_f64;
    for s in samples {
        let n = s.w.len() - 1;
        let h = 1.0 / n as f64;
        let w_x = (3.0 * s.w[n] - 4.0 * s.w[n - 1] + s.w[n - 2]) / (2.0 * h);
        boundary_max = boundary_max.max((w_x + s.r * s.w[n] - s.d).abs());
    }
    for win in samples.windows(3) {
        let (a, b, c) = (&win[0], &win[1], &win[2]);
        let dt = 0.5 * (c.t - a.t);
        let n = b.w.len() - 1;
        let h = 1.0 / n as f64;
        for i in 1..n {
            let w_t = (c.w[i] - a.w[i]) / (2.0 * dt);
            let w_xx = (b.w[i - 1] - 2.0 * b.w[i] + b.w[i + 1]) / (h * h);
            interior_max = interior_max.max((w_t - epsilon * w_xx).abs());
        }
    }
    TargetResidualReport {
        boundary_max,
        interior_max,
        samples: samples.len(),
    }
}
