//! Certification of the kernel series: PDE residuals by finite-difference
//! probing and the analytic magnitude bounds on `K`, its derivatives, `L`
//! and the `F⁽ⁿ⁾` coefficients.

use serde::Serialize;

use super::{KernelSlice, SeriesConfig};
use crate::error::Result;
use crate::numeric::factorial;
use crate::profile::ReactionProfile;

/// Residuals of the kernel PDEs at two resolutions.
#[derive(Debug, Clone, Serialize)]
pub struct PdeResidualReport {
    pub grid_h: f64,
    pub dt: f64,
    /// `max |K_t − εK_xx + εK_yy + λK|` at `(h, dt)`.
    pub k_coarse: f64,
    /// Same at `(h/2, dt/2)`.
    pub k_fine: f64,
    pub k_ratio: Option<f64>,
    /// `max |L_t − εL_xx + εL_yy − λL|`.
    pub l_coarse: f64,
    pub l_fine: f64,
    pub l_ratio: Option<f64>,
    /// `max |K(x,x,t) + λx/(2ε)|` and `max |K_y(x,0,t)|` over the samples.
    pub boundary_max: f64,
    pub samples: usize,
}

const PDE_X: [f64; 6] = [0.2, 0.35, 0.5, 0.65, 0.8, 0.95];
const PDE_Y_FRACTION: [f64; 3] = [0.15, 0.5, 0.85];
const PDE_T: [f64; 3] = [0.25, 1.0, 2.5];

fn ratio(coarse: f64, fine: f64) -> Option<f64> {
    (fine > 0.0 && coarse > 0.0).then(|| coarse / fine)
}

struct Residuals {
    k: f64,
    l: f64,
    boundary: f64,
}

fn pde_residuals(profile: &ReactionProfile, epsilon: f64, h: f64, dt: f64, cfg: SeriesConfig) -> Result<Residuals> {
    let mut out = Residuals {
        k: 0.0,
        l: 0.0,
        boundary: 0.0,
    };
    for &t in &PDE_T {
        let now = KernelSlice::new(profile, epsilon, t, cfg)?;
        let later = KernelSlice::new(profile, epsilon, t + dt, cfg)?;
        let earlier = KernelSlice::new(profile, epsilon, t - dt, cfg)?;
        let lam = now.lambda();
        for &x in &PDE_X {
            for &frac in &PDE_Y_FRACTION {
                let y = frac * x;
                let k = |s: &KernelSlice, x: f64, y: f64| s.k_unchecked(x, y);
                let l = |s: &KernelSlice, x: f64, y: f64| s.l_unchecked(x, y);

                let k0 = k(&now, x, y)?;
                let k_t = (k(&later, x, y)? - k(&earlier, x, y)?) / (2.0 * dt);
                let k_xx = (k(&now, x + h, y)? - 2.0 * k0 + k(&now, x - h, y)?) / (h * h);
                let k_yy = (k(&now, x, y + h)? - 2.0 * k0 + k(&now, x, y - h)?) / (h * h);
                out.k = out.k.max((k_t - epsilon * k_xx + epsilon * k_yy + lam * k0).abs());

                let l0 = l(&now, x, y)?;
                let l_t = (l(&later, x, y)? - l(&earlier, x, y)?) / (2.0 * dt);
                let l_xx = (l(&now, x + h, y)? - 2.0 * l0 + l(&now, x - h, y)?) / (h * h);
                let l_yy = (l(&now, x, y + h)? - 2.0 * l0 + l(&now, x, y - h)?) / (h * h);
                out.l = out.l.max((l_t - epsilon * l_xx + epsilon * l_yy - lam * l0).abs());
            }
            let diag = (now.k(x, x)? + lam * x / (2.0 * epsilon)).abs();
            let k_y0 = ((now.k_unchecked(x, h)? - now.k_unchecked(x, -h)?) / (2.0 * h)).abs();
            out.boundary = out.boundary.max(diag).max(k_y0);
        }
    }
    Ok(out)
}

/// Probes the kernel PDEs with central differences at `(grid_h, dt)` and at
/// half of both steps. For a consistent series the residual is pure
/// truncation error, so the ratio should sit near 4.
pub fn verify_kernel_pde(
    profile: &ReactionProfile,
    epsilon: f64,
    grid_h: f64,
    dt: f64,
    cfg: SeriesConfig,
) -> Result<PdeResidualReport> {
    let coarse = pde_residuals(profile, epsilon, grid_h, dt, cfg)?;
    let fine = pde_residuals(profile, epsilon, grid_h / 2.0, dt / 2.0, cfg)?;
    Ok(PdeResidualReport {
        grid_h,
        dt,
        k_coarse: coarse.k,
        k_fine: fine.k,
        k_ratio: ratio(coarse.k, fine.k),
        l_coarse: coarse.l,
        l_fine: fine.l,
        l_ratio: ratio(coarse.l, fine.l),
        boundary_max: coarse.boundary.max(fine.boundary),
        samples: PDE_X.len() * PDE_Y_FRACTION.len() * PDE_T.len(),
    })
}

/// Sample set for the bound certification.
#[derive(Debug, Clone)]
pub struct BoundGrid {
    /// Points per axis; the triangle gets `n(n+1)/2` samples.
    pub points_per_axis: usize,
    pub t_samples: Vec<f64>,
    /// Step used for the finite-difference derivatives.
    pub fd_step: f64,
}

impl Default for BoundGrid {
    fn default() -> Self {
        Self {
            points_per_axis: 21,
            t_samples: (0..=20).map(|i| i as f64 * 0.25).collect(),
            fd_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub max_observed: f64,
    pub cap: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
    pub samples: usize,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

/// Analytic caps on the kernel and its derivatives, in the order
/// `K, K_t, K_x, K_xt, K_xy, K_y, K_yy, K_xyy, L`.
pub fn kernel_bound_caps(d: f64, epsilon: f64) -> [(&'static str, f64); 9] {
    let e = (d / (4.0 * epsilon)).exp();
    let a = d / epsilon;
    let c2 = d * d / (4.0 * epsilon * epsilon);
    [
        ("|K|", d / (2.0 * epsilon) * e),
        ("|K_t|", d * d / (2.0 * epsilon) * (3.0 + a / 4.0) * e),
        ("|K_x|", d / (2.0 * epsilon) * (1.0 + a / 2.0) * e),
        ("|K_xt|", d * d / epsilon * (1.5 + 9.0 * a / 8.0 + a * a / 16.0) * e),
        ("|K_xy|", c2 * (1.0 + a / 2.0) * e),
        ("|K_y|", c2 * e),
        ("|K_yy|", c2 * (1.0 + a / 2.0) * e),
        ("|K_xyy|", c2 * (1.0 + a / 2.0 + a * a / 4.0) * e),
        ("|L|", d / (2.0 * epsilon) * e),
    ]
}

/// Checks the magnitude bounds on `K` and its derivatives (series-analytic
/// `K`, `K_t`, `K_x`; finite-difference `K_y`, `K_xy`, `K_yy`, `K_xyy`,
/// `K_xt`) and on `L` over the sampled triangle. Failures are reported, not
/// raised.
pub fn verify_kernel_bounds(
    profile: &ReactionProfile,
    epsilon: f64,
    grid: &BoundGrid,
    cfg: SeriesConfig,
) -> Result<BoundReport> {
    let caps = kernel_bound_caps(profile.gevrey_d(), epsilon);
    let mut observed = [0.0_f64; 9];
    let n = grid.points_per_axis.max(2);
    let h = grid.fd_step;
    let mut samples = 0;
    for &t in &grid.t_samples {
        let now = KernelSlice::new(profile, epsilon, t, cfg)?;
        // central in t when possible, otherwise one-sided second order
        let k_xt_at: Box<dyn Fn(f64, f64) -> Result<f64>> = if t >= h {
            let later = KernelSlice::new(profile, epsilon, t + h, cfg)?;
            let earlier = KernelSlice::new(profile, epsilon, t - h, cfg)?;
            Box::new(move |x, y| Ok((later.k_x_unchecked(x, y)? - earlier.k_x_unchecked(x, y)?) / (2.0 * h)))
        } else {
            let s1 = KernelSlice::new(profile, epsilon, t + h, cfg)?;
            let s2 = KernelSlice::new(profile, epsilon, t + 2.0 * h, cfg)?;
            let s0 = now.clone();
            Box::new(move |x, y| {
                Ok(
                    (-3.0 * s0.k_x_unchecked(x, y)? + 4.0 * s1.k_x_unchecked(x, y)? - s2.k_x_unchecked(x, y)?)
                        / (2.0 * h),
                )
            })
        };
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            for j in 0..=i {
                let y = j as f64 / (n - 1) as f64;
                samples += 1;
                let k = now.k(x, y)?;
                let k_t = now.k_t(x, y)?;
                let k_x = now.k_x(x, y)?;
                let k_xt = k_xt_at(x, y)?;
                let (kp, km) = (now.k_unchecked(x, y + h)?, now.k_unchecked(x, y - h)?);
                let (kxp, kxm) = (now.k_x_unchecked(x, y + h)?, now.k_x_unchecked(x, y - h)?);
                let k_y = (kp - km) / (2.0 * h);
                let k_xy = (kxp - kxm) / (2.0 * h);
                let k_yy = (kp - 2.0 * k + km) / (h * h);
                let k_xyy = (kxp - 2.0 * k_x + kxm) / (h * h);
                let l = now.l(x, y)?;
                let vals = [k, k_t, k_x, k_xt, k_xy, k_y, k_yy, k_xyy, l];
                for (o, v) in observed.iter_mut().zip(vals) {
                    *o = o.max(v.abs());
                }
            }
        }
    }
    let checks = caps
        .iter()
        .zip(observed)
        .map(|(&(name, cap), max_observed)| BoundCheck {
            name,
            max_observed,
            cap,
            margin: cap - max_observed,
            pass: max_observed <= cap,
        })
        .collect();
    Ok(BoundReport { checks, samples })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientBoundReport {
    /// Largest `|F⁽ⁿ⁾(t)| / ((n+1)! D^{n+1} ε⁻¹ e^{∫λ})`.
    pub max_ratio: f64,
    pub pass: bool,
    pub worst: Option<(usize, f64)>,
}

/// Relative slack allowed on the `F⁽ⁿ⁾` bound for roundoff.
pub const COEFFICIENT_BOUND_SLACK: f64 = 1e-9;

/// Checks `|F⁽ⁿ⁾(t)| ≤ (n+1)! D^{n+1} ε⁻¹ e^{∫₀ᵗλ}` for `n ≤ n_max`.
///
/// Both sides carry the factor `e^{∫λ}`, so the comparison is made on the
/// damped coefficients.
pub fn verify_coefficient_bound(
    profile: &ReactionProfile,
    epsilon: f64,
    n_max: usize,
    t_samples: &[f64],
) -> Result<CoefficientBoundReport> {
    let d = profile.gevrey_d();
    let mut max_ratio = 0.0_f64;
    let mut worst = None;
    for &t in t_samples {
        let derivs = profile.derivatives(n_max, t)?;
        let damped = super::damped_coefficients(&derivs, epsilon, 1.0);
        for (n, v) in damped.iter().enumerate() {
            let cap = factorial(n + 1) * d.powi(n as i32 + 1) / epsilon;
            let r = v.abs() / cap;
            if r > max_ratio || worst.is_none() {
                max_ratio = max_ratio.max(r);
                worst = Some((n, t));
            }
        }
    }
    Ok(CoefficientBoundReport {
        max_ratio,
        pass: max_ratio <= 1.0 + COEFFICIENT_BOUND_SLACK,
        worst,
    })
}
