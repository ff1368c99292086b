//! Explicit series for the time-varying backstepping kernels.
//!
//! With `s = (x² − y²)/(4ε)` and `cₙ = sⁿ / (n!(n+1)!)`,
//!
//! ```text
//! K(x,y,t) = −(x/2) Σ cₙ F̃⁽ⁿ⁾(t),    F̃⁽ⁿ⁾ = e^{−∫λ} F⁽ⁿ⁾,   F = (λ/ε) e^{∫λ}
//! L(x,y,t) =  (x/2) Σ cₙ G̃⁽ⁿ⁾(t),    G̃⁽ⁿ⁾ = e^{+∫λ} G⁽ⁿ⁾,   G = −(λ/ε) e^{−∫λ}
//! ```
//!
//! The damped coefficients obey
//! `F̃⁽ⁿ⁾ = λ⁽ⁿ⁾/ε + Σ_{m=1}^{n} C(n,m) λ⁽ⁿ⁻ᵐ⁾ F̃⁽ᵐ⁻¹⁾`, so no exponential of the
//! running integral is ever formed on the controller path. `G̃` satisfies the
//! same recurrence with `λ` replaced by `−λ`.

mod verify;

pub use verify::{
    verify_coefficient_bound, verify_kernel_bounds, verify_kernel_pde, BoundCheck, BoundGrid, BoundReport,
    CoefficientBoundReport, PdeResidualReport,
};

use crate::error::{invalid, Error, Result};
use crate::numeric::binomial;
use crate::plant::SpatialGrid;
use crate::profile::{PlantConfig, ReactionProfile};

/// Truncation control for the kernel series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    /// Stop once a term is below `rel_tol × |partial sum|`.
    pub rel_tol: f64,
    /// Hard cap on the number of terms.
    pub max_terms: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            max_terms: 40,
        }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(invalid("rel_tol", "must lie in (0, 1)"));
        }
        if self.max_terms < 4 {
            return Err(invalid("max_terms", "must be at least 4"));
        }
        Ok(())
    }
}

/// Damped coefficients `sign·F̃⁽ⁿ⁾` from the derivative list of `λ`.
///
/// `sign = 1` yields `F̃`, `sign = −1` yields `G̃`.
fn damped_coefficients(lambda_derivs: &[f64], epsilon: f64, sign: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(lambda_derivs.len());
    for n in 0..lambda_derivs.len() {
        let mut acc = lambda_derivs[n] / epsilon;
        for m in 1..=n {
            acc += binomial(n, m) * lambda_derivs[n - m] * out[m - 1];
        }
        out.push(sign * acc);
    }
    out
}

/// Kernel coefficients frozen at one time instant.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    t: f64,
    lambda: f64,
    epsilon: f64,
    cfg: SeriesConfig,
    f_damped: Vec<f64>,
    g_damped: Vec<f64>,
    /// Stored derivative order of a tabulated profile.
    order_limit: Option<usize>,
}

impl KernelSlice {
    pub fn new(profile: &ReactionProfile, epsilon: f64, t: f64, cfg: SeriesConfig) -> Result<Self> {
        cfg.validate()?;
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !t.is_finite() {
            return Err(invalid("t", "must be finite"));
        }
        let wanted = cfg.max_terms + 1;
        let order_limit = profile.max_derivative_order();
        let n_max = order_limit.map_or(wanted, |o| o.min(wanted));
        let lambda_derivs = profile.derivatives(n_max, t)?;
        Ok(Self {
            t,
            lambda: lambda_derivs[0],
            epsilon,
            cfg,
            f_damped: damped_coefficients(&lambda_derivs, epsilon, 1.0),
            g_damped: damped_coefficients(&lambda_derivs, epsilon, -1.0),
            order_limit,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `e^{−∫λ} F⁽ⁿ⁾(t)` for the stored orders.
    pub fn damped_f(&self) -> &[f64] {
        &self.f_damped
    }

    /// `e^{+∫λ} G⁽ⁿ⁾(t)` for the stored orders.
    pub fn damped_g(&self) -> &[f64] {
        &self.g_damped
    }

    fn coeff(&self, table: &[f64], n: usize) -> Result<f64> {
        table.get(n).copied().ok_or(Error::DerivativeOrder {
            requested: n,
            available: self.order_limit.unwrap_or(table.len() - 1),
        })
    }

    /// Sums `Σ_{n ≥ first} weight(n) · coeff(n)` where `weight` is built by
    /// the ratio `weight(n)/weight(n−1) = ratio(n)`.
    fn series(
        &self,
        first: usize,
        first_weight: f64,
        ratio: impl Fn(usize) -> f64,
        coeff: impl Fn(usize) -> Result<f64>,
    ) -> Result<f64> {
        let mut sum = 0.0;
        let mut weight = first_weight;
        let mut quiet = 0;
        for n in first..first + self.cfg.max_terms {
            if n > first {
                weight *= ratio(n);
            }
            if weight == 0.0 {
                break;
            }
            let term = weight * coeff(n)?;
            sum += term;
            if term.abs() <= self.cfg.rel_tol * sum.abs() {
                quiet += 1;
                if quiet == 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        Ok(sum)
    }

    fn s(&self, x: f64, y: f64) -> f64 {
        (x * x - y * y) / (4.0 * self.epsilon)
    }

    /// `Σ cₙ · table⁽ⁿ⁾`.
    fn c_series(&self, s: f64, table: &[f64]) -> Result<f64> {
        self.series(0, 1.0, |n| s / (n * (n + 1)) as f64, |n| self.coeff(table, n))
    }

    /// `Σ_{n≥1} sⁿ⁻¹/((n−1)!(n+1)!) · table⁽ⁿ⁾`.
    fn e_series(&self, s: f64, table: &[f64]) -> Result<f64> {
        self.series(1, 0.5, |n| s / ((n - 1) * (n + 1)) as f64, |n| self.coeff(table, n))
    }

    fn check_domain(&self, x: f64, y: f64) -> Result<()> {
        const SLACK: f64 = 1e-12;
        let ok = x.is_finite() && y.is_finite() && y >= -SLACK && y <= x + SLACK && x <= 1.0 + SLACK && self.t >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { x, y, t: self.t })
        }
    }

    pub(crate) fn k_unchecked(&self, x: f64, y: f64) -> Result<f64> {
        Ok(-0.5 * x * self.c_series(self.s(x, y), &self.f_damped)?)
    }

    pub(crate) fn k_x_unchecked(&self, x: f64, y: f64) -> Result<f64> {
        let s = self.s(x, y);
        let first = self.c_series(s, &self.f_damped)?;
        let second = self.e_series(s, &self.f_damped)?;
        Ok(-0.5 * first - x * x / (4.0 * self.epsilon) * second)
    }

    pub(crate) fn k_t_unchecked(&self, x: f64, y: f64) -> Result<f64> {
        let s = self.s(x, y);
        let lam = self.lambda;
        let sum = self.series(
            0,
            1.0,
            |n| s / (n * (n + 1)) as f64,
            |n| Ok(self.coeff(&self.f_damped, n + 1)? - lam * self.coeff(&self.f_damped, n)?),
        )?;
        Ok(-0.5 * x * sum)
    }

    pub(crate) fn l_unchecked(&self, x: f64, y: f64) -> Result<f64> {
        Ok(0.5 * x * self.c_series(self.s(x, y), &self.g_damped)?)
    }

    /// `K(x, y, t)`.
    pub fn k(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x, y)?;
        self.k_unchecked(x, y)
    }

    /// `∂K/∂x (x, y, t)`, from the term-wise differentiated series.
    pub fn k_x(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x, y)?;
        self.k_x_unchecked(x, y)
    }

    /// `∂K/∂t (x, y, t)`.
    pub fn k_t(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x, y)?;
        self.k_t_unchecked(x, y)
    }

    /// `L(x, y, t)`, the inverse-transform kernel.
    pub fn l(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x, y)?;
        self.l_unchecked(x, y)
    }
}

/// `[F(t), F'(t), …, F⁽ⁿ_max⁾(t)]` with `F = (λ/ε) e^{∫₀ᵗ λ}`.
pub fn f_derivatives(profile: &ReactionProfile, epsilon: f64, t: f64, n_max: usize) -> Result<Vec<f64>> {
    scaled_derivatives(profile, epsilon, t, n_max, 1.0)
}

/// `[G(t), …, G⁽ⁿ_max⁾(t)]` with `G = −(λ/ε) e^{−∫₀ᵗ λ}`.
pub fn g_derivatives(profile: &ReactionProfile, epsilon: f64, t: f64, n_max: usize) -> Result<Vec<f64>> {
    scaled_derivatives(profile, epsilon, t, n_max, -1.0)
}

fn scaled_derivatives(profile: &ReactionProfile, epsilon: f64, t: f64, n_max: usize, sign: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let lambda_derivs = profile.derivatives(n_max, t)?;
    let scale = (sign * profile.integral(t)).exp();
    Ok(damped_coefficients(&lambda_derivs, epsilon, sign)
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

pub fn kernel_k(x: f64, y: f64, t: f64, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<f64> {
    KernelSlice::new(profile, epsilon, t, cfg)?.k(x, y)
}

pub fn kernel_k_x(x: f64, y: f64, t: f64, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<f64> {
    KernelSlice::new(profile, epsilon, t, cfg)?.k_x(x, y)
}

pub fn kernel_k_t(x: f64, y: f64, t: f64, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<f64> {
    KernelSlice::new(profile, epsilon, t, cfg)?.k_t(x, y)
}

pub fn kernel_l(x: f64, y: f64, t: f64, profile: &ReactionProfile, epsilon: f64, cfg: SeriesConfig) -> Result<f64> {
    KernelSlice::new(profile, epsilon, t, cfg)?.l(x, y)
}

/// Feedback gain `k(y,t) = r(t) K(1,y,t) + K_x(1,y,t)` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    pub t: f64,
    pub y: Vec<f64>,
    pub k1: Vec<f64>,
    pub k1x: Vec<f64>,
    pub gain: Vec<f64>,
    /// `r(t) = q − λ(t)/(2ε)`.
    pub r: f64,
}

/// Builds the gain field at time `t` on the nodes of `grid`.
pub fn build_gain(t: f64, grid: &SpatialGrid, config: &PlantConfig, cfg: SeriesConfig) -> Result<KernelField> {
    let slice = KernelSlice::new(config.profile(), config.epsilon(), t, cfg)?;
    build_gain_from_slice(&slice, grid, config.q())
}

pub(crate) fn build_gain_from_slice(slice: &KernelSlice, grid: &SpatialGrid, q: f64) -> Result<KernelField> {
    let r = q - slice.lambda() / (2.0 * slice.epsilon());
    let y = grid.nodes();
    let mut k1 = Vec::with_capacity(y.len());
    let mut k1x = Vec::with_capacity(y.len());
    let mut gain = Vec::with_capacity(y.len());
    for &yj in &y {
        let kv = slice.k(1.0, yj)?;
        let kx = slice.k_x(1.0, yj)?;
        k1.push(kv);
        k1x.push(kx);
        gain.push(r * kv + kx);
    }
    Ok(KernelField {
        t: slice.t(),
        y,
        k1,
        k1x,
        gain,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::TabulatedProfile;
    use crate::ProfileKind;

    const EPS: f64 = 1.0;

    fn reference_profile() -> ReactionProfile {
        ReactionProfile::rational_decay(3.0, 3.0).unwrap()
    }

    #[test]
    fn f_derivatives_rational_decay() {
        let f = f_derivatives(&reference_profile(), EPS, 0.0, 3).unwrap();
        let expected = [3.0, 6.0, 6.0, 0.0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn f_and_g_derivatives_constant() {
        let l0: f64 = 0.7;
        let eps = 0.5;
        let p = ReactionProfile::constant(l0, 1.0).unwrap();
        let t = 1.3;
        let f = f_derivatives(&p, eps, t, 5).unwrap();
        let g = g_derivatives(&p, eps, t, 5).unwrap();
        for n in 0..=5 {
            let fe = (l0 / eps) * l0.powi(n as i32) * (l0 * t).exp();
            let ge = -(l0 / eps) * (-l0).powi(n as i32) * (-l0 * t).exp();
            assert!((f[n] - fe).abs() < 1e-12 * fe.abs().max(1.0));
            assert!((g[n] - ge).abs() < 1e-12 * ge.abs().max(1.0));
        }
        let zero = ReactionProfile::constant(0.0, 1.0).unwrap();
        assert!(f_derivatives(&zero, eps, t, 4).unwrap().iter().all(|v| *v == 0.0));
        assert!(g_derivatives(&zero, eps, t, 4).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn g_derivative_rational_decay() {
        let g = g_derivatives(&reference_profile(), EPS, 0.0, 1).unwrap();
        assert!((g[0] + 3.0).abs() < 1e-12);
        assert!((g[1] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_value() {
        let p = ReactionProfile::sinusoid(2.0, 1.5, 3.0).unwrap();
        for t in [0.0, 0.4, 2.2] {
            let slice = KernelSlice::new(&p, 0.8, t, SeriesConfig::default()).unwrap();
            for x in [0.0, 0.3, 1.0] {
                let k = slice.k(x, x).unwrap();
                assert!((k + p.value(t) * x / 1.6).abs() < 1e-15);
                let l = slice.l(x, x).unwrap();
                assert!((l + p.value(t) * x / 1.6).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn domain_errors() {
        let slice = KernelSlice::new(&reference_profile(), EPS, 0.0, SeriesConfig::default()).unwrap();
        assert!(matches!(slice.k(0.5, 0.7), Err(Error::Domain { .. })));
        assert!(matches!(slice.k(1.2, 0.1), Err(Error::Domain { .. })));
        assert!(matches!(slice.k_x(0.5, -0.1), Err(Error::Domain { .. })));
        let neg = KernelSlice::new(&reference_profile(), EPS, -0.5, SeriesConfig::default()).unwrap();
        assert!(matches!(neg.k(0.5, 0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn zero_profile_gives_zero_kernels_and_gain() {
        let zero = ReactionProfile::constant(0.0, 1.0).unwrap();
        let cfg = PlantConfig::new(1.0, 2.0, zero).unwrap();
        let field = build_gain(0.5, &SpatialGrid::new(16).unwrap(), &cfg, SeriesConfig::default()).unwrap();
        assert!(field.gain.iter().all(|g| *g == 0.0));
        assert_eq!(field.r, 2.0);
        let slice = KernelSlice::new(cfg.profile(), 1.0, 0.5, SeriesConfig::default()).unwrap();
        assert_eq!(slice.k_x(0.7, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn reference_gain_r_at_zero() {
        let cfg = PlantConfig::new(1.0, 3.0, reference_profile()).unwrap();
        let field = build_gain(0.0, &SpatialGrid::new(20).unwrap(), &cfg, SeriesConfig::default()).unwrap();
        assert_eq!(field.r, 1.5);
        for i in 0..field.y.len() {
            assert_eq!(field.gain[i], field.r * field.k1[i] + field.k1x[i]);
        }
    }

    #[test]
    fn tabulated_profile_fails_loudly_off_diagonal() {
        let tab = TabulatedProfile::new(vec![0.0], vec![vec![1.0, 0.5]]).unwrap();
        let p = ReactionProfile::new(ProfileKind::Tabulated(tab), 2.0).unwrap();
        let slice = KernelSlice::new(&p, 1.0, 0.3, SeriesConfig::default()).unwrap();
        assert!(slice.k(0.5, 0.5).is_ok());
        assert!(matches!(
            slice.k(0.9, 0.1),
            Err(Error::DerivativeOrder { available: 1, .. })
        ));
    }

    #[test]
    fn extra_terms_do_not_move_the_sum() {
        let p = ReactionProfile::sinusoid(2.5, 2.0, 3.0).unwrap();
        let base = SeriesConfig::default();
        let slice = KernelSlice::new(&p, 0.6, 0.9, base).unwrap();
        let v = slice.k(1.0, 0.1).unwrap();
        // reference with the truncation rule effectively disabled
        let wide = SeriesConfig {
            rel_tol: 1e-300,
            max_terms: 60,
        };
        let full = KernelSlice::new(&p, 0.6, 0.9, wide).unwrap().k(1.0, 0.1).unwrap();
        assert!((v - full).abs() <= 10.0 * base.rel_tol * full.abs());
    }
}
