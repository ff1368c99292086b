//! The time-varying reaction coefficient `λ(t)` and the plant parameters.
//!
//! Built-in profiles expose closed-form derivatives of every order and a
//! closed-form running integral `∫₀ᵗ λ(ξ) dξ`. Tabulated profiles store a
//! finite number of derivatives per knot and refuse requests beyond it.

use crate::error::{invalid, Error, Result};
use crate::numeric::factorial;

/// Default sample times for the sampled Gevrey check: `0, 0.1, …, 10`.
pub fn default_gevrey_samples() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.1).collect()
}

/// Default highest derivative order inspected by [`check_gevrey`].
pub const DEFAULT_GEVREY_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `λ(t) = λ₀`.
    Constant { lambda0: f64 },
    /// `λ(t) = a / (1 + t)`.
    RationalDecay { a: f64 },
    /// `λ(t) = A sin(ω t)`.
    Sinusoid { amplitude: f64, omega: f64 },
    /// Piecewise Taylor data supplied by the user.
    Tabulated(TabulatedProfile),
}

/// Derivative data `λ⁽ᵏ⁾(tᵢ)`, `k = 0..=order`, at increasing knots `tᵢ`
/// starting at 0. Between knots the profile is the Taylor polynomial of the
/// knot at or below `t`, so every derivative up to `order` is consistent
/// with the value.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    knots: Vec<f64>,
    derivatives: Vec<Vec<f64>>,
}

impl TabulatedProfile {
    pub fn new(knots: Vec<f64>, derivatives: Vec<Vec<f64>>) -> Result<Self> {
        if knots.is_empty() || knots.len() != derivatives.len() {
            return Err(invalid(
                "knots",
                "need one derivative row per knot and at least one knot",
            ));
        }
        if knots[0] != 0.0 {
            return Err(invalid("knots", "first knot must be t = 0"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("knots", "knots must be strictly increasing"));
        }
        let width = derivatives[0].len();
        if width == 0 || derivatives.iter().any(|row| row.len() != width) {
            return Err(invalid(
                "derivatives",
                "every knot needs the same non-zero number of derivatives",
            ));
        }
        if derivatives.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("derivatives", "values must be finite"));
        }
        Ok(Self { knots, derivatives })
    }

    /// Highest stored derivative order.
    pub fn order(&self) -> usize {
        self.derivatives[0].len() - 1
    }

    fn segment(&self, t: f64) -> usize {
        self.knots.partition_point(|&k| k <= t).saturating_sub(1)
    }

    fn derivative(&self, n: usize, t: f64) -> Result<f64> {
        let order = self.order();
        if n > order {
            return Err(Error::DerivativeOrder {
                requested: n,
                available: order,
            });
        }
        let i = self.segment(t);
        let dt = t - self.knots[i];
        let row = &self.derivatives[i];
        // Horner on Σ_{k=n}^{order} row[k] dt^{k-n}/(k-n)!
        let mut acc = 0.0;
        for k in (n..=order).rev() {
            acc = acc * dt / ((k - n + 1) as f64) + row[k];
        }
        Ok(acc)
    }

    fn piece_integral(row: &[f64], span: f64) -> f64 {
        row.iter()
            .enumerate()
            .map(|(k, c)| c * span.powi(k as i32 + 1) / factorial(k + 1))
            .sum()
    }

    fn integral(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let mut total = 0.0;
        for j in 0..i {
            total += Self::piece_integral(&self.derivatives[j], self.knots[j + 1] - self.knots[j]);
        }
        total + Self::piece_integral(&self.derivatives[i], t - self.knots[i])
    }

    fn negated(&self) -> Self {
        Self {
            knots: self.knots.clone(),
            derivatives: self
                .derivatives
                .iter()
                .map(|row| row.iter().map(|v| -v).collect())
                .collect(),
        }
    }
}

/// `λ(t)` together with the constant `D` of the growth condition
/// `sup |λ⁽ⁿ⁾(t)| ≤ D^{n+1} n!`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionProfile {
    kind: ProfileKind,
    gevrey_d: f64,
}

impl ReactionProfile {
    pub fn new(kind: ProfileKind, gevrey_d: f64) -> Result<Self> {
        if !(gevrey_d > 0.0 && gevrey_d.is_finite()) {
            return Err(invalid("D", "must be a positive finite number"));
        }
        match &kind {
            ProfileKind::Constant { lambda0 } if !lambda0.is_finite() => {
                return Err(invalid("lambda0", "must be finite"))
            }
            ProfileKind::RationalDecay { a } if !a.is_finite() => return Err(invalid("a", "must be finite")),
            ProfileKind::Sinusoid { amplitude, omega } => {
                if !amplitude.is_finite() {
                    return Err(invalid("amplitude", "must be finite"));
                }
                if !(omega.is_finite() && *omega >= 0.0) {
                    return Err(invalid("omega", "must be finite and non-negative"));
                }
            }
            _ => {}
        }
        Ok(Self { kind, gevrey_d })
    }

    pub fn constant(lambda0: f64, gevrey_d: f64) -> Result<Self> {
        Self::new(ProfileKind::Constant { lambda0 }, gevrey_d)
    }

    pub fn rational_decay(a: f64, gevrey_d: f64) -> Result<Self> {
        Self::new(ProfileKind::RationalDecay { a }, gevrey_d)
    }

    pub fn sinusoid(amplitude: f64, omega: f64, gevrey_d: f64) -> Result<Self> {
        Self::new(ProfileKind::Sinusoid { amplitude, omega }, gevrey_d)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn gevrey_d(&self) -> f64 {
        self.gevrey_d
    }

    /// Same profile with a different growth constant.
    pub fn with_gevrey_d(&self, gevrey_d: f64) -> Result<Self> {
        Self::new(self.kind.clone(), gevrey_d)
    }

    /// Highest derivative order available, `None` when unlimited.
    pub fn max_derivative_order(&self) -> Option<usize> {
        match &self.kind {
            ProfileKind::Tabulated(tab) => Some(tab.order()),
            _ => None,
        }
    }

    /// `λ(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            ProfileKind::Constant { lambda0 } => *lambda0,
            ProfileKind::RationalDecay { a } => a / (1.0 + t),
            ProfileKind::Sinusoid { amplitude, omega } => amplitude * (omega * t).sin(),
            // order 0 is always stored
            ProfileKind::Tabulated(tab) => tab.derivative(0, t).unwrap_or(f64::NAN),
        }
    }

    /// `λ⁽ⁿ⁾(t)`.
    pub fn derivative(&self, n: usize, t: f64) -> Result<f64> {
        match &self.kind {
            ProfileKind::Tabulated(tab) => tab.derivative(n, t),
            _ => Ok(*self.derivatives(n, t)?.last().expect("non-empty")),
        }
    }

    /// `[λ(t), λ'(t), …, λ⁽ⁿ_max⁾(t)]`.
    pub fn derivatives(&self, n_max: usize, t: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n_max + 1);
        match &self.kind {
            ProfileKind::Constant { lambda0 } => {
                out.push(*lambda0);
                out.resize(n_max + 1, 0.0);
            }
            ProfileKind::RationalDecay { a } => {
                let inv = 1.0 / (1.0 + t);
                let mut d = a * inv;
                out.push(d);
                for n in 1..=n_max {
                    d *= -(n as f64) * inv;
                    out.push(d);
                }
            }
            ProfileKind::Sinusoid { amplitude, omega } => {
                let (s, c) = (omega * t).sin_cos();
                let mut scale = *amplitude;
                for n in 0..=n_max {
                    let phase = match n % 4 {
                        0 => s,
                        1 => c,
                        2 => -s,
                        _ => -c,
                    };
                    out.push(scale * phase);
                    scale *= omega;
                }
            }
            ProfileKind::Tabulated(tab) => {
                for n in 0..=n_max {
                    out.push(tab.derivative(n, t)?);
                }
            }
        }
        Ok(out)
    }

    /// `∫₀ᵗ λ(ξ) dξ`.
    pub fn integral(&self, t: f64) -> f64 {
        match &self.kind {
            ProfileKind::Constant { lambda0 } => lambda0 * t,
            ProfileKind::RationalDecay { a } => a * t.ln_1p(),
            ProfileKind::Sinusoid { amplitude, omega } => {
                if *omega == 0.0 {
                    0.0
                } else {
                    // 1 - cos(ωt) = 2 sin²(ωt/2)
                    let h = (0.5 * omega * t).sin();
                    2.0 * amplitude * h * h / omega
                }
            }
            ProfileKind::Tabulated(tab) => tab.integral(t),
        }
    }

    /// The profile `-λ(t)` with the same growth constant.
    pub fn negated(&self) -> Self {
        let kind = match &self.kind {
            ProfileKind::Constant { lambda0 } => ProfileKind::Constant { lambda0: -lambda0 },
            ProfileKind::RationalDecay { a } => ProfileKind::RationalDecay { a: -a },
            ProfileKind::Sinusoid { amplitude, omega } => ProfileKind::Sinusoid {
                amplitude: -amplitude,
                omega: *omega,
            },
            ProfileKind::Tabulated(tab) => ProfileKind::Tabulated(tab.negated()),
        };
        Self {
            kind,
            gevrey_d: self.gevrey_d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevreyReport {
    /// Largest `|λ⁽ⁿ⁾(t)| / (D^{n+1} n!)` over the samples.
    pub max_ratio: f64,
    pub pass: bool,
    /// `(n, t)` where `max_ratio` was attained.
    pub worst: Option<(usize, f64)>,
}

/// Sampled check of `|λ⁽ⁿ⁾(t)| ≤ D^{n+1} n!` for `n ≤ n_max`.
pub fn check_gevrey(profile: &ReactionProfile, n_max: usize, t_samples: &[f64]) -> Result<GevreyReport> {
    if let Some(t) = t_samples.iter().find(|t| !(**t >= 0.0)) {
        return Err(invalid("t_samples", format!("sample time {t} is negative")));
    }
    let d = profile.gevrey_d();
    let mut max_ratio = 0.0_f64;
    let mut worst = None;
    for &t in t_samples {
        let derivs = profile.derivatives(n_max, t)?;
        let mut cap = d;
        for (n, v) in derivs.iter().enumerate() {
            if n > 0 {
                cap *= d * n as f64;
            }
            let ratio = v.abs() / cap;
            if ratio > max_ratio || (worst.is_none() && ratio >= max_ratio) {
                max_ratio = ratio;
                worst = Some((n, t));
            }
        }
    }
    Ok(GevreyReport {
        max_ratio,
        pass: max_ratio <= 1.0,
        worst,
    })
}

/// Diffusivity `ε`, Robin coefficient `q` and the reaction profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    epsilon: f64,
    q: f64,
    profile: ReactionProfile,
}

impl PlantConfig {
    pub fn new(epsilon: f64, q: f64, profile: ReactionProfile) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be a positive finite number"));
        }
        if !q.is_finite() {
            return Err(invalid("q", "must be finite"));
        }
        Ok(Self { epsilon, q, profile })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn profile(&self) -> &ReactionProfile {
        &self.profile
    }

    /// `r(t) = q − λ(t)/(2ε)`, the Robin coefficient of the target system.
    pub fn r(&self, t: f64) -> f64 {
        self.q - self.profile.value(t) / (2.0 * self.epsilon)
    }

    /// `q > (D + ε)/(2ε)`, strict.
    pub fn check_q_margin(&self) -> bool {
        check_q_margin(self)
    }
}

pub fn check_q_margin(config: &PlantConfig) -> bool {
    let eps = config.epsilon();
    config.q() > (config.profile().gevrey_d() + eps) / (2.0 * eps)
}
