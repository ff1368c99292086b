//! Dynamic event trigger and the offline synthesis of its parameters.
//!
//! Events fire when `d²(t) > γ m(t)`, where `d` is the input holding error and
//! `m` follows
//!
//! ```text
//! ṁ = −η m − ρ d² + β₁ ‖u‖² + β₂ u(1,t)²,   m(0) > 0,
//! ```
//!
//! continuous across events.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernel::KernelField;
use crate::numeric::{compensated_sum, trapezoid};
use crate::plant::PlantState;
use crate::profile::PlantConfig;

pub const DEFAULT_KAPPA: f64 = 2.0;
/// `B = (1 + B_MARGIN) · B_min` when `B` is not supplied.
pub const B_MARGIN: f64 = 1e-3;

/// Designer-chosen inputs of the synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisInputs {
    pub gamma: f64,
    pub eta: f64,
    pub sigma: f64,
    pub kappa: Option<f64>,
    pub b: Option<f64>,
}

impl SynthesisInputs {
    pub fn new(gamma: f64, eta: f64, sigma: f64) -> Self {
        Self {
            gamma,
            eta,
            sigma,
            kappa: None,
            b: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(invalid("sigma", "must lie in (0, 1)"));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(invalid("kappa", "must be positive"));
            }
        }
        if let Some(b) = self.b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("B", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub inputs: SynthesisInputs,
    pub rho1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Smallest `B` meeting the feasibility inequality for the chosen `κ`.
    #[serde(rename = "B_min")]
    pub b_min: Option<f64>,
    pub kappa: f64,
    pub rho: f64,
    pub b1: f64,
    pub b2: f64,
    pub varrho: f64,
    /// Left side of the `B, κ` feasibility inequality.
    pub feasibility_lhs: f64,
    /// `q > (D + ε)/(2ε)`.
    pub q_margin: bool,
    pub feasible: bool,
    pub diagnostics: Vec<String>,
}

impl SynthesisReport {
    /// Trigger parameters for a run, available only for feasible designs.
    pub fn trigger_params(&self, m0: f64) -> Result<TriggerParams> {
        if !self.feasible {
            return Err(invalid("synthesis", "design is infeasible"));
        }
        TriggerParams::new(
            self.inputs.gamma,
            self.inputs.eta,
            self.rho,
            self.beta1,
            self.beta2,
            self.inputs.sigma,
            m0,
        )
    }
}

/// Evaluates `ρ₁, α₁, α₂`, the `β`'s, `ρ`, `b₁, b₂, ϱ` and the feasibility of
/// `(B, κ)`. Infeasible designs are reported, not raised.
pub fn synthesize(config: &PlantConfig, inputs: &SynthesisInputs) -> Result<SynthesisReport> {
    inputs.validate()?;
    let eps = config.epsilon();
    let q = config.q();
    let d = config.profile().gevrey_d();
    let mut diagnostics = Vec::new();

    let e4 = (d / (4.0 * eps)).exp();
    let e2 = (d / (2.0 * eps)).exp();
    let p = compensated_sum([1.0, q, d / eps]);
    let p2 = p * p;

    let rho1 = 0.75 * d * d * p2 * e2;
    let inner = compensated_sum([
        2.25,
        2.25 * q,
        4.0 * d / eps,
        9.0 * d / (8.0 * eps),
        d * d / (4.0 * eps * eps),
        0.25 * p2 * e4,
    ]);
    let alpha1 = 3.0 * d.powi(4) / (eps * eps) * inner * inner * e2;
    let qd = compensated_sum([q, d / (2.0 * eps)]);
    let alpha2 = 0.75 * d * d * qd * qd * p2 * e2;

    let scale = 1.0 / (inputs.gamma * (1.0 - inputs.sigma));
    let beta1 = alpha1 * scale;
    let beta2 = alpha2 * scale;

    let q_margin = config.check_q_margin();
    if !q_margin {
        diagnostics.push(format!(
            "q = {q} does not exceed (D + ε)/(2ε) = {}",
            (d + eps) / (2.0 * eps)
        ));
    }

    let cw = 1.0 + d / (2.0 * eps) * e4;
    let penalty = compensated_sum([2.0 * beta1 * cw * cw, 2.0 * beta2, beta2 * d * d / (eps * eps) * e2]);
    let slack = q - d / (2.0 * eps) - 0.5;
    let floor = slack.min(0.5);

    let kappa = match inputs.kappa {
        Some(k) => k,
        None if floor > 0.0 && floor - 1.0 / (2.0 * DEFAULT_KAPPA) <= 0.0 => {
            let k = 1.0 / floor;
            diagnostics.push(format!("κ = {DEFAULT_KAPPA} leaves no margin; using κ = {k}"));
            k
        }
        None => DEFAULT_KAPPA,
    };
    let coeff = eps * floor - eps / (2.0 * kappa);
    let b_min = (coeff > 0.0).then(|| penalty / coeff);
    if coeff <= 0.0 {
        diagnostics.push(if floor <= 0.0 {
            "min{q − D/2ε − 1/2, 1/2} ≤ 0: no κ > 0 admits a feasible B".to_string()
        } else {
            format!("κ = {kappa} is too small: min{{q − D/2ε − 1/2, 1/2}} − 1/(2κ) ≤ 0")
        });
    }
    let b = match (inputs.b, b_min) {
        (Some(b), _) => b,
        (None, Some(bm)) => (1.0 + B_MARGIN) * bm,
        (None, None) => f64::NAN,
    };

    let feasibility_lhs = b * coeff - penalty;
    let rho = eps * kappa * b / 2.0;
    let b1 = eps * b * (slack - 1.0 / (2.0 * kappa)) - 2.0 * beta2;
    let b2 = compensated_sum([eps * b / 4.0, -beta1 * cw * cw, -beta2 * d * d / (2.0 * eps * eps) * e2]);
    let varrho = (b2 / b).min(inputs.eta / 2.0);

    if b.is_finite() && !(feasibility_lhs > 0.0) {
        diagnostics.push(format!(
            "B = {b:e} violates the feasibility inequality (left side {feasibility_lhs:e}){}",
            b_min.map(|bm| format!("; B_min = {bm:e}")).unwrap_or_default()
        ));
    }
    let feasible = q_margin && feasibility_lhs > 0.0 && b1 > 0.0 && b2 > 0.0;

    Ok(SynthesisReport {
        inputs: SynthesisInputs {
            kappa: Some(kappa),
            ..*inputs
        },
        rho1,
        alpha1,
        alpha2,
        beta1,
        beta2,
        b,
        b_min,
        kappa,
        rho,
        b1,
        b2,
        varrho,
        feasibility_lhs,
        q_margin,
        feasible,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerParams {
    pub gamma: f64,
    pub eta: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub m0: f64,
}

impl TriggerParams {
    pub fn new(gamma: f64, eta: f64, rho: f64, beta1: f64, beta2: f64, sigma: f64, m0: f64) -> Result<Self> {
        let positive = [
            ("gamma", gamma),
            ("eta", eta),
            ("rho", rho),
            ("beta1", beta1),
            ("beta2", beta2),
            ("m0", m0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(invalid("sigma", "must lie in (0, 1)"));
        }
        Ok(Self {
            gamma,
            eta,
            rho,
            beta1,
            beta2,
            sigma,
            m0,
        })
    }
}

/// `U = ∫₀¹ k(y,t) u(y,t) dy` by the trapezoid rule.
///
/// `field` must be evaluated at the same time as `u`.
pub fn control_value(u: &PlantState, field: &KernelField) -> Result<f64> {
    if field.gain.len() != u.u.len() {
        return Err(Error::GridMismatch {
            expected: field.gain.len(),
            found: u.u.len(),
        });
    }
    let h = 1.0 / (u.u.len() - 1) as f64;
    let prod: Vec<f64> = field.gain.iter().zip(&u.u).map(|(k, v)| k * v).collect();
    Ok(trapezoid(&prod, h))
}

/// Input holding error `d = U_held − U(t)`.
pub fn holding_deviation(u: &PlantState, field_now: &KernelField, u_held: f64) -> Result<f64> {
    Ok(u_held - control_value(u, field_now)?)
}

/// `d² > γ m`, strict.
pub fn should_fire(d: f64, m: f64, gamma: f64) -> bool {
    d * d > gamma * m
}

/// Trace quantities entering the `m` dynamics at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Forcing {
    pub d: f64,
    pub u_norm: f64,
    pub u_boundary: f64,
}

impl Forcing {
    fn lerp(&self, other: &Self, theta: f64) -> Self {
        let mix = |a: f64, b: f64| a + theta * (b - a);
        Self {
            d: mix(self.d, other.d),
            u_norm: mix(self.u_norm, other.u_norm),
            u_boundary: mix(self.u_boundary, other.u_boundary),
        }
    }

    fn drive(&self, p: &TriggerParams) -> f64 {
        -p.rho * self.d * self.d + p.beta1 * self.u_norm * self.u_norm + p.beta2 * self.u_boundary * self.u_boundary
    }
}

/// Result of advancing `m` over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStep {
    pub m: f64,
    /// Offset into the step at which `d² = γ m` was crossed, if it was.
    pub crossing: Option<f64>,
}

const CROSSING_PROBES: usize = 8;
const BISECTION_ITERS: usize = 60;

fn rk4(m: f64, s0: f64, s1: f64, p: &TriggerParams, drive: &dyn Fn(f64) -> f64) -> f64 {
    let h = s1 - s0;
    if h == 0.0 {
        return m;
    }
    let f = |s: f64, m: f64| -p.eta * m + drive(s);
    let k1 = f(s0, m);
    let k2 = f(s0 + 0.5 * h, m + 0.5 * h * k1);
    let k3 = f(s0 + 0.5 * h, m + 0.5 * h * k2);
    let k4 = f(s1, m + h * k3);
    m + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Advances `m` by one RK4 step of length `dt`. The forcing is interpolated
/// linearly between `start` and `end`; with `start == end` it is held.
///
/// The step is probed for the first instant at which `d² > γ m`; if one is
/// found it is located by bisection, `m` is continued from there with the
/// holding error reset to zero, and the offset is returned in
/// [`MStep::crossing`].
pub fn advance_m(m: f64, start: &Forcing, end: &Forcing, dt: f64, params: &TriggerParams) -> Result<MStep> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let at = |s: f64| start.lerp(end, s / dt);
    let drive = |s: f64| at(s).drive(params);
    let m_at = |s: f64| rk4(m, 0.0, s, params, &drive);
    let gap = |s: f64| {
        let f = at(s);
        m_at(s) - f.d * f.d / params.gamma
    };

    let mut crossing = None;
    if gap(0.0) < 0.0 {
        crossing = Some(0.0);
    } else {
        let mut lo = 0.0;
        for k in 1..=CROSSING_PROBES {
            let hi = dt * k as f64 / CROSSING_PROBES as f64;
            if gap(hi) < 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..BISECTION_ITERS {
                    let mid = 0.5 * (a + b);
                    if gap(mid) < 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                crossing = Some(a);
                break;
            }
            lo = hi;
        }
    }

    let m_end = match crossing {
        None => m_at(dt),
        Some(s) => {
            let m_cross = m_at(s);
            let reset = |tau: f64| Forcing { d: 0.0, ..at(tau) }.drive(params);
            rk4(m_cross, s, dt, params, &reset)
        }
    };
    Ok(MStep { m: m_end, crossing })
}

/// Per-run trigger bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    pub m: f64,
    pub u_held: f64,
    pub t_last_event: f64,
    event_times: Vec<f64>,
}

impl TriggerState {
    pub fn new(m0: f64) -> Self {
        Self {
            m: m0,
            u_held: 0.0,
            t_last_event: f64::NEG_INFINITY,
            event_times: Vec::new(),
        }
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    /// Records an event at `t` with the freshly sampled input.
    pub fn record_event(&mut self, t: f64, u_new: f64) -> Result<()> {
        if let Some(&last) = self.event_times.last() {
            if !(t > last) {
                return Err(invalid(
                    "t",
                    format!("event at {t} does not follow the event at {last}"),
                ));
            }
        }
        self.event_times.push(t);
        self.t_last_event = t;
        self.u_held = u_new;
        Ok(())
    }

    /// Advances `m` from `t` to `t + dt`; aborts if `m` leaves `(0, ∞)`.
    pub fn update_m(
        &mut self,
        t: f64,
        start: &Forcing,
        end: &Forcing,
        dt: f64,
        params: &TriggerParams,
    ) -> Result<MStep> {
        let step = advance_m(self.m, start, end, dt, params)?;
        if !(step.m > 0.0 && step.m.is_finite()) {
            return Err(Error::StepSizeViolation { t: t + dt, m: step.m });
        }
        self.m = step.m;
        Ok(step)
    }
}
