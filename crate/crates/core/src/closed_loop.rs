//! ETC, CTC and open-loop runs, their traces and the Lyapunov diagnostics.
//!
//! In ETC mode the gain `k(·,t)` is evaluated at every step to monitor the
//! holding error `d(t) = U_j − U(t)`; the actuated input only changes at
//! events.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{build_gain, KernelField, KernelSlice, SeriesConfig};
use crate::numeric::linear_fit;
use crate::plant::{self, PlantState, SpatialGrid};
use crate::profile::PlantConfig;
use crate::transform::{norm_equivalence_constant, TargetSample, VolterraTables};
use crate::trigger::{
    control_value, should_fire, synthesize, Forcing, SynthesisInputs, SynthesisReport, TriggerParams, TriggerState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Etc,
    Ctc,
    #[serde(rename = "open")]
    OpenLoop,
}

/// Placement of an ETC event detected inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventRefine {
    /// Events fire at the end of the detecting step.
    #[default]
    #[serde(rename = "none", alias = "grid")]
    Grid,
    /// The plant is re-stepped to the bisected crossing time, which becomes
    /// the event time.
    Bisect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `a x² (x − 1)²`.
    Bump {
        amplitude: f64,
    },
    /// `a cos(k π x)`.
    Cosine {
        amplitude: f64,
        wavenumber: f64,
    },
    Constant {
        value: f64,
    },
    /// `a` on `[0, x₀)`, `b` on `[x₀, 1]`.
    Step {
        at: f64,
        left: f64,
        right: f64,
    },
    /// Nodal values; the length must match the grid.
    Samples {
        values: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn state(&self, grid: &SpatialGrid) -> Result<PlantState> {
        let u = match *self {
            Self::Bump { amplitude } => PlantState::from_fn(grid, 0.0, |x| amplitude * x * x * (x - 1.0) * (x - 1.0)),
            Self::Cosine { amplitude, wavenumber } => {
                PlantState::from_fn(grid, 0.0, |x| amplitude * (wavenumber * std::f64::consts::PI * x).cos())
            }
            Self::Constant { value } => PlantState::from_fn(grid, 0.0, |_| value),
            Self::Step { at, left, right } => PlantState::from_fn(grid, 0.0, |x| if x < at { left } else { right }),
            Self::Samples { ref values } => {
                grid.check_len(values.len())?;
                PlantState::new(values.clone(), 0.0)?
            }
        };
        if u.u.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial", "must be finite"));
        }
        Ok(u)
    }

    /// The same profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self.clone() {
            Self::Bump { amplitude } => Self::Bump {
                amplitude: amplitude * factor,
            },
            Self::Cosine { amplitude, wavenumber } => Self::Cosine {
                amplitude: amplitude * factor,
                wavenumber,
            },
            Self::Constant { value } => Self::Constant { value: value * factor },
            Self::Step { at, left, right } => Self::Step {
                at,
                left: left * factor,
                right: right * factor,
            },
            Self::Samples { values } => Self::Samples {
                values: values.into_iter().map(|v| v * factor).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerSpec {
    Params(TriggerParams),
    /// Parameters produced by [`synthesize`]; the design must be feasible.
    Synthesize {
        inputs: SynthesisInputs,
        m0: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub n_cells: usize,
    pub dt: f64,
    pub horizon: f64,
    pub mode: Mode,
    /// Required in ETC mode, ignored otherwise.
    pub trigger: Option<TriggerSpec>,
    pub initial: InitialCondition,
    pub series: SeriesConfig,
    /// Steps between stored full-state snapshots.
    pub snapshot_stride: usize,
    pub event_refine: EventRefine,
}

impl RunConfig {
    pub const DEFAULT_N_CELLS: usize = 200;
    pub const DEFAULT_DT: f64 = 1e-4;
    pub const DEFAULT_HORIZON: f64 = 3.0;
    pub const DEFAULT_SNAPSHOT_STRIDE: usize = 100;

    pub fn new(plant: PlantConfig, mode: Mode, initial: InitialCondition) -> Self {
        Self {
            plant,
            n_cells: Self::DEFAULT_N_CELLS,
            dt: Self::DEFAULT_DT,
            horizon: Self::DEFAULT_HORIZON,
            mode,
            trigger: None,
            initial,
            series: SeriesConfig::default(),
            snapshot_stride: Self::DEFAULT_SNAPSHOT_STRIDE,
            event_refine: EventRefine::Grid,
        }
    }

    pub fn with_trigger(mut self, trigger: TriggerSpec) -> Self {
        self.trigger = Some(trigger);
        self
    }

    /// Number of steps; the horizon is rounded to the nearest multiple of `dt`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon) {
            return Err(invalid("dt", "must lie in (0, horizon)"));
        }
        if self.snapshot_stride == 0 {
            return Err(invalid("snapshot_stride", "must be at least 1"));
        }
        SpatialGrid::new(self.n_cells)?;
        self.series.validate()?;
        if self.mode == Mode::Etc && self.trigger.is_none() {
            return Err(invalid("trigger", "ETC mode needs trigger parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub u_norm: f64,
    pub u_boundary: f64,
    /// Input applied over the following step.
    pub u_held: f64,
    /// Holding error before any update at this row.
    pub d: Option<f64>,
    pub m: Option<f64>,
    pub event: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub m: Option<f64>,
    /// Holding error after any update at this instant.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub event_count: usize,
    pub step_count: usize,
    /// `+∞` with fewer than two events.
    pub min_dwell: f64,
    /// `−slope` of `ln‖u‖` over the second half of the horizon.
    pub fitted_rate: Option<f64>,
    pub final_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub mode: Mode,
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub params: Option<TriggerParams>,
    pub synthesis: Option<SynthesisReport>,
    pub summary: TraceSummary,
}

/// Smallest gap between consecutive event times; `+∞` with fewer than two.
pub fn min_dwell(events: &[Event]) -> f64 {
    events.windows(2).map(|w| w[1].t - w[0].t).fold(f64::INFINITY, f64::min)
}

/// Decay rate from an OLS fit of `ln‖u‖` on rows with `t ≥ T/2`.
pub fn fitted_rate(rows: &[TraceRow]) -> Option<f64> {
    let t_end = rows.last()?.t;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.t >= 0.5 * t_end && r.u_norm > 0.0)
        .map(|r| (r.t, r.u_norm.ln()))
        .unzip();
    linear_fit(&xs, &ys).map(|(_, slope)| -slope)
}

fn resolve_trigger(config: &RunConfig) -> Result<(Option<TriggerParams>, Option<SynthesisReport>)> {
    if config.mode != Mode::Etc {
        return Ok((None, None));
    }
    match config.trigger.as_ref() {
        Some(TriggerSpec::Params(p)) => Ok((Some(*p), None)),
        Some(TriggerSpec::Synthesize { inputs, m0 }) => {
            let report = synthesize(&config.plant, inputs)?;
            let params = report.trigger_params(*m0)?;
            Ok((Some(params), Some(report)))
        }
        None => Err(invalid("trigger", "ETC mode needs trigger parameters")),
    }
}

struct Monitor<'a> {
    plant: &'a PlantConfig,
    grid: SpatialGrid,
    series: SeriesConfig,
}

impl Monitor<'_> {
    fn field(&self, t: f64) -> Result<KernelField> {
        build_gain(t, &self.grid, self.plant, self.series)
    }

    fn control(&self, state: &PlantState) -> Result<f64> {
        control_value(state, &self.field(state.t)?)
    }
}

fn forcing(state: &PlantState, d: f64) -> Forcing {
    Forcing {
        d,
        u_norm: state.l2_norm(),
        u_boundary: state.boundary(),
    }
}

pub fn run(config: &RunConfig) -> Result<Trace> {
    config.validate()?;
    let (params, synthesis) = resolve_trigger(config)?;
    let grid = SpatialGrid::new(config.n_cells)?;
    let monitor = Monitor {
        plant: &config.plant,
        grid,
        series: config.series,
    };
    let steps = config.steps();
    let dt = config.dt;
    let mut state = config.initial.state(&grid)?;

    let mut rows = Vec::with_capacity(steps + 1);
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut trigger = params.map(|p| TriggerState::new(p.m0));

    let mut u_held = 0.0;
    if config.mode != Mode::OpenLoop {
        u_held = monitor.control(&state)?;
        events.push(Event { t: 0.0, u: u_held });
        if let Some(tr) = trigger.as_mut() {
            tr.record_event(0.0, u_held)?;
        }
    }
    let m_now = |tr: &Option<TriggerState>| tr.as_ref().map(|s| s.m);
    let d_log = |d: f64| (config.mode != Mode::OpenLoop).then_some(d);
    rows.push(TraceRow {
        t: 0.0,
        u_norm: state.l2_norm(),
        u_boundary: state.boundary(),
        u_held,
        d: d_log(0.0),
        m: m_now(&trigger),
        event: config.mode != Mode::OpenLoop,
    });
    snapshots.push(Snapshot {
        step: 0,
        t: 0.0,
        u: state.u.clone(),
        m: m_now(&trigger),
        d: 0.0,
    });

    let mut d = 0.0;
    for k in 0..steps {
        let t_next = (k + 1) as f64 * dt;
        let mut next = plant::step(&state, dt, &config.plant, u_held)?;
        next.t = t_next;
        let mut event = false;
        let mut d_row = 0.0;

        match config.mode {
            Mode::OpenLoop => {}
            Mode::Ctc => {
                let u_new = monitor.control(&next)?;
                d_row = u_held - u_new;
                u_held = u_new;
                events.push(Event { t: t_next, u: u_new });
                event = true;
                d = 0.0;
            }
            Mode::Etc => {
                let p = params.as_ref().expect("resolved for ETC");
                let tr = trigger.as_mut().expect("resolved for ETC");
                let start = forcing(&state, d);
                let u_next = monitor.control(&next)?;
                let d_next = u_held - u_next;
                let step = tr.update_m(state.t, &start, &forcing(&next, d_next), dt, p)?;
                d_row = d_next;
                d = d_next;
                let crossing = step
                    .crossing
                    .or_else(|| should_fire(d_next, tr.m, p.gamma).then_some(dt));
                if let Some(s) = crossing {
                    event = true;
                    let refined = config.event_refine == EventRefine::Bisect && s > 0.0 && s < dt;
                    if refined {
                        let mid = plant::step(&state, s, &config.plant, u_held)?;
                        let u_event = monitor.control(&mid)?;
                        tr.record_event(mid.t, u_event)?;
                        events.push(Event { t: mid.t, u: u_event });
                        u_held = u_event;
                        next = plant::step(&mid, dt - s, &config.plant, u_held)?;
                        next.t = t_next;
                        let u_end = monitor.control(&next)?;
                        d = u_held - u_end;
                        d_row = d;
                    }
                    if !refined || should_fire(d, tr.m, p.gamma) {
                        let u_new = if refined { monitor.control(&next)? } else { u_next };
                        tr.record_event(t_next, u_new)?;
                        events.push(Event { t: t_next, u: u_new });
                        u_held = u_new;
                        d = 0.0;
                    }
                }
            }
        }

        state = next;
        rows.push(TraceRow {
            t: t_next,
            u_norm: state.l2_norm(),
            u_boundary: state.boundary(),
            u_held,
            d: d_log(d_row),
            m: m_now(&trigger),
            event,
        });
        if (k + 1) % config.snapshot_stride == 0 || k + 1 == steps {
            snapshots.push(Snapshot {
                step: k + 1,
                t: t_next,
                u: state.u.clone(),
                m: m_now(&trigger),
                d,
            });
        }
    }

    let u0 = rows[0].u_norm;
    let summary = TraceSummary {
        event_count: events.len(),
        step_count: steps,
        min_dwell: min_dwell(&events),
        fitted_rate: fitted_rate(&rows),
        final_ratio: if u0 > 0.0 { state.l2_norm() / u0 } else { 0.0 },
    };
    Ok(Trace {
        mode: config.mode,
        dt,
        rows,
        events,
        snapshots,
        params,
        synthesis,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub step: usize,
    pub t: f64,
    pub u_norm: f64,
    pub w_norm: f64,
    pub m: f64,
    /// `V = (B/2)‖w‖² + m`.
    pub v: f64,
    /// `e^{−2ϱt} V(0)`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSeries {
    pub samples: Vec<LyapunovSample>,
    pub varrho: f64,
    /// `V` never grows by more than [`V_MONOTONE_SLACK`] relative between
    /// consecutive samples.
    pub monotone: bool,
    /// Largest `V(t) / (e^{−2ϱt} V(0))`.
    pub max_bound_ratio: f64,
    /// `‖u‖ ≤ c‖w‖` and `‖w‖ ≤ c‖u‖` on every sample.
    pub sandwich: bool,
}

pub const V_MONOTONE_SLACK: f64 = 1e-6;
const SANDWICH_SLACK: f64 = 1e-9;

/// `V(t)` on the stored snapshots of an ETC trace.
pub fn lyapunov_series(
    trace: &Trace,
    plant: &PlantConfig,
    series: SeriesConfig,
    report: &SynthesisReport,
) -> Result<LyapunovSeries> {
    let b = report.b;
    let varrho = report.varrho;
    let c = norm_equivalence_constant(plant);
    let mut samples = Vec::with_capacity(trace.snapshots.len());
    let mut sandwich = true;
    for snap in &trace.snapshots {
        let m = snap
            .m
            .ok_or_else(|| invalid("trace", "Lyapunov series needs an ETC trace"))?;
        let grid = SpatialGrid::for_len(snap.u.len())?;
        let slice = KernelSlice::new(plant.profile(), plant.epsilon(), snap.t, series)?;
        let w = VolterraTables::from_slice(&slice, grid)?.forward(&snap.u)?;
        let w_norm = plant::l2_norm(&w);
        let u_norm = plant::l2_norm(&snap.u);
        sandwich &= u_norm <= c * w_norm * (1.0 + SANDWICH_SLACK) && w_norm <= c * u_norm * (1.0 + SANDWICH_SLACK);
        samples.push(LyapunovSample {
            step: snap.step,
            t: snap.t,
            u_norm,
            w_norm,
            m,
            v: 0.5 * b * w_norm * w_norm + m,
            bound: 0.0,
        });
    }
    let v0 = samples.first().map_or(0.0, |s| s.v);
    let mut max_bound_ratio = 0.0_f64;
    for s in &mut samples {
        s.bound = (-2.0 * varrho * s.t).exp() * v0;
        if s.bound > 0.0 {
            max_bound_ratio = max_bound_ratio.max(s.v / s.bound);
        }
    }
    let monotone = samples.windows(2).all(|w| w[1].v <= w[0].v * (1.0 + V_MONOTONE_SLACK));
    Ok(LyapunovSeries {
        samples,
        varrho,
        monotone,
        max_bound_ratio,
        sandwich,
    })
}

/// Target-system samples `w, r, d` on the stored snapshots, for
/// [`crate::transform::target_residuals`].
pub fn target_samples(trace: &Trace, plant: &PlantConfig, series: SeriesConfig) -> Result<Vec<TargetSample>> {
    trace
        .snapshots
        .iter()
        .map(|snap| {
            let grid = SpatialGrid::for_len(snap.u.len())?;
            let slice = KernelSlice::new(plant.profile(), plant.epsilon(), snap.t, series)?;
            Ok(TargetSample {
                t: snap.t,
                w: VolterraTables::from_slice(&slice, grid)?.forward(&snap.u)?,
                r: plant.r(snap.t),
                d: snap.d,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "t,u_norm,u_boundary,u_held,d,m,event_flag";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl Trace {
    /// Writes the trace as CSV. With `diagnostics`, `w_norm` and `V` columns
    /// are appended and filled on snapshot rows.
    pub fn write_csv<W: io::Write>(&self, mut out: W, diagnostics: Option<&LyapunovSeries>) -> io::Result<()> {
        let mut line = String::new();
        line.push_str(CSV_HEADER);
        if diagnostics.is_some() {
            line.push_str(",w_norm,V");
        }
        writeln!(out, "{line}")?;
        let mut extra = diagnostics.map(|d| d.samples.iter().peekable());
        for (i, r) in self.rows.iter().enumerate() {
            line.clear();
            let _ = write!(
                line,
                "{:e},{:e},{:e},{:e},{},{},{}",
                r.t,
                r.u_norm,
                r.u_boundary,
                r.u_held,
                opt(r.d),
                opt(r.m),
                r.event
            );
            if let Some(it) = extra.as_mut() {
                match it.next_if(|s| s.step == i) {
                    Some(s) => {
                        let _ = write!(line, ",{:e},{:e}", s.w_norm, s.v);
                    }
                    None => line.push_str(",,"),
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn json_summary(&self, lyapunov: Option<&LyapunovSeries>) -> JsonSummary {
        let mut notes = Vec::new();
        if self.events.len() < 2 {
            notes.push("fewer than two events: min_dwell is unbounded".to_string());
        }
        JsonSummary {
            mode: self.mode,
            event_count: self.summary.event_count,
            step_count: self.summary.step_count,
            min_dwell: self.summary.min_dwell.is_finite().then_some(self.summary.min_dwell),
            fitted_rate: self.summary.fitted_rate,
            final_ratio: self.summary.final_ratio,
            v_monotone: lyapunov.map(|l| l.monotone),
            notes,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JsonSummary {
    pub mode: Mode,
    pub event_count: usize,
    pub step_count: usize,
    /// `null` with fewer than two events.
    pub min_dwell: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub final_ratio: f64,
    #[serde(rename = "V_monotone")]
    pub v_monotone: Option<bool>,
    pub notes: Vec<String>,
}
