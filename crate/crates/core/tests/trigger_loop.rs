use etbc::closed_loop::{lyapunov_series, run, InitialCondition, Mode, RunConfig, TriggerSpec};
use etbc::transform::target_residuals;
use etbc::trigger::{advance_m, control_value, synthesize, Forcing, SynthesisInputs, TriggerParams};
use etbc::{build_gain, PlantConfig, PlantState, ReactionProfile, SeriesConfig, SpatialGrid};
use proptest::prelude::*;

fn reference_plant() -> PlantConfig {
    PlantConfig::new(1.0, 3.0, ReactionProfile::rational_decay(3.0, 3.0).unwrap()).unwrap()
}

fn bump(x: f64) -> f64 {
    10.0 * x * x * (x - 1.0) * (x - 1.0)
}

#[test]
fn control_value_converges_under_refinement() {
    let plant = reference_plant();
    let value = |n: usize, t: f64| {
        let grid = SpatialGrid::new(n).unwrap();
        let field = build_gain(t, &grid, &plant, SeriesConfig::default()).unwrap();
        control_value(&PlantState::from_fn(&grid, t, bump), &field).unwrap()
    };
    for t in [0.0, 1.0, 2.5] {
        let coarse = value(200, t);
        let fine = value(2000, t);
        assert!((coarse - fine).abs() < 1e-4, "t = {t}: {coarse} vs {fine}");
    }
}

#[test]
fn open_loop_heat_decays_monotonically() {
    let plant = PlantConfig::new(1.0, 1.0, ReactionProfile::constant(0.0, 1.0).unwrap()).unwrap();
    let mut cfg = RunConfig::new(plant, Mode::OpenLoop, InitialCondition::Bump { amplitude: 10.0 });
    cfg.horizon = 0.5;
    let trace = run(&cfg).unwrap();
    assert!(trace.rows.windows(2).all(|w| w[1].u_norm <= w[0].u_norm));
}

#[test]
fn ctc_converges_with_positive_rate() {
    let mut cfg = RunConfig::new(reference_plant(), Mode::Ctc, InitialCondition::Bump { amplitude: 10.0 });
    cfg.n_cells = 50;
    cfg.dt = 1e-3;
    let trace = run(&cfg).unwrap();
    assert!(trace.summary.fitted_rate.unwrap() > 0.5);
    assert!(trace.summary.final_ratio < 0.1);
}

#[test]
fn etc_with_zero_data_gives_pure_m_decay_in_v() {
    let plant = reference_plant();
    let inputs = SynthesisInputs::new(1.0, 1.0, 0.5);
    let mut cfg = RunConfig::new(plant.clone(), Mode::Etc, InitialCondition::Constant { value: 0.0 })
        .with_trigger(TriggerSpec::Synthesize { inputs, m0: 1e-4 });
    cfg.n_cells = 20;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    let trace = run(&cfg).unwrap();
    let report = trace.synthesis.clone().unwrap();
    let series = lyapunov_series(&trace, &plant, SeriesConfig::default(), &report).unwrap();
    for s in &series.samples {
        assert!((s.v - 1e-4 * (-s.t).exp()).abs() < 1e-14);
    }
    assert!(series.monotone);
}

#[test]
fn ctc_target_boundary_residual_shrinks_with_refinement() {
    let plant = PlantConfig::new(1.0, 2.0, ReactionProfile::constant(0.0, 1.0).unwrap()).unwrap();
    let boundary = |n: usize, dt: f64| {
        let mut cfg = RunConfig::new(plant.clone(), Mode::Ctc, InitialCondition::Bump { amplitude: 10.0 });
        cfg.n_cells = n;
        cfg.dt = dt;
        cfg.horizon = 0.2;
        cfg.snapshot_stride = 1;
        let trace = run(&cfg).unwrap();
        let samples = etbc::closed_loop::target_samples(&trace, &plant, SeriesConfig::default()).unwrap();
        let late: Vec<_> = samples.into_iter().filter(|s| s.t >= 0.05).collect();
        target_residuals(&late, 1.0)
    };
    let coarse = boundary(20, 1e-3);
    let fine = boundary(40, 5e-4);
    let (rb, ri) = coarse.refinement_ratios(&fine);
    assert!(
        rb > 3.0,
        "boundary residuals {} -> {}",
        coarse.boundary_max,
        fine.boundary_max
    );
    assert!(
        ri > 3.0,
        "interior residuals {} -> {}",
        coarse.interior_max,
        fine.interior_max
    );
}

#[test]
fn etc_trace_respects_trigger_invariants_on_short_run() {
    let inputs = SynthesisInputs::new(1.0, 1.0, 0.5);
    let mut cfg = RunConfig::new(reference_plant(), Mode::Etc, InitialCondition::Bump { amplitude: 10.0 })
        .with_trigger(TriggerSpec::Synthesize { inputs, m0: 1e-4 });
    cfg.n_cells = 50;
    cfg.horizon = 0.3;
    let trace = run(&cfg).unwrap();
    let gamma = trace.params.unwrap().gamma;
    for r in &trace.rows {
        let (d, m) = (r.d.unwrap(), r.m.unwrap());
        assert!(m > 0.0);
        assert!(r.event || d * d <= gamma * m);
    }
    assert!(trace.summary.event_count > 1);
    assert!(trace.summary.event_count * 10 < trace.summary.step_count);
}

#[test]
fn infeasible_synthesis_refuses_etc() {
    let plant = PlantConfig::new(1.0, 1.0, ReactionProfile::rational_decay(3.0, 3.0).unwrap()).unwrap();
    let inputs = SynthesisInputs::new(1.0, 1.0, 0.5);
    assert!(!synthesize(&plant, &inputs).unwrap().feasible);
    let cfg = RunConfig::new(plant, Mode::Etc, InitialCondition::Bump { amplitude: 1.0 })
        .with_trigger(TriggerSpec::Synthesize { inputs, m0: 1e-4 });
    assert!(run(&cfg).is_err());
}

proptest! {
    #[test]
    fn beta_over_alpha_is_fixed_by_gamma_and_sigma(gamma in 0.01..100.0f64, sigma in 0.01..0.99f64, q in 2.6..10.0f64) {
        let report = synthesize(&reference_plant_with_q(q), &SynthesisInputs::new(gamma, 1.0, sigma)).unwrap();
        let want = 1.0 / (gamma * (1.0 - sigma));
        prop_assert!((report.beta1 / report.alpha1 / want - 1.0).abs() < 1e-14);
        prop_assert!((report.beta2 / report.alpha2 / want - 1.0).abs() < 1e-14);
    }

    #[test]
    fn m_stays_positive(
        m in 1e-8..1e3f64,
        d_end in -10.0..10.0f64,
        n0 in 0.0..5.0f64,
        n1 in 0.0..5.0f64,
        b0 in -5.0..5.0f64,
        b1 in -5.0..5.0f64,
        rho in 1e-2..1e9f64,
        dt in 1e-5..1e-2f64,
    ) {
        let p = TriggerParams::new(1.0, 1.0, rho, 10.0, 10.0, 0.5, 1e-4).unwrap();
        let start = Forcing { d: 0.0, u_norm: n0, u_boundary: b0 };
        let end = Forcing { d: d_end, u_norm: n1, u_boundary: b1 };
        let step = advance_m(m, &start, &end, dt, &p).unwrap();
        prop_assert!(step.m > 0.0);
        if step.crossing.is_none() {
            prop_assert!(d_end * d_end <= p.gamma * step.m);
        }
    }
}

fn reference_plant_with_q(q: f64) -> PlantConfig {
    PlantConfig::new(1.0, q, ReactionProfile::rational_decay(3.0, 3.0).unwrap()).unwrap()
}
