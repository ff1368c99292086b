//! `etbc`: synthesis, simulation, verification and ETC/CTC comparison.
//!
//! Exit codes: 0 success, 1 infeasible design or failed check, 2 invalid
//! configuration, 3 numerical abort or output failure.

mod config;
mod plot;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use etbc::closed_loop::{lyapunov_series, run, JsonSummary, LyapunovSeries, Mode, Trace};
use etbc::kernel::{verify_coefficient_bound, verify_kernel_bounds, verify_kernel_pde, BoundGrid};
use etbc::profile::{check_gevrey, default_gevrey_samples, DEFAULT_GEVREY_ORDER};
use etbc::transform::{from_target, to_target};
use etbc::trigger::{synthesize, SynthesisReport};
use etbc::SpatialGrid;
use serde::Serialize;

use crate::config::{Config, ConfigError};

#[derive(Parser)]
#[command(
    name = "etbc",
    version,
    about = "Event-triggered backstepping boundary control of reaction-diffusion PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise the trigger parameters and report feasibility.
    Synth {
        config: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run one closed-loop or open-loop simulation and write its trace.
    Simulate {
        config: PathBuf,
        /// Overrides `run.mode` from the configuration.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        output: OutputArgs,
        /// Append `w_norm` and `V` columns on snapshot rows (ETC with synthesis).
        #[arg(long)]
        diagnostics: bool,
    },
    /// Check the profile bound, kernel PDE residuals, kernel bounds and the
    /// transform round trip.
    Verify { config: PathBuf },
    /// Run ETC and CTC side by side.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "ETBC_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Also render plots from the written CSV.
    #[arg(long, value_enum)]
    plot: Option<PlotFormat>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Etc,
    Ctc,
    Open,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Etc => Mode::Etc,
            ModeArg::Ctc => Mode::Ctc,
            ModeArg::Open => Mode::OpenLoop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotFormat {
    Svg,
}

enum Failure {
    Rejected(String),
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Rejected(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Rejected(m) | Self::Config(m) | Self::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<etbc::Error> for Failure {
    fn from(e: etbc::Error) -> Self {
        match e {
            etbc::Error::InvalidParameter { name: "synthesis", .. } => Self::Rejected(e.to_string()),
            etbc::Error::InvalidParameter { .. } => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("report types serialise") + "\n"
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Etc => "etc",
        Mode::Ctc => "ctc",
        Mode::OpenLoop => "open",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, json } => cmd_synth(&config, json),
        Command::Simulate {
            config,
            mode,
            output,
            diagnostics,
        } => cmd_simulate(&config, mode.map(Mode::from), &output, diagnostics),
        Command::Verify { config } => cmd_verify(&config),
        Command::Compare { config, output } => cmd_compare(&config, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("etbc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn synthesis_table(r: &SynthesisReport) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
    let rows = [
        ("rho1", format!("{:.6e}", r.rho1)),
        ("alpha1", format!("{:.6e}", r.alpha1)),
        ("alpha2", format!("{:.6e}", r.alpha2)),
        ("beta1", format!("{:.6e}", r.beta1)),
        ("beta2", format!("{:.6e}", r.beta2)),
        ("kappa", format!("{}", r.kappa)),
        ("B", format!("{:.6e}", r.b)),
        ("B_min", opt(r.b_min)),
        ("rho", format!("{:.6e}", r.rho)),
        ("b1", format!("{:.6e}", r.b1)),
        ("b2", format!("{:.6e}", r.b2)),
        ("varrho", format!("{:.6e}", r.varrho)),
        ("feasibility_lhs", format!("{:.6e}", r.feasibility_lhs)),
        ("q_margin", r.q_margin.to_string()),
        ("feasible", r.feasible.to_string()),
    ];
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<16} {v}");
    }
    for d in &r.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}

fn cmd_synth(path: &Path, json: bool) -> Result<(), Failure> {
    let cfg = Config::load(path)?;
    let inputs = cfg
        .synthesis_inputs()
        .ok_or_else(|| Failure::Config("synth needs a [trigger] section without explicit rho/beta1/beta2".into()))?;
    let report = synthesize(&cfg.plant, &inputs)?;
    if json {
        print!("{}", to_json(&report));
    } else {
        print!("{}", synthesis_table(&report));
    }
    if report.feasible {
        Ok(())
    } else {
        Err(Failure::Rejected("design is infeasible".into()))
    }
}

struct RunOutput {
    trace: Trace,
    lyapunov: Option<LyapunovSeries>,
}

fn simulate(cfg: &Config, mode: Mode) -> Result<RunOutput, Failure> {
    let run_cfg = cfg.run_config(mode);
    let trace = run(&run_cfg)?;
    let lyapunov = match trace.synthesis.as_ref() {
        Some(report) => Some(lyapunov_series(&trace, &cfg.plant, run_cfg.series, report)?),
        None => None,
    };
    Ok(RunOutput { trace, lyapunov })
}

fn write_trace(dir: &Path, out: &RunOutput, diagnostics: bool) -> Result<(PathBuf, JsonSummary), Failure> {
    let name = mode_name(out.trace.mode);
    let csv_path = dir.join(format!("{name}_trace.csv"));
    let file = fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
    let extra = if diagnostics { out.lyapunov.as_ref() } else { None };
    out.trace
        .write_csv(BufWriter::new(file), extra)
        .map_err(|e| io_failure(&csv_path, e))?;
    let summary = out.trace.json_summary(out.lyapunov.as_ref());
    write_file(&dir.join(format!("{name}_summary.json")), &to_json(&summary))?;
    Ok((csv_path, summary))
}

fn read_csv(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Numerical(format!("cannot read {}: {e}", path.display())))
}

fn plot_files(dir: &Path, stem: &str, traces: &[(&str, &Path)]) -> Result<(), Failure> {
    let mut inputs = Vec::new();
    let mut norms = Vec::new();
    for (label, csv_path) in traces {
        let text = read_csv(csv_path)?;
        inputs.push(plot::read_series(&text, "u_held", label).map_err(Failure::Numerical)?);
        norms.push(plot::read_series(&text, "u_norm", label).map_err(Failure::Numerical)?);
    }
    write_file(
        &dir.join(format!("{stem}_input.svg")),
        &plot::line_chart("Control input", "t", "U(t)", &inputs),
    )?;
    write_file(
        &dir.join(format!("{stem}_norm.svg")),
        &plot::line_chart("State norm", "t", "||u(t)||", &norms),
    )
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn cmd_simulate(path: &Path, mode: Option<Mode>, output: &OutputArgs, diagnostics: bool) -> Result<(), Failure> {
    let cfg = Config::load(path)?;
    let mode = mode.unwrap_or(cfg.run.mode);
    if mode == Mode::Etc && cfg.trigger.is_none() {
        return Err(Failure::Config("ETC mode needs a [trigger] section".into()));
    }
    ensure_dir(&output.out)?;
    let out = simulate(&cfg, mode)?;
    let (csv_path, summary) = write_trace(&output.out, &out, diagnostics)?;
    if output.plot.is_some() {
        plot_files(&output.out, mode_name(mode), &[(mode_name(mode), &csv_path)])?;
    }
    print!("{}", to_json(&summary));
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    etc: JsonSummary,
    ctc: JsonSummary,
    /// ETC updates as a fraction of CTC updates.
    update_fraction: f64,
    /// Final ETC norm over final CTC norm.
    final_norm_factor: f64,
}

fn cmd_compare(path: &Path, output: &OutputArgs) -> Result<(), Failure> {
    let cfg = Config::load(path)?;
    if cfg.trigger.is_none() {
        return Err(Failure::Config("compare needs a [trigger] section".into()));
    }
    ensure_dir(&output.out)?;
    let (etc, ctc) = thread::scope(|s| {
        let etc = s.spawn(|| simulate(&cfg, Mode::Etc));
        let ctc = s.spawn(|| simulate(&cfg, Mode::Ctc));
        (
            etc.join().expect("ETC leg panicked"),
            ctc.join().expect("CTC leg panicked"),
        )
    });
    let (etc, ctc) = (etc?, ctc?);
    let (etc_csv, etc_summary) = write_trace(&output.out, &etc, false)?;
    let (ctc_csv, ctc_summary) = write_trace(&output.out, &ctc, false)?;
    let last = |t: &Trace| t.rows.last().map_or(0.0, |r| r.u_norm);
    let summary = CompareSummary {
        update_fraction: etc_summary.event_count as f64 / ctc_summary.event_count as f64,
        final_norm_factor: last(&etc.trace) / last(&ctc.trace),
        etc: etc_summary,
        ctc: ctc_summary,
    };
    write_file(&output.out.join("compare_summary.json"), &to_json(&summary))?;
    if output.plot.is_some() {
        plot_files(&output.out, "compare", &[("ETC", &etc_csv), ("CTC", &ctc_csv)])?;
    }
    print!("{}", to_json(&summary));
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

const PDE_RATIO: (f64, f64) = (3.0, 5.0);
const EXACT_ZERO: f64 = 1e-12;
const ROUND_TRIP_AT_200: f64 = 1e-5;

fn cmd_verify(path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(path)?;
    let profile = cfg.plant.profile();
    let eps = cfg.plant.epsilon();
    let series = cfg.run.series;
    let order_cap = |n: usize| profile.max_derivative_order().map_or(n, |o| o.min(n));
    let mut checks = Vec::new();

    let gevrey = check_gevrey(profile, order_cap(DEFAULT_GEVREY_ORDER), &default_gevrey_samples())?;
    checks.push(Check {
        name: "profile derivative bound",
        pass: gevrey.pass,
        detail: format!("max |λ⁽ⁿ⁾|/(D^(n+1) n!) = {:.4}", gevrey.max_ratio),
    });

    let pde = verify_kernel_pde(profile, eps, 1e-2, 1e-2, series)?;
    let in_ratio = |r: Option<f64>| r.is_some_and(|v| (PDE_RATIO.0..=PDE_RATIO.1).contains(&v));
    let exact = pde.k_coarse <= EXACT_ZERO && pde.l_coarse <= EXACT_ZERO;
    checks.push(Check {
        name: "kernel PDE residual",
        pass: pde.boundary_max <= EXACT_ZERO && (exact || (in_ratio(pde.k_ratio) && in_ratio(pde.l_ratio))),
        detail: format!(
            "K {:.2e} -> {:.2e}, L {:.2e} -> {:.2e}, boundary {:.2e}",
            pde.k_coarse, pde.k_fine, pde.l_coarse, pde.l_fine, pde.boundary_max
        ),
    });

    let bounds = verify_kernel_bounds(profile, eps, &BoundGrid::default(), series)?;
    let worst = bounds.checks.iter().map(|c| c.max_observed / c.cap).fold(0.0, f64::max);
    checks.push(Check {
        name: "kernel magnitude bounds",
        pass: bounds.all_pass(),
        detail: format!(
            "{} violations over {} samples, tightest ratio {worst:.3}",
            bounds.violations(),
            bounds.samples
        ),
    });

    let coeff = verify_coefficient_bound(profile, eps, order_cap(30), &default_gevrey_samples())?;
    checks.push(Check {
        name: "series coefficient bound",
        pass: coeff.pass,
        detail: format!("max ratio {:.4}", coeff.max_ratio),
    });

    let grid = SpatialGrid::new(cfg.run.n_cells)?;
    let u = cfg.run.initial.state(&grid)?;
    let w = to_target(&u, profile, eps, series)?;
    let back = from_target(&w, profile, eps, series)?;
    let err: Vec<f64> = back.u.iter().zip(&u.u).map(|(a, b)| a - b).collect();
    let norm = u.l2_norm();
    let rel = if norm > 0.0 {
        etbc::plant::l2_norm(&err) / norm
    } else {
        0.0
    };
    let tol = ROUND_TRIP_AT_200 * (200.0 / grid.n_cells() as f64).powi(2);
    checks.push(Check {
        name: "transform round trip",
        pass: rel <= tol,
        detail: format!("relative error {rel:.2e} (tolerance {tol:.1e})"),
    });

    for c in &checks {
        println!("{} {:<26} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "info q margin                  {}",
        if cfg.plant.check_q_margin() {
            "holds"
        } else {
            "violated"
        }
    );
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Rejected(format!("{failed} check(s) failed")))
    }
}
