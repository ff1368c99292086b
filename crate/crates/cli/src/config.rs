//! TOML run configuration with sections `[plant]`, `[grid]`, `[trigger]` and
//! `[run]`. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use etbc::closed_loop::{EventRefine, InitialCondition, Mode, RunConfig, TriggerSpec};
use etbc::profile::TabulatedProfile;
use etbc::trigger::{SynthesisInputs, TriggerParams};
use etbc::{PlantConfig, ProfileKind, ReactionProfile, SeriesConfig, SpatialGrid};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<etbc::Error> for ConfigError {
    fn from(e: etbc::Error) -> Self {
        Self(e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    plant: PlantSection,
    #[serde(default)]
    grid: GridSection,
    trigger: Option<TriggerSection>,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantSection {
    epsilon: f64,
    q: f64,
    profile: ProfileSection,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ProfileName {
    Constant,
    RationalDecay,
    Sinusoid,
    Tabulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileSection {
    kind: ProfileName,
    #[serde(rename = "D")]
    d: f64,
    lambda0: Option<f64>,
    a: Option<f64>,
    amplitude: Option<f64>,
    omega: Option<f64>,
    knots: Option<Vec<f64>>,
    derivatives: Option<Vec<Vec<f64>>>,
}

impl ProfileSection {
    fn build(self) -> Result<ReactionProfile, ConfigError> {
        let supplied = [
            ("lambda0", self.lambda0.is_some()),
            ("a", self.a.is_some()),
            ("amplitude", self.amplitude.is_some()),
            ("omega", self.omega.is_some()),
            ("knots", self.knots.is_some()),
            ("derivatives", self.derivatives.is_some()),
        ];
        let wanted: &[&str] = match self.kind {
            ProfileName::Constant => &["lambda0"],
            ProfileName::RationalDecay => &["a"],
            ProfileName::Sinusoid => &["amplitude", "omega"],
            ProfileName::Tabulated => &["knots", "derivatives"],
        };
        for (name, present) in supplied {
            if present && !wanted.contains(&name) {
                return Err(ConfigError(format!(
                    "plant.profile: `{name}` does not apply to kind {:?}",
                    self.kind
                )));
            }
            if !present && wanted.contains(&name) {
                return Err(ConfigError(format!(
                    "plant.profile: kind {:?} needs `{name}`",
                    self.kind
                )));
            }
        }
        let kind = match self.kind {
            ProfileName::Constant => ProfileKind::Constant {
                lambda0: self.lambda0.unwrap(),
            },
            ProfileName::RationalDecay => ProfileKind::RationalDecay { a: self.a.unwrap() },
            ProfileName::Sinusoid => ProfileKind::Sinusoid {
                amplitude: self.amplitude.unwrap(),
                omega: self.omega.unwrap(),
            },
            ProfileName::Tabulated => {
                ProfileKind::Tabulated(TabulatedProfile::new(self.knots.unwrap(), self.derivatives.unwrap())?)
            }
        };
        Ok(ReactionProfile::new(kind, self.d)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(default = "default_cells")]
    n_cells: usize,
}

fn default_cells() -> usize {
    RunConfig::DEFAULT_N_CELLS
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_cells: default_cells(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriggerSection {
    gamma: f64,
    eta: f64,
    sigma: f64,
    m0: f64,
    kappa: Option<f64>,
    #[serde(rename = "B")]
    b: Option<f64>,
    rho: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_mode")]
    mode: Mode,
    #[serde(default = "default_stride")]
    snapshot_stride: usize,
    #[serde(default)]
    event_refine: EventRefine,
    #[serde(default = "default_initial")]
    initial: InitialCondition,
    #[serde(default = "default_rel_tol")]
    series_rel_tol: f64,
    #[serde(default = "default_max_terms")]
    series_max_terms: usize,
}

fn default_dt() -> f64 {
    RunConfig::DEFAULT_DT
}
fn default_horizon() -> f64 {
    RunConfig::DEFAULT_HORIZON
}
fn default_mode() -> Mode {
    Mode::Etc
}
fn default_stride() -> usize {
    RunConfig::DEFAULT_SNAPSHOT_STRIDE
}
fn default_initial() -> InitialCondition {
    InitialCondition::Bump { amplitude: 10.0 }
}
fn default_rel_tol() -> f64 {
    SeriesConfig::default().rel_tol
}
fn default_max_terms() -> usize {
    SeriesConfig::default().max_terms
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            mode: default_mode(),
            snapshot_stride: default_stride(),
            event_refine: EventRefine::default(),
            initial: default_initial(),
            series_rel_tol: default_rel_tol(),
            series_max_terms: default_max_terms(),
        }
    }
}

/// Trigger design from the configuration.
#[derive(Debug, Clone)]
pub enum TriggerChoice {
    Synthesize(SynthesisInputs),
    Explicit(TriggerParams),
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub plant: PlantConfig,
    pub trigger: Option<(TriggerChoice, f64)>,
    pub run: RunConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        let plant = PlantConfig::new(file.plant.epsilon, file.plant.q, file.plant.profile.build()?)?;

        let trigger = file.trigger.map(build_trigger).transpose()?;
        let series = SeriesConfig {
            rel_tol: file.run.series_rel_tol,
            max_terms: file.run.series_max_terms,
        };
        series.validate()?;
        let mut run = RunConfig::new(plant.clone(), file.run.mode, file.run.initial);
        run.n_cells = file.grid.n_cells;
        run.dt = file.run.dt;
        run.horizon = file.run.horizon;
        run.snapshot_stride = file.run.snapshot_stride;
        run.event_refine = file.run.event_refine;
        run.series = series;
        run.trigger = trigger.as_ref().map(|(choice, m0)| match choice {
            TriggerChoice::Synthesize(inputs) => TriggerSpec::Synthesize {
                inputs: *inputs,
                m0: *m0,
            },
            TriggerChoice::Explicit(p) => TriggerSpec::Params(*p),
        });
        run.initial.state(&SpatialGrid::new(run.n_cells)?)?;
        let probe = RunConfig {
            mode: Mode::OpenLoop,
            ..run.clone()
        };
        probe.validate()?;
        Ok(Self { plant, trigger, run })
    }

    /// Synthesis inputs, when the trigger is synthesised rather than explicit.
    pub fn synthesis_inputs(&self) -> Option<SynthesisInputs> {
        match self.trigger {
            Some((TriggerChoice::Synthesize(inputs), _)) => Some(inputs),
            _ => None,
        }
    }

    pub fn run_config(&self, mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            ..self.run.clone()
        }
    }
}

fn build_trigger(t: TriggerSection) -> Result<(TriggerChoice, f64), ConfigError> {
    let explicit = [t.rho, t.beta1, t.beta2];
    let choice = match explicit {
        [None, None, None] => {
            let inputs = SynthesisInputs {
                kappa: t.kappa,
                b: t.b,
                ..SynthesisInputs::new(t.gamma, t.eta, t.sigma)
            };
            // range checks only; feasibility is reported by `synth`
            TriggerParams::new(t.gamma, t.eta, 1.0, 1.0, 1.0, t.sigma, t.m0)?;
            TriggerChoice::Synthesize(inputs)
        }
        [Some(rho), Some(beta1), Some(beta2)] => {
            if t.kappa.is_some() || t.b.is_some() {
                return Err(ConfigError(
                    "trigger: `kappa`/`B` apply to synthesis and cannot be combined with explicit rho/beta1/beta2"
                        .into(),
                ));
            }
            TriggerChoice::Explicit(TriggerParams::new(t.gamma, t.eta, rho, beta1, beta2, t.sigma, t.m0)?)
        }
        _ => {
            return Err(ConfigError(
                "trigger: explicit parameters need all of rho, beta1 and beta2".into(),
            ))
        }
    };
    Ok((choice, t.m0))
}
