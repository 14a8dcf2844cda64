use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::control::{ControllerConfig, JumpEvent, NoiseWindow};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, ParticleConfig};
use crate::models::DubinsModel;
use crate::oracle::DpConfig;
use crate::sde::TimeGrid;

/// Experiment identifiers accepted by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Lq10,
    Heat,
    Dubins,
    DubinsJump,
    FilterCompare,
    DpCompare,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Lq10,
        Scenario::Heat,
        Scenario::Dubins,
        Scenario::DubinsJump,
        Scenario::FilterCompare,
        Scenario::DpCompare,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Lq10 => "lq10",
            Scenario::Heat => "heat",
            Scenario::Dubins => "dubins",
            Scenario::DubinsJump => "dubins-jump",
            Scenario::FilterCompare => "filter-compare",
            Scenario::DpCompare => "dp-compare",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// Time grid `[0, horizon]` split into `steps` equal intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.horizon, self.steps)
    }
}

/// Model family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Lq {
        dim: usize,
        sigma: f64,
        obs_std: f64,
    },
    Heat {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        nodes: usize,
        sigma: f64,
        obs_std: f64,
    },
    Dubins {
        sigma: f64,
        obs_std: f64,
        track_weight: f64,
        control_weight: f64,
        terminal_weight: f64,
        /// Airspeed; the reference helix speed when absent.
        speed: Option<f64>,
    },
}

impl ModelConfig {
    pub fn state_dim(&self) -> usize {
        match self {
            ModelConfig::Lq { dim, .. } => *dim,
            ModelConfig::Heat { nodes, .. } => *nodes,
            ModelConfig::Dubins { .. } => 5,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ModelConfig::Lq { dim, .. } => *dim,
            ModelConfig::Heat { nodes, .. } => *nodes,
            ModelConfig::Dubins { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Kernel,
    Particle,
    /// Controller sees the true state.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSetup {
    pub kind: FilterKind,
    pub kernel: FilterConfig,
    pub particle: ParticleConfig,
    /// Standard deviation of the Gaussian prior around the initial state,
    /// one value per axis or a single value for every axis.
    pub prior_std: Vec<f64>,
}

/// Disturbances applied to the truth but hidden from the filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Disturbances {
    pub jumps: Vec<JumpEvent>,
    pub noise_windows: Vec<NoiseWindow>,
}

/// Tree-search baseline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSetup {
    /// Decision steps on the coarse grid.
    pub steps: usize,
    /// Candidate values per control axis.
    pub points: usize,
    /// Half-width of the candidate grid per axis.
    pub spread: Vec<f64>,
    pub search: DpConfig,
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Seed of the first repeat; repeat `i` uses `seed + i`.
    pub seed: u64,
    pub repeats: usize,
    pub grid: GridConfig,
    pub model: ModelConfig,
    /// Initial state; the scenario's canonical start when absent.
    pub initial_state: Option<Vec<f64>>,
    pub filter: FilterSetup,
    pub controller: ControllerConfig,
    /// Constant control used to seed the first SGD schedule.
    pub initial_control: Option<Vec<f64>>,
    pub disturbances: Disturbances,
    pub dp: Option<DpSetup>,
}

fn dubins_model() -> ModelConfig {
    ModelConfig::Dubins {
        sigma: 0.1,
        obs_std: 0.1,
        track_weight: 40.0,
        control_weight: 1.0,
        terminal_weight: 20.0,
        speed: None,
    }
}

fn dubins_jump() -> Disturbances {
    Disturbances {
        jumps: vec![JumpEvent {
            time: 0.5,
            displacement: vec![0.0, 0.0, -2.0, 0.0, 0.0],
        }],
        noise_windows: vec![NoiseWindow {
            start: 0.5,
            end: 0.6,
            std_factor: 10.0,
        }],
    }
}

impl ExperimentConfig {
    /// Default settings for a scenario.
    pub fn preset(scenario: Scenario) -> Self {
        let grid = GridConfig {
            horizon: 1.0,
            steps: 50,
        };
        let filter = |prior_std: Vec<f64>| FilterSetup {
            kind: FilterKind::Kernel,
            kernel: FilterConfig::default(),
            particle: ParticleConfig::default(),
            prior_std,
        };
        let dubins_controller = ControllerConfig {
            iterations: 1000,
            step: 0.01,
            ..ControllerConfig::default()
        };
        let dubins_prior = vec![0.05, 0.05, 0.05, 0.02, 0.02];
        let base = ExperimentConfig {
            scenario,
            seed: 0,
            repeats: 1,
            grid,
            model: dubins_model(),
            initial_state: None,
            filter: filter(dubins_prior),
            controller: dubins_controller,
            initial_control: Some(vec![0.0, -2.0 * PI]),
            disturbances: Disturbances::default(),
            dp: None,
        };
        match scenario {
            Scenario::Lq10 => ExperimentConfig {
                model: ModelConfig::Lq {
                    dim: 10,
                    sigma: 0.1,
                    obs_std: 0.1,
                },
                filter: filter(vec![0.05]),
                controller: ControllerConfig::default(),
                initial_control: None,
                ..base
            },
            Scenario::Heat => ExperimentConfig {
                model: ModelConfig::Heat {
                    a: 5e-5,
                    b: 5e-5,
                    c: 1.0,
                    d: 1.0,
                    nodes: 21,
                    sigma: 0.1,
                    obs_std: 0.1,
                },
                filter: filter(vec![0.1]),
                controller: ControllerConfig {
                    iterations: 10_000,
                    ..ControllerConfig::default()
                },
                initial_control: None,
                ..base
            },
            Scenario::Dubins => base,
            Scenario::DubinsJump | Scenario::FilterCompare => ExperimentConfig {
                disturbances: dubins_jump(),
                ..base
            },
            Scenario::DpCompare => ExperimentConfig {
                dp: Some(DpSetup {
                    steps: 8,
                    points: 3,
                    spread: vec![1.0, 2.0],
                    search: DpConfig::default(),
                }),
                ..base
            },
        }
    }

    /// The preset for `scenario` overridden by the fields present in `json`.
    ///
    /// Objects merge key by key; every other value replaces the preset's.
    pub fn from_json_overrides(scenario: Scenario, json: &str) -> Result<Self> {
        let overrides: Value = serde_json::from_str(json)?;
        if !overrides.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        if let Some(s) = overrides.get("scenario") {
            let named: Scenario = serde_json::from_value(s.clone())?;
            if named != scenario {
                return Err(Error::Config(format!(
                    "configuration is for scenario `{named}`, not `{scenario}`"
                )));
            }
        }
        let mut merged = serde_json::to_value(Self::preset(scenario))?;
        merge(&mut merged, overrides);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        self.grid.build()?;
        self.controller.validate()?;
        let d = self.model.state_dim();
        if d == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != d {
                return Err(Error::Config(format!(
                    "initial_state has {} entries, model dimension is {d}",
                    x0.len()
                )));
            }
        }
        let std = &self.filter.prior_std;
        if !(std.len() == 1 || std.len() == d) || std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(format!(
                "prior_std needs 1 or {d} positive entries"
            )));
        }
        if let Some(u) = &self.initial_control {
            if u.len() != self.model.control_dim() {
                return Err(Error::Config(format!(
                    "initial_control has {} entries, control dimension is {}",
                    u.len(),
                    self.model.control_dim()
                )));
            }
        }
        for jump in &self.disturbances.jumps {
            if jump.displacement.len() != d {
                return Err(Error::Config("jump displacement dimension mismatch".into()));
            }
        }
        let needs_dp = self.scenario == Scenario::DpCompare;
        match (&self.dp, needs_dp) {
            (None, true) => return Err(Error::Config("dp-compare needs a `dp` section".into())),
            (Some(dp), _) => {
                if dp.steps == 0 || dp.points == 0 || dp.search.hold == 0 {
                    return Err(Error::Config("dp steps, points and hold must be positive".into()));
                }
                if dp.spread.len() != self.model.control_dim() {
                    return Err(Error::Config("dp spread needs one entry per control".into()));
                }
            }
            _ => {}
        }
        let dubins = matches!(self.model, ModelConfig::Dubins { .. });
        let needs_dubins = matches!(
            self.scenario,
            Scenario::Dubins | Scenario::DubinsJump | Scenario::FilterCompare | Scenario::DpCompare
        );
        if needs_dubins && !dubins {
            return Err(Error::Config(format!(
                "scenario `{}` needs the dubins model",
                self.scenario
            )));
        }
        Ok(())
    }

    /// Seeds of all repeats.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.seed + i).collect()
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn initial_state(&self) -> Vec<f64> {
        if let Some(x0) = &self.initial_state {
            return x0.clone();
        }
        match &self.model {
            ModelConfig::Lq { dim, .. } => vec![0.0; *dim],
            ModelConfig::Heat { nodes, .. } => crate::oracle::heat_initial_profile(*nodes),
            ModelConfig::Dubins { .. } => DubinsModel::initial_state().to_vec(),
        }
    }

    pub fn prior_std(&self) -> Vec<f64> {
        let std = &self.filter.prior_std;
        if std.len() == 1 {
            vec![std[0]; self.model.state_dim()]
        } else {
            std.clone()
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && (k != "model" || same_kind(slot, &v)) => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match b.get("kind") {
        Some(k) => a.get("kind") == Some(k),
        None => true,
    }
}
