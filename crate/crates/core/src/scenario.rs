//! Scenario files.
//!
//! A scenario is a JSON object. Only `traffic` is required; everything else
//! falls back to the testbed calibration:
//!
//! ```json
//! {
//!   "name": "scenario1",
//!   "notes": "free text",
//!   "seed": 1,
//!   "traffic": { "n_users": 2, "mean_on": 300, "mean_off": 240,
//!                "min_on": 120, "min_off": 120, "fps": 30,
//!                "duration": 3600, "min_mode": "truncate" },
//!   "frames": { "ul_bitrate": 4.3e6, "dl_bitrate": 1.5e6, "size_jitter": 0 },
//!   "ul_space": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 106],
//!   "dl_space": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 106],
//!   "gpu_space": [500, 600, 700, 800, 900, 1000, 1100, 1200, 1300, 1400, 1500, 1600],
//!   "q_c": 0.150,
//!   "budgets": "auto",
//!   "budget_split": { "base_delays": { "ul": 0.012, "edge": 0.009, "dl": 0.019 },
//!                     "ratios": { "ul": 5, "edge": 2, "dl": 3 } },
//!   "slot_len": 5,
//!   "calibration": { "ul_full_rate": 22e6, "dl_full_rate": 44e6, "prb_max": 106,
//!                    "ul_fixed": 0.0055, "dl_fixed": 0.0179,
//!                    "gpu_base": 0.009, "f_max": 1600, "gpu_exponent": 1 },
//!   "power": { "gpu_k": 1, "gpu_const": 1, "bs_sleep": 1, "ue_sleep": 1,
//!              "a_dl_max": 106, "a_ul_max": 106 },
//!   "schemes": ["static", "tcp", "ucb1", "mucb1"],
//!   "trailing_window": 100
//! }
//! ```
//!
//! `budgets` is either `"auto"` (split `q_c` with `budget_split`) or an
//! explicit `{ "ul": .., "edge": .., "dl": .. }` in seconds that must add up
//! to `q_c`. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::ActionSpace;
use crate::control::{split_budget, ControlConfig, FrameProfile, HopBudgets, SchemeKind};
use crate::metrics::PowerParams;
use crate::sim::{Direction, GpuHopModel, RadioHopModel, SimConfig};
use crate::traffic::TrafficConfig;

/// Length of the state-measurement sub-intervals.
pub const SUBINTERVAL: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calibration {
    pub ul_full_rate: f64,
    pub dl_full_rate: f64,
    pub prb_max: u32,
    pub ul_fixed: f64,
    pub dl_fixed: f64,
    pub gpu_base: f64,
    pub f_max: f64,
    pub gpu_exponent: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        let ul = RadioHopModel::uplink_default();
        let dl = RadioHopModel::downlink_default();
        let gpu = GpuHopModel::default();
        Self {
            ul_full_rate: ul.full_rate,
            dl_full_rate: dl.full_rate,
            prb_max: ul.prb_max,
            ul_fixed: ul.fixed_latency,
            dl_fixed: dl.fixed_latency,
            gpu_base: gpu.base_service,
            f_max: gpu.f_max,
            gpu_exponent: gpu.scaling_exponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSplit {
    pub base_delays: HopBudgets,
    pub ratios: HopBudgets,
}

impl Default for BudgetSplit {
    /// Single-flow average delays at full allocation, cost ratios 5 / 2 / 3.
    fn default() -> Self {
        Self {
            base_delays: HopBudgets {
                ul: 0.012,
                edge: 0.009,
                dl: 0.019,
            },
            ratios: HopBudgets {
                ul: 5.0,
                edge: 2.0,
                dl: 3.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetSpec {
    Keyword(String),
    Explicit(HopBudgets),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    notes: Option<String>,
    #[serde(default)]
    seed: u64,
    traffic: TrafficConfig,
    #[serde(default)]
    frames: FrameProfile,
    #[serde(default = "ActionSpace::default_prbs")]
    ul_space: ActionSpace,
    #[serde(default = "ActionSpace::default_prbs")]
    dl_space: ActionSpace,
    #[serde(default = "ActionSpace::default_gpu")]
    gpu_space: ActionSpace,
    #[serde(default = "default_q_c")]
    q_c: f64,
    #[serde(default)]
    budgets: Option<BudgetSpec>,
    #[serde(default)]
    budget_split: BudgetSplit,
    #[serde(default = "default_slot_len")]
    slot_len: f64,
    #[serde(default)]
    calibration: Calibration,
    #[serde(default)]
    power: PowerParams,
    #[serde(default = "default_schemes")]
    schemes: Vec<SchemeKind>,
    #[serde(default = "default_window")]
    trailing_window: usize,
}

fn default_q_c() -> f64 {
    0.150
}

fn default_slot_len() -> f64 {
    5.0
}

fn default_schemes() -> Vec<SchemeKind> {
    SchemeKind::ALL.to_vec()
}

fn default_window() -> usize {
    100
}

/// Validated scenario with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub notes: Option<String>,
    pub seed: u64,
    pub traffic: TrafficConfig,
    pub frames: FrameProfile,
    pub ul_space: ActionSpace,
    pub dl_space: ActionSpace,
    pub gpu_space: ActionSpace,
    pub q_c: f64,
    pub budgets: HopBudgets,
    pub slot_len: f64,
    pub calibration: Calibration,
    pub power: PowerParams,
    pub schemes: Vec<SchemeKind>,
    pub trailing_window: usize,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    parse_config(&text, &fallback)
}

/// Parses and validates scenario JSON; `fallback_name` is used when the
/// document has no `name`.
pub fn parse_config(text: &str, fallback_name: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    let mut traffic = file.traffic;
    traffic.seed = file.seed;
    traffic
        .validate()
        .map_err(|e| invalid("traffic", e.to_string()))?;

    if !(file.q_c > 0.0) {
        return Err(invalid("q_c", "must be positive"));
    }
    let budgets = match file.budgets {
        None => auto_budgets(file.q_c, &file.budget_split)?,
        Some(BudgetSpec::Keyword(k)) if k == "auto" => auto_budgets(file.q_c, &file.budget_split)?,
        Some(BudgetSpec::Keyword(k)) => {
            return Err(invalid("budgets", format!("expected \"auto\" or an object, got {k:?}")))
        }
        Some(BudgetSpec::Explicit(b)) => {
            if [b.ul, b.edge, b.dl].iter().any(|x| !(*x > 0.0)) {
                return Err(invalid("budgets", "every hop budget must be positive"));
            }
            if (b.total() - file.q_c).abs() > 1e-9 {
                return Err(invalid(
                    "budgets",
                    format!(
                        "hop budgets sum to {} s but q_c is {} s",
                        b.total(),
                        file.q_c
                    ),
                ));
            }
            b
        }
    };

    if !(file.slot_len > 0.0) {
        return Err(invalid("slot_len", "must be positive"));
    }
    let k = file.slot_len / SUBINTERVAL;
    if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
        return Err(invalid("slot_len", "must be a multiple of 0.2 s"));
    }
    if file.schemes.is_empty() {
        return Err(invalid("schemes", "at least one scheme is required"));
    }
    if file.trailing_window == 0 {
        return Err(invalid("trailing_window", "must be at least 1"));
    }
    let f = &file.frames;
    if !(f.ul_bitrate > 0.0) || !(f.dl_bitrate > 0.0) {
        return Err(invalid("frames", "bitrates must be positive"));
    }
    if !(0.0..1.0).contains(&f.size_jitter) {
        return Err(invalid("frames", "size_jitter must be in [0, 1)"));
    }
    let p = &file.power;
    if [p.gpu_k, p.gpu_const, p.bs_sleep, p.ue_sleep, p.a_dl_max, p.a_ul_max]
        .iter()
        .any(|x| !(*x > 0.0))
    {
        return Err(invalid("power", "all power parameters must be positive"));
    }

    let cfg = ScenarioConfig {
        name: file.name.unwrap_or_else(|| fallback_name.to_string()),
        notes: file.notes,
        seed: file.seed,
        traffic,
        frames: file.frames,
        ul_space: file.ul_space,
        dl_space: file.dl_space,
        gpu_space: file.gpu_space,
        q_c: file.q_c,
        budgets,
        slot_len: file.slot_len,
        calibration: file.calibration,
        power: file.power,
        schemes: file.schemes,
        trailing_window: file.trailing_window,
    };
    cfg.sim_config()
        .validate()
        .map_err(|e| invalid("calibration", e.to_string()))?;
    if cfg.ul_space.max() as f64 > cfg.power.a_ul_max || cfg.dl_space.max() as f64 > cfg.power.a_dl_max {
        return Err(invalid("power", "a_ul_max / a_dl_max below the action space"));
    }
    Ok(cfg)
}

fn auto_budgets(q_c: f64, split: &BudgetSplit) -> Result<HopBudgets, ConfigError> {
    let b = split.base_delays;
    let r = split.ratios;
    split_budget(q_c, (b.ul, b.edge, b.dl), (r.ul, r.edge, r.dl))
        .map_err(|e| invalid("budgets", e.to_string()))
}

impl ScenarioConfig {
    pub fn sim_config(&self) -> SimConfig {
        let c = &self.calibration;
        SimConfig {
            uplink: RadioHopModel {
                direction: Direction::Uplink,
                full_rate: c.ul_full_rate,
                prb_max: c.prb_max,
                fixed_latency: c.ul_fixed,
            },
            downlink: RadioHopModel {
                direction: Direction::Downlink,
                full_rate: c.dl_full_rate,
                prb_max: c.prb_max,
                fixed_latency: c.dl_fixed,
            },
            gpu: GpuHopModel {
                base_service: c.gpu_base,
                f_max: c.f_max,
                scaling_exponent: c.gpu_exponent,
            },
            ul_space: self.ul_space.clone(),
            gpu_space: self.gpu_space.clone(),
            dl_space: self.dl_space.clone(),
            slot_len: self.slot_len,
            subinterval: SUBINTERVAL,
        }
    }

    pub fn control_config(&self, scheme: SchemeKind) -> ControlConfig {
        ControlConfig {
            sim: self.sim_config(),
            scheme,
            budgets: self.budgets,
            q_c: self.q_c,
            fps: self.traffic.fps,
            frames: self.frames,
        }
    }

    /// Whole slots that fit in the scenario.
    pub fn n_slots(&self) -> u64 {
        (self.traffic.duration / self.slot_len + 1e-9).floor() as u64
    }
}
