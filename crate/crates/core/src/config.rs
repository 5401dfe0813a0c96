//! Scenario files.
//!
//! A scenario is one JSON document. Every block except `ego` and `targets`
//! may be omitted, and every field inside a block has a default. Unknown
//! keys are rejected.
//!
//! ```json
//! {
//!   "ego": { "s": 0.0, "v": 8.333, "v_set": 8.333 },
//!   "targets": [ { "s0": -30.0, "v0": 8.333 }, { "s0": -10.0, "v0": 8.333 } ]
//! }
//! ```
//!
//! The destination lane is centred on `d = 0`; the ego starts one lane
//! width to the left unless `ego.d` says otherwise.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::opportunity::OpportunityConfig;
use crate::planner::PlannerConfig;
use crate::prediction::{TargetMotion, DEFAULT_DECAY};
use crate::smoother::SmootherConfig;

pub const DEFAULT_LANE_WIDTH: f64 = 3.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoConfig {
    #[serde(default)]
    pub s: f64,
    /// Lateral offset; `None` puts the ego one lane width from the target
    /// lane centre.
    #[serde(default)]
    pub d: Option<f64>,
    pub v: f64,
    #[serde(default)]
    pub a: f64,
    /// Speed held on open road; defaults to the initial speed.
    #[serde(default)]
    pub v_set: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub s0: f64,
    pub v0: f64,
    #[serde(default, alias = "A0")]
    pub a0: f64,
    #[serde(default = "default_decay", alias = "T")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

impl TargetConfig {
    pub fn motion(&self) -> TargetMotion {
        TargetMotion { s0: self.s0, v0: self.v0, a0: self.a0, decay: self.decay }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneConfig {
    pub lane_width: f64,
    pub lane_count: usize,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self { lane_width: DEFAULT_LANE_WIDTH, lane_count: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub replan_period: f64,
    /// How long the ego must stay settled after the plan ends.
    pub settle_time: f64,
    pub settle_p: [f64; 2],
    pub settle_speed: f64,
    /// Smooth the planned trajectory before tracking it.
    pub smooth: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            duration: 40.0,
            replan_period: 0.5,
            settle_time: 2.0,
            settle_p: [0.4, 0.6],
            settle_speed: 0.5,
            smooth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ego: EgoConfig,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub lane: LaneConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub opportunity: OpportunityConfig,
    #[serde(default)]
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("override `{0}`: expected key=value")]
    Override(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema { field: field.into(), message: message.into() }
}

fn check(field: &str, ok: bool, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(field, message))
    }
}

impl ScenarioConfig {
    pub fn minimal(v: f64, targets: Vec<TargetConfig>) -> Self {
        Self {
            ego: EgoConfig { s: 0.0, d: None, v, a: 0.0, v_set: None },
            targets,
            lane: LaneConfig::default(),
            planner: PlannerConfig::default(),
            opportunity: OpportunityConfig::default(),
            smoother: SmootherConfig::default(),
            sim: SimConfig::default(),
        }
    }

    pub fn ego_d(&self) -> f64 {
        self.ego.d.unwrap_or(self.lane.lane_width)
    }

    pub fn v_set(&self) -> f64 {
        self.ego.v_set.unwrap_or(self.ego.v)
    }

    /// Fills in every optional value so the echo is fully explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.ego.d = Some(self.ego_d());
        out.ego.v_set = Some(self.v_set());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = |v: f64| v.is_finite();
        check("ego.s", finite(self.ego.s), "must be finite")?;
        check("ego.d", finite(self.ego_d()), "must be finite")?;
        check("ego.v", finite(self.ego.v) && self.ego.v >= 0.0, "must be a non-negative speed")?;
        check("ego.a", finite(self.ego.a), "must be finite")?;
        check("ego.v_set", finite(self.v_set()) && self.v_set() >= 0.0, "must be a non-negative speed")?;
        for (i, t) in self.targets.iter().enumerate() {
            let field = |name: &str| format!("targets[{i}].{name}");
            check(&field("s0"), finite(t.s0), "must be finite")?;
            check(&field("v0"), finite(t.v0) && t.v0 >= 0.0, "must be a non-negative speed")?;
            check(&field("a0"), finite(t.a0), "must be finite")?;
            check(&field("decay"), finite(t.decay) && t.decay > 0.0, "must be positive")?;
        }
        check("lane.lane_width", finite(self.lane.lane_width) && self.lane.lane_width > 0.0, "must be positive")?;
        check("lane.lane_count", self.lane.lane_count >= 2, "a merge needs at least 2 lanes")?;
        let s = &self.sim;
        check("sim.dt", finite(s.dt) && s.dt > 0.0 && s.dt <= 0.05, "must lie in (0, 0.05]")?;
        check("sim.duration", finite(s.duration) && s.duration > 0.0, "must be positive")?;
        check("sim.replan_period", finite(s.replan_period) && s.replan_period > 0.0, "must be positive")?;
        check("sim.settle_time", finite(s.settle_time) && s.settle_time >= 0.0, "must be non-negative")?;
        check("sim.settle_p", s.settle_p[0] <= s.settle_p[1], "must be an increasing pair")?;
        check("sim.settle_speed", s.settle_speed >= 0.0, "must be non-negative")?;
        let p = &self.planner;
        check("planner.te_min", p.te_min > 0.0 && p.te_min <= p.te_max, "must satisfy 0 < te_min <= te_max")?;
        check("planner.te_step", p.te_step > 0.0, "must be positive")?;
        check("planner.grid_step", p.grid_step > 0.0, "must be positive")?;
        check("planner.sample_dt", p.sample_dt > 0.0, "must be positive")?;
        for (name, v) in [("k_t", p.k_t), ("ka", p.ka), ("kj", p.kj), ("kd", p.kd), ("kds", p.kds), ("kdv", p.kdv)] {
            check(&format!("planner.{name}"), finite(v) && v >= 0.0, "must be non-negative")?;
        }
        let o = &self.opportunity;
        check("opportunity.weights", o.weights.is_valid(), "must be non-negative and not all zero")?;
        check("opportunity.a_step", o.a_step > 0.0 && o.a_min <= o.a_max, "needs a_min <= a_max and a positive step")?;
        check("opportunity.t_step", o.t_step > 0.0 && o.t_min <= o.t_max, "needs t_min <= t_max and a positive step")?;
        check("opportunity.ttc_safe", o.ttc_safe > 0.0, "must be positive")?;
        self.smoother.validate().map_err(|m| invalid("smoother", m))?;
        Ok(())
    }
}

/// Parses and validates a scenario, applying `key=value` overrides first.
/// Dotted keys address nested fields; values are read as JSON where
/// possible and as strings otherwise.
pub fn parse_scenario(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        invalid(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &std::path::Path, overrides: &[(String, String)]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
    parse_scenario(&text, overrides)
}

pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::Override(arg.to_string())),
    }
}

fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| invalid(key, "expected an array index"))?;
                let slot = items.get_mut(idx).ok_or_else(|| invalid(key, "array index out of range"))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(invalid(key, "cannot descend into a scalar")),
        };
    }
    Err(ConfigError::Override(key.to_string()))
}
