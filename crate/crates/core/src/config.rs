//! TOML experiment configuration.
//!
//! Sections: `scenario`, `battery`, `grid`, `costs`, `weights`,
//! `experiment`. Every key of the first five is required except where
//! marked optional; a missing key fails parsing with its name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{Fault, Z0Mode};
use crate::error::{Error, Result};
use crate::model::{
    BatteryParams, CostFn, CostModel, GridParams, Model, ValidationReport, Weights,
};
use crate::scenario::{generate_trace, load_trace, StageProfile, Trace};
use crate::simulator::{Policy, RunOptions};

/// Environment variable that overrides `experiment.out_dir`.
pub const OUT_DIR_ENV: &str = "ESM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Slots per run `T_o`.
    pub horizon: usize,
    pub seed: u64,
    /// Trace CSV to replay instead of generating one. Relative paths are
    /// resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// Generator profile; the built-in stage profile when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<StageProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    /// Coefficient of the quadratic usage cost `k_u·x²`.
    pub k_u: f64,
    /// Coefficient of the quadratic delay cost; `1/(d^max)²` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_d: Option<f64>,
    /// Exponent for a power-law usage cost `k_u·x^p` instead of quadratic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage_exponent: Option<f64>,
}

impl CostsConfig {
    pub fn to_model(&self) -> CostModel {
        let usage = match self.usage_exponent {
            Some(p) => CostFn::Power {
                k: self.k_u,
                exponent: p,
            },
            None => CostFn::quadratic(self.k_u),
        };
        CostModel {
            usage,
            delay: self.k_d.map(CostFn::quadratic),
        }
    }
}

/// Sweep axes; an omitted axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_t_max: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

/// Settings of the `verify` battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub equivalence_cases: usize,
    /// Horizon of the look-ahead comparison.
    pub small_horizon: usize,
    /// Slot length of the small instance, so that it still spans a day.
    pub small_slot_minutes: u32,
    pub frame_len: usize,
    pub oracle_step: f64,
    pub node_limit: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            equivalence_cases: 1000,
            small_horizon: 24,
            small_slot_minutes: 60,
            frame_len: 4,
            oracle_step: 0.0165,
            node_limit: crate::oracle::lookahead::DEFAULT_NODE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policies: Vec<Policy>,
    pub replications: usize,
    pub out_dir: PathBuf,
    /// Worker threads; all cores when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub z0_mode: Z0Mode,
    /// Test hook; leave at `none`.
    #[serde(default)]
    pub fault: Fault,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub battery: BatteryParams,
    pub grid: GridParams,
    pub costs: CostsConfig,
    pub weights: Weights,
    pub experiment: ExperimentConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn defaults() -> Self {
        Self {
            scenario: ScenarioConfig {
                horizon: 288,
                seed: 1,
                trace: None,
                profile: None,
            },
            battery: BatteryParams::defaults(),
            grid: GridParams::defaults(),
            costs: CostsConfig {
                k_u: 0.2,
                k_d: None,
                usage_exponent: None,
            },
            weights: Weights::defaults(),
            experiment: ExperimentConfig {
                policies: Policy::ALL.to_vec(),
                replications: 20,
                out_dir: PathBuf::from("out"),
                workers: None,
                z0_mode: Z0Mode::Shifted,
                fault: Fault::None,
                sweep: SweepAxes::default(),
                verify: VerifyConfig::default(),
            },
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn profile(&self) -> StageProfile {
        self.scenario
            .profile
            .clone()
            .unwrap_or_else(StageProfile::defaults)
    }

    pub fn model(&self) -> Model {
        Model {
            battery: self.battery,
            grid: self.grid,
            costs: self.costs.to_model(),
            weights: self.weights,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            z0_mode: self.experiment.z0_mode,
            fault: self.experiment.fault,
            keep_records: true,
        }
    }

    /// The configured trace file, or a generated trace for `seed`.
    pub fn trace(&self, seed: u64) -> Result<Trace> {
        match &self.scenario.trace {
            Some(p) => load_trace(self.base_dir.join(p)),
            None => generate_trace(&self.profile(), self.scenario.horizon, seed),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = self.model().validate(self.scenario.horizon);
        if self.scenario.trace.is_none() {
            let profile = self.profile();
            r.merge(profile.validate());
            if (profile.max_delay as f64) < self.weights.d_avg_max {
                r.warning(
                    "weights.d_avg_max",
                    "exceeds every load's delay cap, so the average-delay constraint is slack",
                );
            }
        }
        let e = &self.experiment;
        if e.replications < 1 {
            r.error("experiment.replications", "must be >= 1");
        }
        if e.policies.is_empty() {
            r.error("experiment.policies", "must name at least one policy");
        }
        let s = &e.sweep;
        let lens = [
            ("experiment.sweep.d_max", s.d_max.as_ref().map(Vec::len)),
            ("experiment.sweep.d_t_max", s.d_t_max.as_ref().map(Vec::len)),
            ("experiment.sweep.b_max", s.b_max.as_ref().map(Vec::len)),
            ("experiment.sweep.alpha", s.alpha.as_ref().map(Vec::len)),
            ("experiment.sweep.mu", s.mu.as_ref().map(Vec::len)),
        ];
        for (field, len) in lens {
            if len == Some(0) {
                r.error(field, "sweep list must not be empty");
            }
        }
        let v = &e.verify;
        if v.frame_len == 0 || !v.small_horizon.is_multiple_of(v.frame_len.max(1)) {
            r.error(
                "experiment.verify.frame_len",
                "must be positive and divide small_horizon",
            );
        }
        if !(v.oracle_step > 0.0) {
            r.error("experiment.verify.oracle_step", "must be positive");
        }
        r
    }

    /// Output directory: explicit override, then the environment, then the
    /// config value (relative to the config file).
    pub fn out_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_override {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|p| !p.is_empty()) {
            return PathBuf::from(p);
        }
        self.base_dir.join(&self.experiment.out_dir)
    }
}
