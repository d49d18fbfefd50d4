//! Scenario files.
//!
//! A scenario is a flat list of `section.key = value` lines (a TOML subset:
//! dotted keys, numbers, strings, booleans and arrays of numbers; `#` starts a
//! comment). Sections are `plant.`, `gains.`, `init.`, `sim.` and `outputs.`.
//! Unknown keys are rejected.
//!
//! ```text
//! plant.name = "example1"
//! gains.varsigma_z = [1.0]
//! gains.sigma_bar = 100
//! init.x0 = [2.0]
//! sim.dt = 1e-4
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::controller::ControllerGains;
use crate::error::ParamError;
use crate::perf_rate::{EpsSchedule, DEFAULT_EPS_FLOOR};
use crate::plant::{builtin_example1, builtin_example2, EXAMPLE2_STATE_BOUND};
use crate::sim::{InitialConditions, Scenario, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantName {
    Example1,
    Example2,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub name: PlantName,
    /// Expected bound on `|x1|`, used to size the second example's upper gain bound.
    #[serde(default)]
    pub state_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub varsigma_z: Vec<f64>,
    #[serde(default)]
    pub varsigma_w: Vec<f64>,
    pub iota_theta: Vec<f64>,
    #[serde(default)]
    pub iota_gamma: Vec<f64>,
    pub sigma_bar: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub rho0: f64,
    #[serde(rename = "rhoT")]
    pub rho_t: f64,
    pub upsilon_rho: f64,
    pub upsilon_sigma: f64,
    pub eps_decay: f64,
    #[serde(default = "default_eps_floor")]
    pub eps_floor: f64,
}

fn default_eps_floor() -> f64 {
    DEFAULT_EPS_FLOOR
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub xi0: Option<Vec<f64>>,
    #[serde(default)]
    pub r0: f64,
    #[serde(default)]
    pub theta_hat0: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_hat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub log_stride: usize,
    pub guard_delta: f64,
    pub blowup_limit: f64,
    pub enforce_design_conditions: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt: d.dt,
            horizon: d.horizon,
            log_stride: d.log_stride,
            guard_delta: d.guard_delta,
            blowup_limit: d.blowup_limit,
            enforce_design_conditions: d.enforce_design_conditions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub metrics: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), csv: true, metrics: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSection,
    pub gains: GainsSection,
    pub init: InitSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let (mut plant, reference) = match self.plant.name {
            PlantName::Example1 => {
                if self.plant.state_bound.is_some() {
                    return Err(ParamError::Invalid("plant.state_bound only applies to example2".into()).into());
                }
                builtin_example1()
            }
            PlantName::Example2 => {
                let bound = self.plant.state_bound.unwrap_or(EXAMPLE2_STATE_BOUND);
                if !(bound.is_finite() && bound > 0.0) {
                    return Err(ParamError::NotPositive { name: "plant.state_bound", value: bound }.into());
                }
                builtin_example2(0.0, bound)
            }
        };
        plant.set_r0(self.init.r0)?;
        let n = plant.order();
        let g = &self.gains;
        let gains = ControllerGains {
            varsigma_z: g.varsigma_z.clone(),
            varsigma_w: g.varsigma_w.clone(),
            iota_theta: g.iota_theta.clone(),
            iota_gamma: g.iota_gamma.clone(),
            sigma_bar: g.sigma_bar,
            horizon: g.horizon,
            rho0: g.rho0,
            rho_t: g.rho_t,
            upsilon_rho: g.upsilon_rho,
            upsilon_sigma: g.upsilon_sigma,
            eps: EpsSchedule::exponential(g.eps_decay, g.eps_floor)?,
        };
        if self.sim.enforce_design_conditions {
            gains.validate(n)?;
        } else {
            gains.validate_structure(n)?;
        }
        let init = InitialConditions {
            x0: self.init.x0.clone(),
            xi0: self.init.xi0.clone().unwrap_or_else(|| vec![0.0; plant.unmodeled_dim()]),
            theta_hat0: self.init.theta_hat0.clone().unwrap_or_else(|| vec![0.0; n]),
            gamma_hat0: self.init.gamma_hat0.clone().unwrap_or_else(|| vec![0.0; n - 1]),
        };
        if init.x0.len() != n {
            return Err(ParamError::Dimension { what: "init.x0", expected: n, got: init.x0.len() }.into());
        }
        let s = &self.sim;
        let sim = SimConfig {
            dt: s.dt,
            horizon: s.horizon,
            log_stride: s.log_stride,
            guard_delta: s.guard_delta,
            blowup_limit: s.blowup_limit,
            enforce_design_conditions: s.enforce_design_conditions,
        };
        sim.validate(gains.horizon)?;
        Ok(Scenario { plant, reference, gains, sim, init })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE1: &str = r#"
# first-order plant
plant.name = "example1"
gains.varsigma_z = [1]
gains.iota_theta = [0.1]
gains.sigma_bar = 100
gains.T = 0.5
gains.rho0 = 3
gains.rhoT = 0.2
gains.upsilon_rho = 1
gains.upsilon_sigma = 0.4
gains.eps_decay = 0.1
init.x0 = [2.0]
"#;

    #[test]
    fn parses_minimal_example1() {
        let cfg = ScenarioConfig::parse(EXAMPLE1).unwrap();
        assert_eq!(cfg.plant.name, PlantName::Example1);
        assert_eq!(cfg.sim, SimSection::default());
        let scenario = cfg.to_scenario().unwrap();
        assert_eq!(scenario.gains.sigma_bar, 100.0);
        assert_eq!(scenario.init.theta_hat0, vec![0.0]);
        assert!(scenario.init.gamma_hat0.is_empty());
    }

    #[test]
    fn unknown_key_reports_location() {
        let text = format!("{EXAMPLE1}gains.bogus = 3\n");
        let err = ScenarioConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_invalid() {
        let text = EXAMPLE1.replace("init.x0 = [2.0]", "init.x0 = [2.0, 1.0]");
        let err = ScenarioConfig::parse(&text).unwrap().to_scenario().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(ParamError::Dimension { .. })));
    }

    #[test]
    fn gain_constraints_enforced() {
        let text = EXAMPLE1.replace("gains.varsigma_z = [1]", "gains.varsigma_z = [0.4]");
        assert!(ScenarioConfig::parse(&text).unwrap().to_scenario().is_err());
        let relaxed = format!("{text}sim.enforce_design_conditions = false\n");
        assert!(ScenarioConfig::parse(&relaxed).unwrap().to_scenario().is_ok());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(ScenarioConfig::load(Path::new("/nonexistent/x.cfg")), Err(ConfigError::Io { .. })));
    }
}
