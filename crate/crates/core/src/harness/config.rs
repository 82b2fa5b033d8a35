use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{IcaaParams, Placement, ResidualMode, SignChoice, Strategy};
use crate::case::{parse_case, GridCase, MeasurementOptions, ReactiveForm};
use crate::data;
use crate::error::{Error, Result};
use crate::observer::GainSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Bundled case name (`ieee39`, `wscc9`, …) or a path to a case file.
    pub case: String,
    #[serde(default)]
    pub reactive_form: Option<ReactiveForm>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Root seed; every random stream is keyed from it.
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub measurements: MeasurementOptions,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    30.0
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of process noise on each dynamic state.
    pub process_std: f64,
    /// Noise on magnitude rows.
    pub measurement_std: f64,
    /// Noise on phase-angle rows.
    pub angle_std: f64,
    /// Renewable fluctuation as a fraction of installed capacity.
    pub renewable_sigma: f64,
    /// Load fluctuation as a fraction of nominal load.
    pub load_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            process_std: 1e-3,
            measurement_std: 0.005,
            angle_std: 0.005,
            renewable_sigma: 0.1,
            load_sigma: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        NoiseConfig {
            process_std: 0.0,
            measurement_std: 0.0,
            angle_std: 0.0,
            renewable_sigma: 0.0,
            load_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub gain: GainSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Chi2,
    CusumAggregated,
    CusumVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Target mean number of steps between false alarms.
    pub false_alarm_interval: f64,
    /// Length of the attack-free run used for `Σ`, `b` and `τ`.
    pub calibration_horizon: f64,
    /// Offset mixed into the root seed for the calibration run.
    pub calibration_seed: u64,
    /// Explicit χ² threshold; derived from the false-alarm interval when absent.
    pub alpha: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            kind: DetectorKind::CusumAggregated,
            false_alarm_interval: 1000.0,
            calibration_horizon: 200.0,
            calibration_seed: 0x5eed,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeChoice {
    #[default]
    Zone,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub strategy: Strategy,
    pub start_time: f64,
    /// Bus ids whose measurements are compromised.
    pub target_buses: Vec<usize>,
    /// Explicit 0-based measurement rows (added to the bus rows).
    pub target_rows: Vec<usize>,
    /// When set, the first `n` measurement rows are targeted instead.
    pub n_targets: Option<usize>,
    pub placement: Placement,
    pub residual_mode: ResidualMode,
    pub sign: SignChoice,
    pub beta: f64,
    pub n_max: usize,
    pub zeta: f64,
    pub scope: ScopeChoice,
    pub d_max: usize,
    pub epsilon: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            strategy: Strategy::Icaa,
            start_time: 15.0,
            target_buses: vec![10, 11],
            target_rows: Vec::new(),
            n_targets: None,
            placement: Placement::PreSe,
            residual_mode: ResidualMode::Literal,
            sign: SignChoice::Plus,
            beta: 0.01,
            n_max: 100,
            zeta: 0.22,
            scope: ScopeChoice::Zone,
            d_max: 3,
            epsilon: 1e-6,
        }
    }
}

impl AttackConfig {
    pub fn icaa(&self) -> IcaaParams {
        IcaaParams {
            beta: self.beta,
            n_max: self.n_max,
            zeta: self.zeta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Beta,
    Zeta,
    NTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub parallel: bool,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative case and gain paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if data::builtin(&cfg.case).is_none() && Path::new(&cfg.case).is_relative() {
            cfg.case = base.join(&cfg.case).to_string_lossy().into_owned();
        }
        if let GainSource::File(p) = &mut cfg.observer.gain {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon >= 0.0) {
            return Err(Error::Config(
                "dt must be positive and horizon non-negative".into(),
            ));
        }
        let n = &self.noise;
        if [
            n.process_std,
            n.measurement_std,
            n.angle_std,
            n.renewable_sigma,
            n.load_sigma,
        ]
        .iter()
        .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(self.detector.false_alarm_interval >= 2.0) {
            return Err(Error::Config(
                "false_alarm_interval must be at least 2".into(),
            ));
        }
        if let Some(a) = &self.attack {
            if !(a.start_time >= 0.0 && a.start_time < self.horizon) {
                return Err(Error::Config(format!(
                    "attack start {} s must lie inside the {} s horizon",
                    a.start_time, self.horizon
                )));
            }
            a.icaa().validate()?;
        }
        if data::builtin(&self.case).is_none() && !Path::new(&self.case).exists() {
            return Err(Error::Config(format!(
                "case `{}` is neither bundled nor an existing file",
                self.case
            )));
        }
        if let GainSource::File(p) = &self.observer.gain {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "gain file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn grid_case(&self) -> Result<GridCase> {
        let case = match data::builtin(&self.case) {
            Some(text) => parse_case(text)?,
            None => parse_case(&std::fs::read_to_string(&self.case)?)?,
        };
        Ok(match self.reactive_form {
            Some(form) => case.with_reactive_form(form),
            None => case,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ScenarioConfig::from_toml("name = \"x\"\ncase = \"ieee39\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.dt, 0.01);
        assert_eq!(cfg.horizon, 30.0);
        assert!(cfg.attack.is_none());
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(ScenarioConfig::from_toml("name = \"x\"\ncase = \"ieee39\"\n").is_err());
    }

    #[test]
    fn late_attack_is_rejected() {
        let text = "name = \"x\"\ncase = \"ieee39\"\nseed = 1\nhorizon = 10.0\n[attack]\nstart_time = 15.0\n";
        assert!(matches!(
            ScenarioConfig::from_toml(text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_case_file_is_rejected() {
        assert!(
            ScenarioConfig::from_toml("name = \"x\"\ncase = \"/no/such.case\"\nseed = 1\n")
                .is_err()
        );
    }
}
