use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SweepParameter};
use super::scenario::{run_scenario, ScenarioResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub rmse: f64,
    pub runtime_s: f64,
    pub attack_time_s: f64,
    /// Steps with at least one violation in the attack scope.
    pub violations: usize,
    pub alarms: usize,
    pub reverted: usize,
}

impl SweepRow {
    fn from_result(value: f64, r: &ScenarioResult) -> Self {
        let s = r.summary();
        SweepRow {
            value,
            rmse: r.rmse,
            runtime_s: r.runtime_s,
            attack_time_s: r.attack_time_s,
            violations: s.violation_steps,
            alarms: s.alarms,
            reverted: s.reverted_steps,
        }
    }
}

/// Copy of `base` with one attack parameter replaced.
pub fn with_parameter(
    base: &ScenarioConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    let attack = cfg
        .attack
        .as_mut()
        .ok_or_else(|| Error::Config("a sweep needs an [attack] section".into()))?;
    let tag = match parameter {
        SweepParameter::Beta => {
            attack.beta = value;
            "beta"
        }
        SweepParameter::Zeta => {
            attack.zeta = value;
            "zeta"
        }
        SweepParameter::NTargets => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!(
                    "n_targets must be a positive integer, got {value}"
                )));
            }
            attack.n_targets = Some(value as usize);
            "n_targets"
        }
    };
    cfg.name = format!("{}_{tag}{value}", base.name);
    cfg.validate()?;
    Ok(cfg)
}

/// One scenario per value with the base seed; rows come back in input order.
pub fn sweep(
    base: &ScenarioConfig,
    parameter: SweepParameter,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<(SweepRow, ScenarioResult)>> {
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| with_parameter(base, parameter, v))
        .collect::<Result<_>>()?;
    let run = |(cfg, &v): (&ScenarioConfig, &f64)| -> Result<(SweepRow, ScenarioResult)> {
        let r = run_scenario(cfg)?;
        Ok((SweepRow::from_result(v, &r), r))
    };
    if parallel {
        configs.par_iter().zip(values.par_iter()).map(run).collect()
    } else {
        configs.iter().zip(values.iter()).map(run).collect()
    }
}

pub fn write_sweep_table(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
