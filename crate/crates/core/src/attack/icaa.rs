use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{AttackSpec, StepContext};
use crate::case::{eval_constraints, ConstraintReport, StateVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaaParams {
    /// Fractional shrink per failed check.
    pub beta: f64,
    pub n_max: usize,
    /// Bound on `|Σ g|` over the constraint scope.
    pub zeta: f64,
}

impl Default for IcaaParams {
    fn default() -> Self {
        IcaaParams {
            beta: 0.01,
            n_max: 100,
            zeta: 0.22,
        }
    }
}

impl IcaaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::Config(format!(
                "zeta must be non-negative, got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaaOutcome {
    pub a: DVector<f64>,
    /// Checks performed (1 when the starting vector already passes).
    pub iterations: usize,
    /// `false` when every candidate failed and the attack was withdrawn.
    pub feasible: bool,
    pub x_next: StateVector,
    /// Residual presented to the detector.
    pub residual: DVector<f64>,
    pub report: ConstraintReport,
}

/// Shrinks `a0` by `(1 − β)` until the attacked estimate satisfies the
/// constraints and the detector stays quiet, or gives up after `n_max` checks.
pub fn icaa(ctx: &StepContext, spec: &AttackSpec, a0: DVector<f64>) -> Result<IcaaOutcome> {
    let params = &spec.icaa;
    params.validate()?;
    let mut a = a0;
    for i in 1..=params.n_max {
        // A candidate the estimator cannot absorb counts as a failed check.
        match ctx.respond(spec, &a) {
            Ok((x_next, residual)) => {
                let report = eval_constraints(ctx.sys, &x_next, ctx.q_bar, params.zeta, ctx.scope);
                if report.satisfied() && !ctx.detector.would_alarm(&residual) {
                    return Ok(IcaaOutcome {
                        a,
                        iterations: i,
                        feasible: true,
                        x_next,
                        residual,
                        report,
                    });
                }
            }
            Err(Error::NewtonDiverged { .. } | Error::StepUnderflow(_)) => {}
            Err(e) => return Err(e),
        }
        a *= 1.0 - params.beta;
    }
    let a = DVector::zeros(a.len());
    let (x_next, residual) = ctx.respond(spec, &a)?;
    let report = eval_constraints(ctx.sys, &x_next, ctx.q_bar, params.zeta, ctx.scope);
    Ok(IcaaOutcome {
        a,
        iterations: params.n_max,
        feasible: false,
        x_next,
        residual,
        report,
    })
}
