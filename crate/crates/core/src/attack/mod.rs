//! Stealthy false-data injection: closed-form detector-aware attacks,
//! constraint-aware optimization and the iterative shrinking variant.

mod estimate;
mod icaa;
mod scaa;
mod scua;
mod trace;
mod zone;

pub use estimate::{estimate_attacked_state, EstimateMethod};
pub use icaa::{icaa, IcaaOutcome, IcaaParams};
pub use scaa::{scaa_optimize, ScaaCache, ScaaOutcome};
pub use scua::{
    post_se_matrix, propagate_post_se, propagate_with, scua_chi2, scua_cusum_agg, scua_cusum_vec,
    scua_for,
};
pub use trace::{AttackStep, AttackTrace};
pub use zone::{attack_zone, AttackZone};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case::{ConstraintScope, DescriptorSystem};
use crate::detectors::{CusumMode, Detector};
use crate::error::{Error, Result};
use crate::observer::Observer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Closed-form attack matched to the configured detector.
    Scua,
    /// Linearized constraint-aware program.
    ScaaOpt,
    /// SCUA start shrunk until the exact constraints and detector pass.
    Icaa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Detector sees the innovation `y* − C x̂_k`.
    #[default]
    PreSe,
    /// Detector sees the posterior residual `y* − C x̂_{k+1}`.
    PostSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `a = d − r` on every row: the attacker cancels the whole residual.
    #[default]
    Literal,
    /// Only targeted rows are written.
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignChoice {
    #[default]
    Plus,
    Minus,
}

/// Serializable detector parameters copied into an attack description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorParams {
    Chi2 { alpha: f64 },
    CusumAggregated { b: f64, tau: f64 },
    CusumVector { b: Vec<f64>, tau: Vec<f64> },
}

impl DetectorParams {
    pub fn of(detector: &Detector) -> Self {
        match detector {
            Detector::Chi2(d) => DetectorParams::Chi2 { alpha: d.alpha },
            Detector::Cusum(d) => match d.mode {
                CusumMode::Aggregated => DetectorParams::CusumAggregated {
                    b: d.b[0],
                    tau: d.tau[0],
                },
                CusumMode::Vector => DetectorParams::CusumVector {
                    b: d.b.iter().copied().collect(),
                    tau: d.tau.iter().copied().collect(),
                },
            },
        }
    }
}

/// Everything that defines an attack campaign; `gamma` holds 0-based
/// measurement row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub gamma: Vec<usize>,
    pub k_star: usize,
    pub strategy: Strategy,
    pub detector_params: Option<DetectorParams>,
    #[serde(default)]
    pub icaa: IcaaParams,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub residual_mode: ResidualMode,
    #[serde(default)]
    pub sign: SignChoice,
}

impl AttackSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.gamma.is_empty() {
            return Err(Error::Config("attack targets no measurement".into()));
        }
        if let Some(&bad) = self.gamma.iter().find(|&&i| i >= p) {
            return Err(Error::Dimension {
                what: "targeted measurement index",
                expected: p,
                got: bad + 1,
            });
        }
        self.icaa.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Symmetric square root of a residual covariance.
pub fn sigma_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    crate::linalg::psd_sqrt(sigma)
}

/// What the attacker sees at step `k` before choosing `a_k`.
pub struct StepContext<'a> {
    pub sys: &'a DescriptorSystem,
    pub observer: &'a Observer,
    pub detector: &'a Detector,
    pub sigma_sqrt: &'a DMatrix<f64>,
    pub x_hat: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub q_bar: &'a DVector<f64>,
    pub dt: f64,
    pub scope: &'a ConstraintScope,
    pub is_first_step: bool,
}

impl StepContext<'_> {
    /// Observer update and detector residual for an attacked measurement.
    pub fn respond(
        &self,
        spec: &AttackSpec,
        a: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let y_star = self.y + a;
        let mut obs = self.observer.clone();
        let x_next = obs.step(self.sys, self.x_hat, &y_star, self.u, self.q_bar, self.dt)?;
        let r = match spec.placement {
            Placement::PreSe => &y_star - &self.sys.c * self.x_hat,
            Placement::PostSe => &y_star - &self.sys.c * &x_next,
        };
        Ok((x_next, r))
    }

    /// The closed-form attack for this step, placed for the configured
    /// detector position.
    pub fn scua(&self, spec: &AttackSpec) -> Result<DVector<f64>> {
        let r_pre = self.y - &self.sys.c * self.x_hat;
        match spec.placement {
            Placement::PreSe => scua_for(
                self.detector,
                self.sigma_sqrt,
                &r_pre,
                &spec.gamma,
                self.is_first_step,
                spec.residual_mode,
                spec.sign,
            ),
            Placement::PostSe => {
                let zero = DVector::zeros(self.y.len());
                let (x0, r_post) = self.respond(spec, &zero)?;
                let target = &r_post
                    + scua_for(
                        self.detector,
                        self.sigma_sqrt,
                        &r_post,
                        &spec.gamma,
                        self.is_first_step,
                        spec.residual_mode,
                        spec.sign,
                    )?;
                let s = self.observer.sensitivity(self.sys, &x0, self.dt)?;
                let m = DMatrix::identity(self.y.len(), self.y.len()) - &self.sys.c * s;
                propagate_with(&m, &target, &r_post)
            }
        }
    }
}
