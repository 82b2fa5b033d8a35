use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::case::{DescriptorSystem, StateVector};
use crate::error::Result;
use crate::linalg::right_pinv;
use crate::observer::Observer;

/// How the attacker predicts the victim's estimate under `y*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// One step of the victim's own observer.
    #[default]
    ObserverStep,
    /// `x̂_prev + C⁺ y*`.
    PseudoInverse,
    /// `x̂_prev + C⁺ (y* − C x̂_prev)`.
    Innovation,
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_attacked_state(
    sys: &DescriptorSystem,
    observer: &Observer,
    y_star: &DVector<f64>,
    x_hat_prev: &StateVector,
    u: &DVector<f64>,
    q_bar: &DVector<f64>,
    dt: f64,
    method: EstimateMethod,
) -> Result<StateVector> {
    match method {
        EstimateMethod::ObserverStep => {
            observer.clone().step(sys, x_hat_prev, y_star, u, q_bar, dt)
        }
        EstimateMethod::PseudoInverse => Ok(x_hat_prev + right_pinv(&sys.c)? * y_star),
        EstimateMethod::Innovation => {
            Ok(x_hat_prev + right_pinv(&sys.c)? * (y_star - &sys.c * x_hat_prev))
        }
    }
}
