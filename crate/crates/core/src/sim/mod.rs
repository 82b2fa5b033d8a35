//! Time integration of the descriptor model and synthetic PMU streams.
//!
//! One step of size `dt` applies the trapezoidal rule to the differential rows
//! and enforces the algebraic rows at the new point, solved jointly by a chord
//! Newton iteration (index-1 treatment). Disturbances and process noise are
//! drawn once per step and held over it.

mod newton;
mod noise;

pub use newton::ChordNewton;
pub use noise::{sample_disturbance, DisturbanceModel, NoiseModel};

use nalgebra::{DMatrix, DVector};

use crate::case::{DescriptorSystem, StateVector};
use crate::error::{Error, Result};

/// Smallest sub-step tried before giving up on a failing step.
pub const MIN_STEP: f64 = 1e-7;

/// Reusable integrator state (cached Newton factorization).
#[derive(Debug, Clone, Default)]
pub struct Integrator {
    pub newton: ChordNewton,
}

/// Trapezoidal residual of one step from `x` to `x_new`, with an extra
/// constant `forcing` added to every row (`dt·w_p` on dynamic rows).
pub(crate) fn trapezoid_residual(
    sys: &DescriptorSystem,
    x: &StateVector,
    f_old: &DVector<f64>,
    x_new: &StateVector,
    u: &DVector<f64>,
    q: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let nd = sys.n_dynamic();
    let mut r = sys.rhs(x_new, u, q);
    for i in 0..nd {
        r[i] = x_new[i] - x[i] - 0.5 * dt * (f_old[i] + r[i]);
    }
    r
}

pub(crate) fn trapezoid_jacobian(
    sys: &DescriptorSystem,
    x_new: &StateVector,
    dt: f64,
) -> DMatrix<f64> {
    let nd = sys.n_dynamic();
    let mut j = sys.jacobian(x_new);
    for i in 0..nd {
        for c in 0..j.ncols() {
            j[(i, c)] *= -0.5 * dt;
        }
        j[(i, i)] += 1.0;
    }
    j
}

impl Integrator {
    /// Advances `x` by `dt`. `w_p` (optional) is process noise on the dynamic rows.
    pub fn step(
        &mut self,
        sys: &DescriptorSystem,
        x: &StateVector,
        u: &DVector<f64>,
        q: &DVector<f64>,
        w_p: Option<&DVector<f64>>,
        dt: f64,
    ) -> Result<StateVector> {
        if !(dt >= MIN_STEP) {
            return Err(Error::StepUnderflow(dt));
        }
        let nd = sys.n_dynamic();
        let f_old = sys.rhs(x, u, q);
        let forcing = w_p.map(|w| w.rows(0, nd).into_owned() * dt);
        let residual = |xn: &DVector<f64>| {
            let mut r = trapezoid_residual(sys, x, &f_old, xn, u, q, dt);
            if let Some(f) = &forcing {
                for i in 0..nd {
                    r[i] -= f[i];
                }
            }
            r
        };
        match self
            .newton
            .solve(x.clone(), residual, |xn| trapezoid_jacobian(sys, xn, dt))
        {
            Ok((x_new, _)) => Ok(x_new),
            Err(Error::NewtonDiverged { .. }) if dt / 2.0 >= MIN_STEP => {
                self.newton.invalidate();
                let half = w_p.cloned();
                let mid = self.step(sys, x, u, q, half.as_ref(), dt / 2.0)?;
                let out = self.step(sys, &mid, u, q, half.as_ref(), dt / 2.0);
                self.newton.invalidate();
                out
            }
            Err(Error::NewtonDiverged { .. }) => Err(Error::StepUnderflow(dt / 2.0)),
            Err(e) => Err(e),
        }
    }
}

/// One step with a fresh integrator.
pub fn step(
    sys: &DescriptorSystem,
    x: &StateVector,
    u: &DVector<f64>,
    q: &DVector<f64>,
    dt: f64,
) -> Result<StateVector> {
    Integrator::default().step(sys, x, u, q, None, dt)
}

/// `y = C x + w_m`, with `w_m` keyed by sample index `k`.
pub fn measure(
    sys: &DescriptorSystem,
    x: &StateVector,
    noise: &NoiseModel,
    k: u64,
) -> DVector<f64> {
    &sys.c * x + noise.measurement_sample(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub measurements: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// Disturbance held over the step that starts at each sample (last one repeats).
    pub disturbances: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of samples on `[0, horizon]` at spacing `dt`, endpoints included.
pub fn sample_count(dt: f64, horizon: f64) -> usize {
    (horizon / dt).round() as usize + 1
}

/// Integrates from `x0` over `[0, horizon]` under constant inputs `u`.
pub fn simulate(
    sys: &DescriptorSystem,
    x0: &StateVector,
    u: &DVector<f64>,
    disturbance: &DisturbanceModel,
    noise: &NoiseModel,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::StepUnderflow(dt));
    }
    sys.layout.check(x0)?;
    let count = sample_count(dt, horizon);
    let mut traj = Trajectory {
        dt,
        horizon,
        times: Vec::with_capacity(count),
        states: Vec::with_capacity(count),
        measurements: Vec::with_capacity(count),
        inputs: Vec::with_capacity(count),
        disturbances: Vec::with_capacity(count),
    };
    let mut integrator = Integrator::default();
    let mut x = x0.clone();
    for k in 0..count {
        let t = k as f64 * dt;
        traj.times.push(t);
        traj.measurements.push(measure(sys, &x, noise, k as u64));
        traj.inputs.push(u.clone());
        let q = disturbance.sample(t);
        traj.states.push(x.clone());
        if k + 1 < count {
            let w = noise.process_sample(k as u64);
            x = integrator
                .step(sys, &x, u, &q, Some(&w), dt)
                .map_err(|e| e.at(k + 1, "simulate"))?;
        }
        traj.disturbances.push(q);
    }
    Ok(traj)
}
