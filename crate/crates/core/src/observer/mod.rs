//! Luenberger-type joint estimator for the descriptor model:
//!
//! `E x̂' = A x̂ + f(x̂) + B_u u + B_w q̄ + L (y − C x̂)`
//!
//! stepped with the same trapezoidal scheme as the simulator. The measurement
//! `y_k` is held over `[t_k, t_k+1]`, so `x̂_k` never depends on `y_k` and the
//! residual `r_k = y_k − C x̂_k` is an innovation.

mod gain;

pub use gain::{
    load_or_synthesize_gain, read_gain, synthesize_gain, validate_gain, write_gain, GainCheck,
    GainDesign, GainSource,
};

use nalgebra::{DMatrix, DVector};

use crate::case::{DescriptorSystem, StateVector};
use crate::error::{Error, Result};
use crate::sim::{trapezoid_jacobian, trapezoid_residual};
use crate::sim::{ChordNewton, Trajectory, MIN_STEP};

/// Ridge added to sample covariances.
pub const SIGMA_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Observer {
    pub gain: DMatrix<f64>,
    lc: DMatrix<f64>,
    newton: ChordNewton,
}

impl Observer {
    pub fn new(sys: &DescriptorSystem, gain: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != sys.n() || gain.ncols() != sys.p() {
            return Err(Error::Dimension {
                what: "observer gain",
                expected: sys.n() * sys.p(),
                got: gain.nrows() * gain.ncols(),
            });
        }
        let lc = &gain * &sys.c;
        Ok(Observer {
            gain,
            lc,
            newton: ChordNewton::default(),
        })
    }

    fn injection(&self, sys: &DescriptorSystem, x: &StateVector, y: &DVector<f64>) -> DVector<f64> {
        &self.gain * (y - &sys.c * x)
    }

    fn jacobian(&self, sys: &DescriptorSystem, x_new: &StateVector, dt: f64) -> DMatrix<f64> {
        let nd = sys.n_dynamic();
        let mut j = trapezoid_jacobian(sys, x_new, dt);
        for r in 0..sys.n() {
            let w = if r < nd { 0.5 * dt } else { -1.0 };
            for c in 0..sys.n() {
                j[(r, c)] += w * self.lc[(r, c)];
            }
        }
        j
    }

    /// Advances the estimate over one step with `y` held constant.
    pub fn step(
        &mut self,
        sys: &DescriptorSystem,
        x_hat: &StateVector,
        y: &DVector<f64>,
        u: &DVector<f64>,
        q_bar: &DVector<f64>,
        dt: f64,
    ) -> Result<StateVector> {
        if !(dt >= MIN_STEP) {
            return Err(Error::StepUnderflow(dt));
        }
        if y.len() != sys.p() {
            return Err(Error::Dimension {
                what: "measurement",
                expected: sys.p(),
                got: y.len(),
            });
        }
        let nd = sys.n_dynamic();
        let mut newton = std::mem::take(&mut self.newton);
        let f_old = sys.rhs(x_hat, u, q_bar) + self.injection(sys, x_hat, y);
        let residual = |xn: &DVector<f64>| {
            let mut r = trapezoid_residual(sys, x_hat, &f_old, xn, u, q_bar, dt);
            let inj = self.injection(sys, xn, y);
            for i in 0..sys.n() {
                if i < nd {
                    r[i] -= 0.5 * dt * inj[i];
                } else {
                    r[i] += inj[i];
                }
            }
            r
        };
        let jac = |xn: &DVector<f64>| self.jacobian(sys, xn, dt);
        let out = newton.solve(x_hat.clone(), residual, jac);
        self.newton = newton;
        match out {
            Ok((x, _)) => Ok(x),
            Err(Error::NewtonDiverged { .. }) if dt / 2.0 >= MIN_STEP => {
                self.newton.invalidate();
                let mid = self.step(sys, x_hat, y, u, q_bar, dt / 2.0)?;
                let end = self.step(sys, &mid, y, u, q_bar, dt / 2.0);
                self.newton.invalidate();
                end
            }
            Err(Error::NewtonDiverged { .. }) => Err(Error::StepUnderflow(dt / 2.0)),
            Err(e) => Err(e),
        }
    }

    /// `∂x̂_{k+1}/∂y_k` at the converged point `x_new` (n×p).
    pub fn sensitivity(
        &self,
        sys: &DescriptorSystem,
        x_new: &StateVector,
        dt: f64,
    ) -> Result<DMatrix<f64>> {
        let nd = sys.n_dynamic();
        let mut dr_dy = self.gain.clone();
        for r in 0..sys.n() {
            let w = if r < nd { dt } else { -1.0 };
            for c in 0..sys.p() {
                dr_dy[(r, c)] *= w;
            }
        }
        self.jacobian(sys, x_new, dt)
            .lu()
            .solve(&dr_dy)
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
            })
    }
}

/// Single observer step with a fresh solver.
pub fn observer_step(
    sys: &DescriptorSystem,
    gain: &DMatrix<f64>,
    x_hat: &StateVector,
    y: &DVector<f64>,
    u: &DVector<f64>,
    q_bar: &DVector<f64>,
    dt: f64,
) -> Result<StateVector> {
    Observer::new(sys, gain.clone())?.step(sys, x_hat, y, u, q_bar, dt)
}

pub fn residual(y: &DVector<f64>, x_hat: &StateVector, c: &DMatrix<f64>) -> DVector<f64> {
    y - c * x_hat
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateTrace {
    pub estimates: Vec<StateVector>,
    pub residuals: Vec<DVector<f64>>,
    /// Euclidean estimation error per step (empty without ground truth).
    pub error_norms: Vec<f64>,
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Runs the observer over the measurement stream of `traj` starting from `x_hat0`.
pub fn estimate(
    sys: &DescriptorSystem,
    gain: &DMatrix<f64>,
    traj: &Trajectory,
    x_hat0: &StateVector,
) -> Result<EstimateTrace> {
    let mut obs = Observer::new(sys, gain.clone())?;
    let (u, q_bar) = (&sys.init.u0, &sys.init.q_bar);
    let mut trace = EstimateTrace::default();
    let mut x_hat = x_hat0.clone();
    let count = traj.len();
    for k in 0..count {
        let y = &traj.measurements[k];
        trace.residuals.push(residual(y, &x_hat, &sys.c));
        trace.error_norms.push((&traj.states[k] - &x_hat).norm());
        let next = if k + 1 < count {
            Some(
                obs.step(sys, &x_hat, y, u, q_bar, traj.dt)
                    .map_err(|e| e.at(k + 1, "observer"))?,
            )
        } else {
            None
        };
        trace
            .estimates
            .push(std::mem::replace(&mut x_hat, next.unwrap_or_default()));
    }
    Ok(trace)
}

/// Sample covariance of a residual history plus a small ridge.
pub fn estimate_sigma(history: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let p = history.first().map(|r| r.len()).unwrap_or(0);
    let needed = 10 * p.max(1);
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            got: history.len(),
        });
    }
    let k = history.len() as f64;
    let mean = history.iter().fold(DVector::zeros(p), |acc, r| acc + r) / k;
    let mut cov = DMatrix::zeros(p, p);
    for r in history {
        if r.len() != p {
            return Err(Error::Dimension {
                what: "residual",
                expected: p,
                got: r.len(),
            });
        }
        let d = r - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= k - 1.0;
    let sym = (&cov + cov.transpose()) * 0.5;
    Ok(sym + DMatrix::identity(p, p) * SIGMA_RIDGE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::tests_support::three_bus_system;
    use crate::sim::{simulate, DisturbanceModel, Integrator, NoiseModel};

    #[test]
    fn zero_innovation_keeps_steady_estimate() {
        let sys = three_bus_system();
        let gain = DMatrix::from_element(sys.n(), sys.p(), 0.3);
        let y = &sys.c * &sys.init.x0;
        let x = observer_step(
            &sys,
            &gain,
            &sys.init.x0,
            &y,
            &sys.init.u0,
            &sys.init.q_bar,
            0.01,
        )
        .unwrap();
        assert!((x - &sys.init.x0).amax() < 1e-9);
    }

    #[test]
    fn zero_gain_matches_open_loop_step() {
        let sys = three_bus_system();
        let mut x = sys.init.x0.clone();
        x[sys.layout.delta(0)] += 0.05;
        let gain = DMatrix::zeros(sys.n(), sys.p());
        let y = DVector::from_element(sys.p(), 7.0);
        let a = observer_step(&sys, &gain, &x, &y, &sys.init.u0, &sys.init.q_bar, 0.01).unwrap();
        let b = Integrator::default()
            .step(&sys, &x, &sys.init.u0, &sys.init.q_bar, None, 0.01)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sensitivity_matches_differences() {
        let sys = three_bus_system();
        let gain = DMatrix::from_fn(sys.n(), sys.p(), |i, j| {
            0.05 * ((i + 2 * j) % 5) as f64 - 0.1
        });
        let mut x = sys.init.x0.clone();
        x[sys.layout.delta(0)] += 0.02;
        let y0 = &sys.c * &sys.init.x0;
        let mut obs = Observer::new(&sys, gain.clone()).unwrap();
        let x_new = obs
            .step(&sys, &x, &y0, &sys.init.u0, &sys.init.q_bar, 0.01)
            .unwrap();
        let s = obs.sensitivity(&sys, &x_new, 0.01).unwrap();
        let h = 1e-6;
        for j in 0..sys.p() {
            let (mut yp, mut ym) = (y0.clone(), y0.clone());
            yp[j] += h;
            ym[j] -= h;
            let xp =
                observer_step(&sys, &gain, &x, &yp, &sys.init.u0, &sys.init.q_bar, 0.01).unwrap();
            let xm =
                observer_step(&sys, &gain, &x, &ym, &sys.init.u0, &sys.init.q_bar, 0.01).unwrap();
            let fd = (xp - xm) / (2.0 * h);
            assert!((fd - s.column(j)).amax() < 1e-6);
        }
    }

    #[test]
    fn stored_residuals_are_innovations() {
        let sys = three_bus_system();
        let noise = NoiseModel::diagonal(
            &DVector::from_element(sys.n(), 1e-3),
            &DVector::from_element(sys.p(), 1e-3),
            5,
        )
        .unwrap();
        let traj = simulate(
            &sys,
            &sys.init.x0,
            &sys.init.u0,
            &DisturbanceModel::quiet(sys.init.q_bar.clone()),
            &noise,
            0.01,
            0.5,
        )
        .unwrap();
        let gain = synthesize_gain(&sys, &GainDesign::default()).unwrap();
        let trace = estimate(&sys, &gain, &traj, &sys.init.x0).unwrap();
        assert_eq!(trace.len(), traj.len());
        for k in 0..trace.len() {
            assert_eq!(
                trace.residuals[k],
                residual(&traj.measurements[k], &trace.estimates[k], &sys.c)
            );
        }
    }

    #[test]
    fn sigma_of_constant_history_is_ridge() {
        let h = vec![DVector::from_vec(vec![1.0, -2.0]); 40];
        let s = estimate_sigma(&h).unwrap();
        assert_eq!(s, DMatrix::identity(2, 2) * SIGMA_RIDGE);
        assert!(matches!(
            estimate_sigma(&h[..10]),
            Err(Error::InsufficientHistory { .. })
        ));
    }
}
