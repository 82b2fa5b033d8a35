use nalgebra::{DMatrix, DVector};

use super::measurement::{build_measurement_matrix, MeasurementLayout, MeasurementOptions};
use super::powerflow::{injection, injection_values, pattern, Kernel};
use super::{
    build_ybus, solve_power_flow, AdmittanceMatrix, GeneratorParams, GridCase, PowerFlowOptions,
    PowerFlowSolution, StateLayout, StateVector,
};
use crate::error::{Error, Result};

/// Steady operating point: state, inputs `u = [T_M; E_fd]` and nominal disturbance
/// `q̄ = [P_R; Q_R; P_L; Q_L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub x0: StateVector,
    pub u0: DVector<f64>,
    pub q_bar: DVector<f64>,
}

impl InitialConditions {
    /// Back-solves generator internals from a power-flow solution so that every
    /// derivative vanishes.
    pub fn from_power_flow(case: &GridCase, pf: &PowerFlowSolution) -> Result<Self> {
        let (ng, nb) = (case.generator_count(), case.bus_count());
        let layout = StateLayout::new(ng, nb);
        let mut x = StateVector::zeros(layout.n());
        let mut u = DVector::zeros(2 * ng);
        for (g, gen) in case.generators.iter().enumerate() {
            let b = case.bus_index(gen.bus)?;
            let p = &gen.params;
            let (v, th) = (pf.v[b], pf.theta[b]);
            let vc = nalgebra::Complex::from_polar(v, th);
            let s = nalgebra::Complex::new(pf.p_gen[g], pf.q_gen[g]);
            let i = (s / vc).conj();
            let e_q = vc + nalgebra::Complex::new(0.0, p.xq) * i;
            let delta = e_q.arg();
            let phi = delta - th;
            let rot = nalgebra::Complex::from_polar(1.0, -(delta - std::f64::consts::FRAC_PI_2));
            let i_d = (i * rot).re;
            let eqp = v * phi.cos() + p.xd_prime * i_d;
            let edp = (p.xq - p.xq_prime) / p.xq * v * phi.sin();
            x[layout.delta(g)] = delta;
            x[layout.omega(g)] = p.omega_0;
            x[layout.eq(g)] = eqp;
            x[layout.ed(g)] = edp;
            x[layout.pg(g)] = pf.p_gen[g];
            x[layout.qg(g)] = pf.q_gen[g];
            u[g] = pf.p_gen[g];
            u[ng + g] = p.xd / p.xd_prime * eqp - (p.xd - p.xd_prime) / p.xd_prime * v * phi.cos();
        }
        for b in 0..nb {
            x[layout.v(b)] = pf.v[b];
            x[layout.theta(b)] = pf.theta[b];
        }
        let ren = case.renewable_injection();
        let mut q = DVector::zeros(4 * nb);
        for (b, bus) in case.buses.iter().enumerate() {
            q[b] = ren[b].0;
            q[nb + b] = ren[b].1;
            q[2 * nb + b] = bus.p_load;
            q[3 * nb + b] = bus.q_load;
        }
        Ok(InitialConditions {
            x0: x,
            u0: u,
            q_bar: q,
        })
    }
}

/// Assembled NDAE `E ẋ = A x + f(x) + B_u u + B_w q`, `y = C x`.
///
/// Algebraic rows are ordered `[P_G eq., Q_G eq., P balance, Q balance]` and
/// written as `lhs − rhs`, so their values coincide with the equality
/// constraint residuals `g`.
#[derive(Debug, Clone)]
pub struct DescriptorSystem {
    pub case: GridCase,
    pub layout: StateLayout,
    pub ybus: AdmittanceMatrix,
    pub params: Vec<GeneratorParams>,
    /// Bus index of each generator.
    pub gen_bus: Vec<usize>,
    pub c: DMatrix<f64>,
    pub measurements: MeasurementLayout,
    pub init: InitialConditions,
    /// Regulator set-points (terminal voltage at the operating point).
    pub v_ref: Vec<f64>,
    pub(crate) nz: Vec<Vec<usize>>,
}

pub fn assemble_descriptor(
    case: &GridCase,
    ybus: &AdmittanceMatrix,
    init: InitialConditions,
    meas: &MeasurementOptions,
) -> Result<DescriptorSystem> {
    let layout = StateLayout::new(case.generator_count(), case.bus_count());
    layout.check(&init.x0)?;
    if init.u0.len() != 2 * layout.n_gen {
        return Err(Error::Dimension {
            what: "input vector",
            expected: 2 * layout.n_gen,
            got: init.u0.len(),
        });
    }
    if init.q_bar.len() != 4 * layout.n_bus {
        return Err(Error::Dimension {
            what: "disturbance vector",
            expected: 4 * layout.n_bus,
            got: init.q_bar.len(),
        });
    }
    let gen_bus = case
        .generators
        .iter()
        .map(|g| case.bus_index(g.bus))
        .collect::<Result<Vec<_>>>()?;
    let (c, measurements) = build_measurement_matrix(case, &layout, &init.x0, meas)?;
    let v_ref = gen_bus.iter().map(|&b| init.x0[layout.v(b)]).collect();
    let sys = DescriptorSystem {
        case: case.clone(),
        layout,
        ybus: ybus.clone(),
        params: case.generators.iter().map(|g| g.params).collect(),
        gen_bus,
        c,
        measurements,
        nz: pattern(ybus),
        v_ref,
        init,
    };
    let residual = sys.rhs(&sys.init.x0, &sys.init.u0, &sys.init.q_bar).amax();
    if !(residual < 1e-8) {
        return Err(Error::InconsistentOperatingPoint { residual });
    }
    Ok(sys)
}

impl DescriptorSystem {
    /// Y-bus, power flow, steady initialization and assembly in one call.
    pub fn from_case(case: &GridCase, meas: &MeasurementOptions) -> Result<Self> {
        let y = build_ybus(case)?;
        let pf = solve_power_flow(case, &y, PowerFlowOptions::default())?;
        let init = InitialConditions::from_power_flow(case, &pf)?;
        assemble_descriptor(case, &y, init, meas)
    }

    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn n_dynamic(&self) -> usize {
        self.layout.n_dynamic()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Diagonal of the (singular) mass matrix.
    pub fn mass_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(
            self.n(),
            |i, _| if self.layout.is_dynamic(i) { 1.0 } else { 0.0 },
        )
    }

    /// Full right-hand side: dynamic rows are derivatives, algebraic rows residuals.
    pub fn rhs(&self, x: &StateVector, u: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        let l = &self.layout;
        let (ng, nb) = (l.n_gen, l.n_bus);
        let mut out = DVector::zeros(l.n());
        for (g, p) in self.params.iter().enumerate() {
            let b = self.gen_bus[g];
            let (delta, omega, eqp, edp) = (x[l.delta(g)], x[l.omega(g)], x[l.eq(g)], x[l.ed(g)]);
            let (pg, qg, v) = (x[l.pg(g)], x[l.qg(g)], x[l.v(b)]);
            let phi = delta - x[l.theta(b)];
            let (s, c) = phi.sin_cos();
            let (s2, c2) = (2.0 * phi).sin_cos();
            let k1 = (p.xq - p.xd_prime) / (2.0 * p.xd_prime * p.xq);
            let k2 = (p.xd_prime + p.xq) / (2.0 * p.xd_prime * p.xq);
            out[l.delta(g)] = omega - p.omega_0;
            out[l.omega(g)] = (u[g] - pg - p.d * (omega - p.omega_0)) / p.m;
            let e_fd = u[ng + g] + p.avr_gain * (self.v_ref[g] - v);
            out[l.eq(g)] =
                (-p.xd / p.xd_prime * eqp + (p.xd - p.xd_prime) / p.xd_prime * v * c + e_fd)
                    / p.td0_prime;
            out[l.ed(g)] = (-edp + (p.xq - p.xq_prime) / p.xq * v * s) / p.tq0_prime;
            out[l.pg(g)] = pg - eqp * v * s / p.xd_prime + k1 * v * v * s2;
            out[l.qg(g)] = qg - eqp * v * c / p.xd_prime + k2 * v * v + k1 * v * v * c2;
        }
        let v = &x.as_slice()[l.v(0)..l.v(0) + nb];
        let th = &x.as_slice()[l.theta(0)..l.theta(0) + nb];
        let pinj = injection_values(Kernel::Active, &self.ybus, &self.nz, v, th);
        let qinj = injection_values(
            Kernel::Reactive(self.case.reactive_form),
            &self.ybus,
            &self.nz,
            v,
            th,
        );
        for b in 0..nb {
            out[l.v(b)] = q[b] - q[2 * nb + b] - pinj[b];
            out[l.theta(b)] = q[nb + b] - q[3 * nb + b] - qinj[b];
        }
        for g in 0..ng {
            let b = self.gen_bus[g];
            out[l.v(b)] += x[l.pg(g)];
            out[l.theta(b)] += x[l.qg(g)];
        }
        out
    }

    /// Algebraic rows of [`rhs`](Self::rhs) (the equality residuals `g`).
    pub fn algebraic_residual(&self, x: &StateVector, q: &DVector<f64>) -> DVector<f64> {
        let full = self.rhs(x, &self.init.u0, q);
        full.rows(self.n_dynamic(), self.layout.n_algebraic())
            .into_owned()
    }

    /// Jacobian `∂rhs/∂x` (inputs and disturbances enter linearly).
    pub fn jacobian(&self, x: &StateVector) -> DMatrix<f64> {
        let l = &self.layout;
        let nb = l.n_bus;
        let mut j = DMatrix::zeros(l.n(), l.n());
        for (g, p) in self.params.iter().enumerate() {
            let b = self.gen_bus[g];
            let (delta, eqp) = (x[l.delta(g)], x[l.eq(g)]);
            let v = x[l.v(b)];
            let phi = delta - x[l.theta(b)];
            let (s, c) = phi.sin_cos();
            let (s2, c2) = (2.0 * phi).sin_cos();
            let k1 = (p.xq - p.xd_prime) / (2.0 * p.xd_prime * p.xq);
            let k2 = (p.xd_prime + p.xq) / (2.0 * p.xd_prime * p.xq);
            let (rd, rw, re, rf, rp, rq) =
                (l.delta(g), l.omega(g), l.eq(g), l.ed(g), l.pg(g), l.qg(g));
            let (cv, ct) = (l.v(b), l.theta(b));

            j[(rd, l.omega(g))] = 1.0;

            j[(rw, l.omega(g))] = -p.d / p.m;
            j[(rw, l.pg(g))] = -1.0 / p.m;

            let ke = (p.xd - p.xd_prime) / (p.xd_prime * p.td0_prime);
            j[(re, l.eq(g))] = -p.xd / (p.xd_prime * p.td0_prime);
            j[(re, cv)] += ke * c - p.avr_gain / p.td0_prime;
            j[(re, l.delta(g))] = -ke * v * s;
            j[(re, ct)] += ke * v * s;

            let kf = (p.xq - p.xq_prime) / (p.xq * p.tq0_prime);
            j[(rf, l.ed(g))] = -1.0 / p.tq0_prime;
            j[(rf, cv)] += kf * s;
            j[(rf, l.delta(g))] = kf * v * c;
            j[(rf, ct)] -= kf * v * c;

            let dp_dphi = -eqp * v * c / p.xd_prime + 2.0 * k1 * v * v * c2;
            j[(rp, l.pg(g))] = 1.0;
            j[(rp, l.eq(g))] = -v * s / p.xd_prime;
            j[(rp, cv)] += -eqp * s / p.xd_prime + 2.0 * k1 * v * s2;
            j[(rp, l.delta(g))] = dp_dphi;
            j[(rp, ct)] -= dp_dphi;

            let dq_dphi = eqp * v * s / p.xd_prime - 2.0 * k1 * v * v * s2;
            j[(rq, l.qg(g))] = 1.0;
            j[(rq, l.eq(g))] = -v * c / p.xd_prime;
            j[(rq, cv)] += -eqp * c / p.xd_prime + 2.0 * k2 * v + 2.0 * k1 * v * c2;
            j[(rq, l.delta(g))] = dq_dphi;
            j[(rq, ct)] -= dq_dphi;

            j[(l.v(b), l.pg(g))] += 1.0;
            j[(l.theta(b), l.qg(g))] += 1.0;
        }
        let v = &x.as_slice()[l.v(0)..l.v(0) + nb];
        let th = &x.as_slice()[l.theta(0)..l.theta(0) + nb];
        let pinj = injection(Kernel::Active, &self.ybus, &self.nz, v, th);
        let qinj = injection(
            Kernel::Reactive(self.case.reactive_form),
            &self.ybus,
            &self.nz,
            v,
            th,
        );
        for b in 0..nb {
            for &k in &self.nz[b] {
                j[(l.v(b), l.v(k))] -= pinj.d_v[(b, k)];
                j[(l.v(b), l.theta(k))] -= pinj.d_theta[(b, k)];
                j[(l.theta(b), l.v(k))] -= qinj.d_v[(b, k)];
                j[(l.theta(b), l.theta(k))] -= qinj.d_theta[(b, k)];
            }
        }
        j
    }

    /// Linear block `A` of the descriptor form.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let l = &self.layout;
        let mut a = DMatrix::zeros(l.n(), l.n());
        for (g, p) in self.params.iter().enumerate() {
            a[(l.delta(g), l.omega(g))] = 1.0;
            a[(l.omega(g), l.omega(g))] = -p.d / p.m;
            a[(l.omega(g), l.pg(g))] = -1.0 / p.m;
            a[(l.eq(g), l.eq(g))] = -p.xd / (p.xd_prime * p.td0_prime);
            a[(l.eq(g), l.v(self.gen_bus[g]))] -= p.avr_gain / p.td0_prime;
            a[(l.ed(g), l.ed(g))] = -1.0 / p.tq0_prime;
            a[(l.pg(g), l.pg(g))] = 1.0;
            a[(l.qg(g), l.qg(g))] = 1.0;
            a[(l.v(self.gen_bus[g]), l.pg(g))] += 1.0;
            a[(l.theta(self.gen_bus[g]), l.qg(g))] += 1.0;
        }
        a
    }

    /// Input map for `u = [T_M; E_fd]`.
    pub fn b_u(&self) -> DMatrix<f64> {
        let l = &self.layout;
        let mut b = DMatrix::zeros(l.n(), 2 * l.n_gen);
        for (g, p) in self.params.iter().enumerate() {
            b[(l.omega(g), g)] = 1.0 / p.m;
            b[(l.eq(g), l.n_gen + g)] = 1.0 / p.td0_prime;
        }
        b
    }

    /// Disturbance map for `q = [P_R; Q_R; P_L; Q_L]`.
    pub fn b_w(&self) -> DMatrix<f64> {
        let l = &self.layout;
        let nb = l.n_bus;
        let mut b = DMatrix::zeros(l.n(), 4 * nb);
        for k in 0..nb {
            b[(l.v(k), k)] = 1.0;
            b[(l.theta(k), nb + k)] = 1.0;
            b[(l.v(k), 2 * nb + k)] = -1.0;
            b[(l.theta(k), 3 * nb + k)] = -1.0;
        }
        b
    }

    /// Nonlinear part `f(x) = rhs − A x − B_u u − B_w q`, including the
    /// constant speed-reference terms.
    pub fn f(&self, x: &StateVector) -> DVector<f64> {
        let u = DVector::zeros(2 * self.layout.n_gen);
        let q = DVector::zeros(4 * self.layout.n_bus);
        self.rhs(x, &u, &q) - self.a_matrix() * x
    }

    pub fn state_names(&self) -> Vec<String> {
        let ids: Vec<usize> = self.case.buses.iter().map(|b| b.id).collect();
        self.layout.names(&ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system() -> DescriptorSystem {
        crate::case::tests_support::three_bus_system()
    }

    #[test]
    fn operating_point_is_steady() {
        let sys = system();
        assert!(sys.rhs(&sys.init.x0, &sys.init.u0, &sys.init.q_bar).amax() < 1e-8);
    }

    #[test]
    fn descriptor_split_reassembles_rhs() {
        let sys = system();
        let mut x = sys.init.x0.clone();
        x[0] += 0.2;
        x[sys.layout.v(2)] -= 0.03;
        let lhs = sys.rhs(&x, &sys.init.u0, &sys.init.q_bar);
        let rhs = sys.a_matrix() * &x
            + sys.f(&x)
            + sys.b_u() * &sys.init.u0
            + sys.b_w() * &sys.init.q_bar;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let sys = system();
        let mut x = sys.init.x0.clone();
        x[sys.layout.delta(1)] += 0.1;
        x[sys.layout.v(2)] += 0.02;
        let j = sys.jacobian(&x);
        let h = 1e-6;
        for k in 0..sys.n() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (sys.rhs(&xp, &sys.init.u0, &sys.init.q_bar)
                - sys.rhs(&xm, &sys.init.u0, &sys.init.q_bar))
                / (2.0 * h);
            for r in 0..sys.n() {
                let scale = 1.0f64.max(j[(r, k)].abs());
                assert!(
                    (fd[r] - j[(r, k)]).abs() / scale < 1e-6,
                    "({r},{k}): {} vs {}",
                    fd[r],
                    j[(r, k)]
                );
            }
        }
    }

    #[test]
    fn rotor_advance_raises_electrical_power() {
        let sys = system();
        let l = sys.layout;
        let mut x = sys.init.x0.clone();
        x[l.delta(0)] += 0.1;
        // Holding the algebraic states, the P_G equation residual shows the
        // electrical power that the rotor would now deliver.
        let g = sys.rhs(&x, &sys.init.u0, &sys.init.q_bar);
        let p_e = x[l.pg(0)] - g[l.pg(0)];
        assert!(p_e > x[l.pg(0)]);
        let mut xs = x.clone();
        xs[l.pg(0)] = p_e;
        assert!(sys.rhs(&xs, &sys.init.u0, &sys.init.q_bar)[l.omega(0)] < 0.0);
    }

    #[test]
    fn salient_terms_vanish_at_zero_angle() {
        let sys = system();
        let l = sys.layout;
        let mut x = sys.init.x0.clone();
        let b = sys.gen_bus[0];
        x[l.delta(0)] = x[l.theta(b)];
        x[l.pg(0)] = 0.0;
        assert!(sys.rhs(&x, &sys.init.u0, &sys.init.q_bar)[l.pg(0)].abs() < 1e-14);
    }
}
