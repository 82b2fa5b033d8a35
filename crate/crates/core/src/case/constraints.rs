//! Equality residuals `g` (generator output and power balance equations)
//! and inequality slacks `h ≤ 0` (generator, voltage and line-flow limits).
//!
//! `h` is stacked as `[P_G − P_max, P_min − P_G, Q_G − Q_max, Q_min − Q_G,
//! v − V_max, V_min − v, |S_from| − F_max, |S_to| − F_max]`.

use std::collections::BTreeSet;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ybus::branch_admittance;
use super::{DescriptorSystem, StateVector};

/// Which part of the network a report covers.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ConstraintScope {
    #[default]
    Full,
    /// Limits restricted to these bus indices (generator rows follow their
    /// bus, line rows need both ends); the balance sum stays network-wide.
    Zone(BTreeSet<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub g_values: Vec<f64>,
    pub h_values: Vec<f64>,
    pub g_abs_sum: f64,
    pub violation_count: usize,
    pub zeta: f64,
}

impl ConstraintReport {
    pub fn g_ok(&self) -> bool {
        self.g_abs_sum <= self.zeta
    }

    pub fn satisfied(&self) -> bool {
        self.violation_count == 0
    }
}

/// Row selections implied by a scope.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeRows {
    pub g: Vec<usize>,
    pub h: Vec<usize>,
}

pub fn scope_rows(sys: &DescriptorSystem, scope: &ConstraintScope) -> ScopeRows {
    let (ng, nb, nl) = (sys.layout.n_gen, sys.layout.n_bus, sys.case.lines.len());
    let inside = |b: usize| match scope {
        ConstraintScope::Full => true,
        ConstraintScope::Zone(set) => set.contains(&b),
    };
    let gens: Vec<usize> = (0..ng).filter(|&g| inside(sys.gen_bus[g])).collect();
    let buses: Vec<usize> = (0..nb).filter(|&b| inside(b)).collect();
    let lines: Vec<usize> = (0..nl)
        .filter(|&k| {
            let l = &sys.case.lines[k];
            inside(sys.case.bus_index(l.from).expect("validated"))
                && inside(sys.case.bus_index(l.to).expect("validated"))
        })
        .collect();
    let g = (0..2 * ng + 2 * nb).collect();
    let mut h = Vec::new();
    for block in 0..4 {
        h.extend(gens.iter().map(|&k| block * ng + k));
    }
    for block in 0..2 {
        h.extend(buses.iter().map(|&b| 4 * ng + block * nb + b));
    }
    for block in 0..2 {
        h.extend(lines.iter().map(|&k| 4 * ng + 2 * nb + block * nl + k));
    }
    ScopeRows { g, h }
}

fn line_flows(sys: &DescriptorSystem, x: &StateVector, k: usize) -> (f64, f64) {
    let l = &sys.layout;
    let line = &sys.case.lines[k];
    let f = sys.case.bus_index(line.from).expect("validated");
    let t = sys.case.bus_index(line.to).expect("validated");
    let [yff, yft, ytf, ytt] = branch_admittance(line).expect("validated by ybus");
    let vf = Complex::from_polar(x[l.v(f)], x[l.theta(f)]);
    let vt = Complex::from_polar(x[l.v(t)], x[l.theta(t)]);
    let sf = vf * (yff * vf + yft * vt).conj();
    let st = vt * (ytf * vf + ytt * vt).conj();
    (sf.norm(), st.norm())
}

/// Full inequality vector (unscoped).
pub fn inequality_values(sys: &DescriptorSystem, x: &StateVector) -> DVector<f64> {
    let l = &sys.layout;
    let (ng, nb, nl) = (l.n_gen, l.n_bus, sys.case.lines.len());
    let mut h = DVector::zeros(4 * ng + 2 * nb + 2 * nl);
    for (g, gen) in sys.case.generators.iter().enumerate() {
        h[g] = x[l.pg(g)] - gen.p_max;
        h[ng + g] = gen.p_min - x[l.pg(g)];
        h[2 * ng + g] = x[l.qg(g)] - gen.q_max;
        h[3 * ng + g] = gen.q_min - x[l.qg(g)];
    }
    for (b, bus) in sys.case.buses.iter().enumerate() {
        h[4 * ng + b] = x[l.v(b)] - bus.v_max;
        h[4 * ng + nb + b] = bus.v_min - x[l.v(b)];
    }
    for (k, line) in sys.case.lines.iter().enumerate() {
        let (sf, st) = line_flows(sys, x, k);
        h[4 * ng + 2 * nb + k] = sf - line.rating;
        h[4 * ng + 2 * nb + nl + k] = st - line.rating;
    }
    h
}

/// Jacobian of [`inequality_values`]; line-flow rows by central differences
/// over their four endpoint variables.
pub fn inequality_jacobian(sys: &DescriptorSystem, x: &StateVector) -> DMatrix<f64> {
    let l = &sys.layout;
    let (ng, nb, nl) = (l.n_gen, l.n_bus, sys.case.lines.len());
    let mut j = DMatrix::zeros(4 * ng + 2 * nb + 2 * nl, l.n());
    for g in 0..ng {
        j[(g, l.pg(g))] = 1.0;
        j[(ng + g, l.pg(g))] = -1.0;
        j[(2 * ng + g, l.qg(g))] = 1.0;
        j[(3 * ng + g, l.qg(g))] = -1.0;
    }
    for b in 0..nb {
        j[(4 * ng + b, l.v(b))] = 1.0;
        j[(4 * ng + nb + b, l.v(b))] = -1.0;
    }
    let h = 1e-7;
    for (k, line) in sys.case.lines.iter().enumerate() {
        let f = sys.case.bus_index(line.from).expect("validated");
        let t = sys.case.bus_index(line.to).expect("validated");
        for s in [l.v(f), l.theta(f), l.v(t), l.theta(t)] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[s] += h;
            xm[s] -= h;
            let (pf, pt) = line_flows(sys, &xp, k);
            let (mf, mt) = line_flows(sys, &xm, k);
            j[(4 * ng + 2 * nb + k, s)] = (pf - mf) / (2.0 * h);
            j[(4 * ng + 2 * nb + nl + k, s)] = (pt - mt) / (2.0 * h);
        }
    }
    j
}

pub(crate) fn report_from(
    g_full: &DVector<f64>,
    h_full: &DVector<f64>,
    rows: &ScopeRows,
    zeta: f64,
) -> ConstraintReport {
    let g_values: Vec<f64> = rows.g.iter().map(|&i| g_full[i]).collect();
    let h_values: Vec<f64> = rows.h.iter().map(|&i| h_full[i]).collect();
    let g_abs_sum = g_values.iter().sum::<f64>().abs();
    let violation_count =
        h_values.iter().filter(|&&v| v > 0.0).count() + usize::from(g_abs_sum > zeta);
    ConstraintReport {
        g_values,
        h_values,
        g_abs_sum,
        violation_count,
        zeta,
    }
}

/// Evaluates `g` (with disturbance `q`) and `h` at `x` restricted to `scope`.
pub fn eval_constraints(
    sys: &DescriptorSystem,
    x: &StateVector,
    q: &DVector<f64>,
    zeta: f64,
    scope: &ConstraintScope,
) -> ConstraintReport {
    let g = sys.algebraic_residual(x, q);
    let h = inequality_values(sys, x);
    report_from(&g, &h, &scope_rows(sys, scope), zeta)
}

/// First-order model `g_L(x) = g(x0) + ∇g(x0)(x − x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub x0: StateVector,
    pub g0: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl Linearization {
    pub fn eval(&self, x: &StateVector) -> DVector<f64> {
        &self.g0 + &self.jacobian * (x - &self.x0)
    }
}

pub fn linearize_constraints(
    sys: &DescriptorSystem,
    x0: &StateVector,
    q: &DVector<f64>,
) -> Linearization {
    let nd = sys.n_dynamic();
    let na = sys.layout.n_algebraic();
    let jac = sys.jacobian(x0).rows(nd, na).into_owned();
    Linearization {
        x0: x0.clone(),
        g0: sys.algebraic_residual(x0, q),
        jacobian: jac,
    }
}
