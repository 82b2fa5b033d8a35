use nalgebra::{DMatrix, DVector};

use super::{AdmittanceMatrix, BusType, GridCase, ReactiveForm};
use crate::error::{Error, Result};

/// Which bus injection is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kernel {
    Active,
    Reactive(ReactiveForm),
}

impl Kernel {
    /// Coefficients `(α, β)` so that each term is `v_b v_j (α cos θ_bj + β sin θ_bj)`.
    #[inline]
    fn coeffs(self, y: &AdmittanceMatrix, b: usize, j: usize) -> (f64, f64) {
        let (g, bb) = (y.g[(b, j)], y.b[(b, j)]);
        match self {
            Kernel::Active => (g, bb),
            Kernel::Reactive(ReactiveForm::Standard) => (-bb, g),
            Kernel::Reactive(ReactiveForm::AsPrinted) => (g, -bb),
        }
    }
}

/// Injections of one kernel at every bus together with dense partials
/// with respect to `v` and `θ`.
pub(crate) struct Injection {
    pub value: DVector<f64>,
    pub d_v: DMatrix<f64>,
    pub d_theta: DMatrix<f64>,
}

/// Sparsity pattern of the admittance matrix (row-wise neighbour lists incl. diagonal).
pub(crate) fn pattern(y: &AdmittanceMatrix) -> Vec<Vec<usize>> {
    let n = y.dim();
    (0..n)
        .map(|b| {
            (0..n)
                .filter(|&j| j == b || y.g[(b, j)] != 0.0 || y.b[(b, j)] != 0.0)
                .collect()
        })
        .collect()
}

pub(crate) fn injection_values(
    kernel: Kernel,
    y: &AdmittanceMatrix,
    nz: &[Vec<usize>],
    v: &[f64],
    theta: &[f64],
) -> DVector<f64> {
    DVector::from_fn(v.len(), |b, _| {
        nz[b].iter().fold(0.0, |acc, &j| {
            let (a, bt) = kernel.coeffs(y, b, j);
            let th = theta[b] - theta[j];
            acc + v[b] * v[j] * (a * th.cos() + bt * th.sin())
        })
    })
}

pub(crate) fn injection(
    kernel: Kernel,
    y: &AdmittanceMatrix,
    nz: &[Vec<usize>],
    v: &[f64],
    theta: &[f64],
) -> Injection {
    let n = v.len();
    let mut value = DVector::zeros(n);
    let mut d_v = DMatrix::zeros(n, n);
    let mut d_theta = DMatrix::zeros(n, n);
    for b in 0..n {
        for &j in &nz[b] {
            let (a, bt) = kernel.coeffs(y, b, j);
            if j == b {
                value[b] += v[b] * v[b] * a;
                d_v[(b, b)] += 2.0 * v[b] * a;
                continue;
            }
            let th = theta[b] - theta[j];
            let (s, c) = th.sin_cos();
            let k = a * c + bt * s;
            let dk = -a * s + bt * c;
            value[b] += v[b] * v[j] * k;
            d_v[(b, b)] += v[j] * k;
            d_v[(b, j)] += v[b] * k;
            d_theta[(b, b)] += v[b] * v[j] * dk;
            d_theta[(b, j)] -= v[b] * v[j] * dk;
        }
    }
    Injection {
        value,
        d_v,
        d_theta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Net injection per bus, computed from the network equations.
    pub p_injection: Vec<f64>,
    pub q_injection: Vec<f64>,
    /// Dispatch per generator; buses with several units share equally.
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Newton-Raphson power flow in polar coordinates from a flat angle start.
pub fn solve_power_flow(
    case: &GridCase,
    y: &AdmittanceMatrix,
    opts: PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    let n = case.bus_count();
    let nz = pattern(y);
    let q_kernel = Kernel::Reactive(case.reactive_form);
    let ren = case.renewable_injection();

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (i, bus) in case.buses.iter().enumerate() {
        p_spec[i] = ren[i].0 - bus.p_load;
        q_spec[i] = ren[i].1 - bus.q_load;
    }
    for gen in &case.generators {
        p_spec[case.bus_index(gen.bus)?] += gen.p_set;
    }

    let theta_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind != BusType::Slack)
        .collect();
    let v_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusType::PQ)
        .collect();
    let dim = theta_idx.len() + v_idx.len();

    let mut v: Vec<f64> = case.buses.iter().map(|b| b.v_set).collect();
    let mut theta = vec![0.0; n];

    let mut iterations = 0;
    let mismatch = loop {
        let p = injection(Kernel::Active, y, &nz, &v, &theta);
        let q = injection(q_kernel, y, &nz, &v, &theta);
        let mut f = DVector::zeros(dim);
        for (r, &i) in theta_idx.iter().enumerate() {
            f[r] = p.value[i] - p_spec[i];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            f[theta_idx.len() + r] = q.value[i] - q_spec[i];
        }
        let mismatch = f.amax();
        if mismatch < opts.tolerance {
            break mismatch;
        }
        if iterations >= opts.max_iterations || !mismatch.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations,
                mismatch,
            });
        }
        let mut jac = DMatrix::zeros(dim, dim);
        let rows = theta_idx
            .iter()
            .map(|&i| (i, &p))
            .chain(v_idx.iter().map(|&i| (i, &q)));
        for (r, (i, inj)) in rows.enumerate() {
            for (c, &k) in theta_idx.iter().enumerate() {
                jac[(r, c)] = inj.d_theta[(i, k)];
            }
            for (c, &k) in v_idx.iter().enumerate() {
                jac[(r, theta_idx.len() + c)] = inj.d_v[(i, k)];
            }
        }
        let dx = jac.lu().solve(&(-f)).ok_or(Error::PowerFlowDiverged {
            iterations,
            mismatch,
        })?;
        for (r, &i) in theta_idx.iter().enumerate() {
            theta[i] += dx[r];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            v[i] += dx[theta_idx.len() + r];
        }
        iterations += 1;
    };

    let p_inj = injection_values(Kernel::Active, y, &nz, &v, &theta);
    let q_inj = injection_values(q_kernel, y, &nz, &v, &theta);

    let mut units = vec![0usize; n];
    for gen in &case.generators {
        units[case.bus_index(gen.bus)?] += 1;
    }
    let mut p_gen = Vec::with_capacity(case.generator_count());
    let mut q_gen = Vec::with_capacity(case.generator_count());
    for gen in &case.generators {
        let i = case.bus_index(gen.bus)?;
        let bus = &case.buses[i];
        let share = units[i] as f64;
        let p = match bus.kind {
            BusType::Slack => (p_inj[i] + bus.p_load - ren[i].0) / share,
            _ => gen.p_set,
        };
        p_gen.push(p);
        q_gen.push((q_inj[i] + bus.q_load - ren[i].1) / share);
    }

    Ok(PowerFlowSolution {
        v,
        theta,
        p_injection: p_inj.iter().copied().collect(),
        q_injection: q_inj.iter().copied().collect(),
        p_gen,
        q_gen,
        iterations,
        mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_ybus, parse_case};

    #[test]
    fn zero_injection_case_stays_flat() {
        let case = parse_case(
            "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 1 0 0 0 0 1 0 1.1 0.9\n3 1 0 0 0 0 1 0 1.1 0.9\n\
             [branch]\n1 2 0.01 0.1 0 0\n2 3 0.02 0.2 0 0\n",
        )
        .unwrap();
        let y = build_ybus(&case).unwrap();
        let pf = solve_power_flow(&case, &y, PowerFlowOptions::default()).unwrap();
        for i in 0..3 {
            assert!((pf.v[i] - 1.0).abs() < 1e-12);
            assert!(pf.theta[i].abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_partials_match_differences() {
        let case = parse_case(
            "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 1 30 10 0 5 1 0 1.1 0.9\n3 1 20 5 0 0 1 0 1.1 0.9\n\
             [branch]\n1 2 0.01 0.1 0.02 0\n2 3 0.02 0.2 0.01 0 0.98\n1 3 0.01 0.15 0 0\n",
        )
        .unwrap();
        let y = build_ybus(&case).unwrap();
        let nz = pattern(&y);
        let v = vec![1.02, 0.97, 0.99];
        let th = vec![0.0, -0.05, -0.08];
        for kernel in [
            Kernel::Active,
            Kernel::Reactive(ReactiveForm::Standard),
            Kernel::Reactive(ReactiveForm::AsPrinted),
        ] {
            let inj = injection(kernel, &y, &nz, &v, &th);
            let h = 1e-6;
            for k in 0..3 {
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[k] += h;
                vm[k] -= h;
                let fd = (injection_values(kernel, &y, &nz, &vp, &th)
                    - injection_values(kernel, &y, &nz, &vm, &th))
                    / (2.0 * h);
                let (mut tp, mut tm) = (th.clone(), th.clone());
                tp[k] += h;
                tm[k] -= h;
                let fdt = (injection_values(kernel, &y, &nz, &v, &tp)
                    - injection_values(kernel, &y, &nz, &v, &tm))
                    / (2.0 * h);
                for b in 0..3 {
                    assert!((fd[b] - inj.d_v[(b, k)]).abs() < 1e-7);
                    assert!((fdt[b] - inj.d_theta[(b, k)]).abs() < 1e-7);
                }
            }
        }
    }
}
