//! Constraint-aware attack as a small linear program.
//!
//! The attacked estimate is linearized in the injected values,
//! `x̂*(a) ≈ x̂*_0 + S_Γ a`, with `S = ∂x̂_{k+1}/∂y`. The program maximizes
//! `Σ|a_i|` over the targeted rows subject to the linearized zone balance
//! `|Σ g_L| ≤ ζ`, linearized limits `h ≤ 0` and a box inscribed in the
//! detector's acceptance region. The decision variables are the rows the
//! attacker may write: the targeted ones, or all of them in `Literal` mode.
//! The absolute values are handled by enumerating sign patterns (all of them
//! for up to eight variables). The solution is stretched along its ray to the
//! true detector boundary, then verified on the nonlinear model and scaled
//! back if a constraint or the detector objects.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use super::{AttackSpec, Placement, ResidualMode, StepContext};
use crate::case::{
    eval_constraints, inequality_jacobian, inequality_values, linearize_constraints, scope_rows,
    Linearization,
};
use crate::detectors::{CusumMode, Detector};
use crate::error::Result;

/// Keeps the balance-equation linearization between steps.
#[derive(Debug, Clone)]
pub struct ScaaCache {
    lin: Option<Linearization>,
    age: usize,
    pub refresh_every: usize,
    pub drift_tolerance: f64,
}

impl Default for ScaaCache {
    fn default() -> Self {
        ScaaCache {
            lin: None,
            age: 0,
            refresh_every: 50,
            drift_tolerance: 0.05,
        }
    }
}

impl ScaaCache {
    fn get(&mut self, ctx: &StepContext, x0: &DVector<f64>) -> &Linearization {
        let stale = match &self.lin {
            None => true,
            Some(l) => self.age >= self.refresh_every || (x0 - &l.x0).amax() > self.drift_tolerance,
        };
        if stale {
            self.lin = Some(linearize_constraints(ctx.sys, x0, ctx.q_bar));
            self.age = 0;
        }
        self.age += 1;
        self.lin.as_ref().expect("just filled")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaaOutcome {
    pub a: DVector<f64>,
    /// `false` when no attack passes the exact checks; `a` is then zero.
    pub feasible: bool,
    pub objective: f64,
}

/// Linear row `lo ≤ c·a ≤ hi` over the targeted components.
struct Row {
    coef: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Acceptance box on the targeted residual components.
fn detector_rows(
    detector: &Detector,
    r0: &DVector<f64>,
    m_t: &DMatrix<f64>,
    gamma: &[usize],
) -> Option<Vec<Row>> {
    let n = gamma.len();
    let row_of = |i: usize| -> Vec<f64> { (0..n).map(|j| m_t[(gamma[i], j)]).collect() };
    match detector {
        Detector::Cusum(d) if d.mode == CusumMode::Vector => Some(
            (0..n)
                .map(|i| {
                    let t = gamma[i];
                    let w = d.tau[t] + d.b[t] - d.c[t];
                    Row {
                        coef: row_of(i),
                        lo: -w - r0[t],
                        hi: w - r0[t],
                    }
                })
                .collect(),
        ),
        _ => {
            let (budget, precision) = match detector {
                Detector::Chi2(d) => (d.alpha, &d.sigma_inv),
                Detector::Cusum(d) => (
                    d.tau[0] + d.b[0] - d.c[0],
                    d.sigma_inv.as_ref().expect("aggregated"),
                ),
            };
            let p = r0.len();
            let rest: Vec<usize> = (0..p).filter(|i| !gamma.contains(i)).collect();
            let ptt = precision.select_rows(gamma).select_columns(gamma);
            let ptr = precision.select_rows(gamma).select_columns(&rest);
            let prr = precision.select_rows(&rest).select_columns(&rest);
            let r_rest = DVector::from_iterator(rest.len(), rest.iter().map(|&i| r0[i]));
            let ptt_lu = ptt.clone().lu();
            let shift = ptt_lu.solve(&(&ptr * &r_rest))?;
            let mu = -shift;
            let schur = &prr - ptr.transpose() * ptt_lu.solve(&ptr)?;
            let z_rest = (r_rest.transpose() * schur * &r_rest)[(0, 0)];
            let left = budget - z_rest;
            if !(left > 0.0) {
                return None;
            }
            let diagonal =
                (0..n).all(|i| (0..n).all(|j| i == j || ptt[(i, j)].abs() <= 1e-12 * ptt[(i, i)]));
            Some(
                (0..n)
                    .map(|i| {
                        let half = if diagonal {
                            (left / (n as f64 * ptt[(i, i)])).sqrt()
                        } else {
                            left.sqrt() / (n as f64 * ptt[(i, i)].sqrt())
                        };
                        let t = gamma[i];
                        Row {
                            coef: row_of(i),
                            lo: mu[i] - half - r0[t],
                            hi: mu[i] + half - r0[t],
                        }
                    })
                    .collect(),
            )
        }
    }
}

/// Largest `s` keeping `s·v` inside every linear row and `r0 + s·dr`
/// inside a quadratic acceptance region. The box is only an inner
/// approximation of that region, so the LP optimum can usually be stretched.
fn ray_limit(
    detector: &Detector,
    r0: &DVector<f64>,
    dr: &DVector<f64>,
    rows: &[Row],
    v: &DVector<f64>,
) -> f64 {
    let (budget, precision) = match detector {
        Detector::Chi2(d) => (d.alpha, &d.sigma_inv),
        Detector::Cusum(d) => match &d.sigma_inv {
            Some(p) if d.mode == CusumMode::Aggregated => (d.tau[0] + d.b[0] - d.c[0], p),
            _ => return 1.0,
        },
    };
    // (r0 + s dr)ᵀ P (r0 + s dr) = qa s² + qb s + qc ≤ budget
    let pdr = precision * dr;
    let qa = dr.dot(&pdr);
    let qb = 2.0 * r0.dot(&pdr);
    let qc = r0.dot(&(precision * r0)) - budget;
    if !(qa > 0.0) || qc > 0.0 {
        return 1.0;
    }
    let mut s = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    for row in rows {
        let cv: f64 = row.coef.iter().zip(v.iter()).map(|(c, x)| c * x).sum();
        if cv > 0.0 && row.hi.is_finite() {
            s = s.min(row.hi / cv);
        } else if cv < 0.0 && row.lo.is_finite() {
            s = s.min(row.lo / cv);
        }
    }
    // Stay a hair inside so the exact check below rarely has to back off.
    s * (1.0 - 1e-9)
}

fn solve_pattern(rows: &[Row], signs: &[f64]) -> Option<(f64, Vec<f64>)> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = signs
        .iter()
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for row in rows {
        let terms: Vec<_> = vars
            .iter()
            .zip(&row.coef)
            .zip(signs)
            .filter(|((_, c), _)| **c != 0.0)
            .map(|((&v, &c), &s)| (v, c * s))
            .collect();
        if terms.is_empty() {
            if row.lo > 0.0 || row.hi < 0.0 {
                return None;
            }
            continue;
        }
        if row.hi.is_finite() {
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, row.hi);
        }
        if row.lo.is_finite() {
            lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, row.lo);
        }
    }
    let sol = lp.solve().ok()?;
    Some((
        sol.objective(),
        vars.iter().zip(signs).map(|(&v, &s)| s * sol[v]).collect(),
    ))
}

fn sign_patterns(n: usize, r0: &DVector<f64>, gamma: &[usize]) -> Vec<Vec<f64>> {
    if n <= 8 {
        return (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect()
            })
            .collect();
    }
    let against: Vec<f64> = gamma
        .iter()
        .map(|&t| if r0[t] > 0.0 { -1.0 } else { 1.0 })
        .collect();
    vec![against, vec![1.0; n], vec![-1.0; n]]
}

pub fn scaa_optimize(
    ctx: &StepContext,
    spec: &AttackSpec,
    cache: &mut ScaaCache,
) -> Result<ScaaOutcome> {
    let p = ctx.y.len();
    // Literal mode lets the attacker rewrite every row, as the closed form does.
    let vector = matches!(ctx.detector, Detector::Cusum(d) if d.mode == CusumMode::Vector);
    let all: Vec<usize>;
    let gamma = if spec.residual_mode == ResidualMode::Literal && !vector {
        all = (0..p).collect();
        &all
    } else {
        &spec.gamma
    };
    let n = gamma.len();
    let zero = DVector::zeros(p);
    let infeasible = || ScaaOutcome {
        a: DVector::zeros(p),
        feasible: false,
        objective: 0.0,
    };

    let (x0, r0) = ctx.respond(spec, &zero)?;
    let s_t = ctx
        .observer
        .sensitivity(ctx.sys, &x0, ctx.dt)?
        .select_columns(gamma);
    let m_t = match spec.placement {
        Placement::PreSe => DMatrix::identity(p, p).select_columns(gamma),
        Placement::PostSe => DMatrix::identity(p, p).select_columns(gamma) - &ctx.sys.c * &s_t,
    };

    let Some(mut rows) = detector_rows(ctx.detector, &r0, &m_t, gamma) else {
        return Ok(infeasible());
    };

    let scope = scope_rows(ctx.sys, ctx.scope);
    let zeta = spec.icaa.zeta;
    if zeta.is_finite() {
        let lin = cache.get(ctx, &x0);
        let g_at = lin.eval(&x0);
        let s0: f64 = scope.g.iter().map(|&i| g_at[i]).sum();
        let grad = lin.jacobian.select_rows(&scope.g).row_sum() * &s_t;
        rows.push(Row {
            coef: grad.iter().copied().collect(),
            lo: -zeta - s0,
            hi: zeta - s0,
        });
    }
    let h0 = inequality_values(ctx.sys, &x0);
    let hj = inequality_jacobian(ctx.sys, &x0) * &s_t;
    for &i in &scope.h {
        if h0[i].is_finite() {
            rows.push(Row {
                coef: hj.row(i).iter().copied().collect(),
                lo: f64::NEG_INFINITY,
                hi: -h0[i],
            });
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for signs in sign_patterns(n, &r0, gamma) {
        if let Some((obj, sol)) = solve_pattern(&rows, &signs) {
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, sol));
            }
        }
    }
    let Some((_, sol)) = best else {
        return Ok(infeasible());
    };
    let mut a = DVector::zeros(p);
    for (j, &t) in gamma.iter().enumerate() {
        a[t] = sol[j];
    }
    let v = DVector::from_vec(sol);
    let grow = ray_limit(ctx.detector, &r0, &(&m_t * &v), &rows, &v);
    if grow > 1.0 {
        a *= grow;
    }

    // The program is exact only to first order: verify on the nonlinear
    // model and back off along `a` when needed.
    let ok = |scale: f64| -> Result<bool> {
        let (x, r) = ctx.respond(spec, &(&a * scale))?;
        let report = eval_constraints(ctx.sys, &x, ctx.q_bar, zeta, ctx.scope);
        Ok(report.satisfied() && !ctx.detector.would_alarm(&r))
    };
    if ok(1.0)? {
        return Ok(ScaaOutcome {
            objective: a.abs().sum(),
            a,
            feasible: true,
        });
    }
    let lo = if ok(0.0)? {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    } else {
        match (1..=10)
            .map(|j| 0.5f64.powi(j))
            .find(|&s| ok(s).unwrap_or(false))
        {
            Some(s) => s,
            None => return Ok(infeasible()),
        }
    };
    if lo == 0.0 {
        return Ok(infeasible());
    }
    let a = a * lo;
    Ok(ScaaOutcome {
        objective: a.abs().sum(),
        a,
        feasible: true,
    })
}
