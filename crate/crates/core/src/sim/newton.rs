use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Simplified Newton iteration that reuses a factorized Jacobian across
/// iterations and calls, refreshing it when contraction stalls.
#[derive(Debug, Clone)]
pub struct ChordNewton {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Contraction ratio above which a stale factorization is refreshed.
    pub refresh_ratio: f64,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

impl Default for ChordNewton {
    fn default() -> Self {
        ChordNewton {
            tolerance: 1e-10,
            max_iterations: 30,
            refresh_ratio: 0.3,
            lu: None,
        }
    }
}

impl ChordNewton {
    pub fn new(tolerance: f64, max_iterations: usize) -> Self {
        ChordNewton {
            tolerance,
            max_iterations,
            ..Default::default()
        }
    }

    /// Drops the cached factorization (call when the system itself changes).
    pub fn invalidate(&mut self) {
        self.lu = None;
    }

    pub fn solve<R, J>(
        &mut self,
        x0: DVector<f64>,
        residual: R,
        jacobian: J,
    ) -> Result<(DVector<f64>, usize)>
    where
        R: Fn(&DVector<f64>) -> DVector<f64>,
        J: Fn(&DVector<f64>) -> DMatrix<f64>,
    {
        let mut x = x0;
        let mut r = residual(&x);
        let mut norm = r.amax();
        let mut fresh = false;
        for it in 0..self.max_iterations {
            if norm < self.tolerance {
                return Ok((x, it));
            }
            if self.lu.is_none() {
                self.lu = Some(jacobian(&x).lu());
                fresh = true;
            }
            let dx = match self.lu.as_ref().and_then(|lu| lu.solve(&(-&r))) {
                Some(dx) => dx,
                None => {
                    self.lu = None;
                    if fresh {
                        return Err(Error::NewtonDiverged {
                            iterations: it,
                            residual: norm,
                        });
                    }
                    continue;
                }
            };
            let x_new = &x + dx;
            let r_new = residual(&x_new);
            let norm_new = r_new.amax();
            let improved = norm_new.is_finite() && norm_new < norm;
            if improved {
                x = x_new;
                r = r_new;
                if norm_new > self.refresh_ratio * norm && !fresh {
                    self.lu = None;
                }
                norm = norm_new;
                fresh = false;
            } else if fresh {
                self.lu = None;
                return Err(Error::NewtonDiverged {
                    iterations: it + 1,
                    residual: norm,
                });
            } else {
                self.lu = None;
            }
        }
        if norm < self.tolerance {
            Ok((x, self.max_iterations))
        } else {
            self.lu = None;
            Err(Error::NewtonDiverged {
                iterations: self.max_iterations,
                residual: norm,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_nonlinear_system() {
        let mut n = ChordNewton::default();
        let res = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] - 2.0, x[0] * x[1] - 1.0]);
        let jac = |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, x[1], x[0]]);
        let (x, _) = n
            .solve(DVector::from_vec(vec![1.0, 1.0]), res, jac)
            .unwrap();
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!((x[1] - 1.0 / 2f64.sqrt()).abs() < 1e-10);
        // the cached factorization carries over to a nearby problem
        let res2 = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] - 2.1, x[0] * x[1] - 1.0]);
        let (x, _) = n.solve(x, res2, jac).unwrap();
        assert!((x[0] - 2.1f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reports_divergence() {
        let mut n = ChordNewton::new(1e-12, 5);
        let res = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] + 1.0]);
        let jac = |x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 * x[0]);
        assert!(matches!(
            n.solve(DVector::from_vec(vec![1.0]), res, jac),
            Err(Error::NewtonDiverged { .. })
        ));
    }
}
