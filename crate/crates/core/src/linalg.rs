//! Dense helpers shared by the observer and attack modules.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};

/// Matrix sign function by scaled Newton iteration.
pub(crate) fn matrix_sign(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    let mut s = z.clone();
    for _ in 0..100 {
        let lu = s.clone().lu();
        let det = lu.determinant().abs();
        let inv = lu.try_inverse().ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&s * c + inv / c) * 0.5;
        let delta = (&next - &s).norm() / next.norm();
        s = next;
        if delta < 1e-13 {
            return Ok(s);
        }
    }
    Err(Error::Solver(
        "matrix sign iteration did not converge".into(),
    ))
}

/// Stabilizing solution of `AᵀX + XA − X B R⁻¹ Bᵀ X + Q = 0` with `R = ρI`.
pub(crate) fn care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * b.transpose() / rho;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n))
        .copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&(-w.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Solver(format!("riccati least squares: {e}")))?;
    Ok((&x + x.transpose()) * 0.5)
}

/// Eigenvalues via a bounded Schur iteration.
pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let schur = Schur::try_new(m.clone(), 1e-14, 100_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Symmetric PSD square root (negative eigenvalues clipped to zero).
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// 2-norm condition number.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let max = s.max();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right pseudo-inverse of a full-row-rank matrix.
pub(crate) fn right_pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = m * m.transpose();
    let inv = gram.clone().cholesky().ok_or_else(|| {
        let rank = m.rank(1e-10);
        Error::RankDeficient {
            rank,
            rows: m.nrows(),
        }
    })?;
    Ok(m.transpose() * inv.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_riccati() {
        // a x + x a − x² + q = 0  →  x = a + √(a² + q)
        let x = care(
            &DMatrix::from_element(1, 1, 0.5),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 2.0),
            1.0,
        )
        .unwrap();
        assert!((x[(0, 0)] - (0.5 + 2.25f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn riccati_residual_vanishes() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, 0.0, -1.0, 0.1, 0.5, 0.0, 0.3, -0.4]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.5, 1.0]);
        let q = DMatrix::identity(3, 3);
        let x = care(&a, &b, &q, 0.5).unwrap();
        let res = a.transpose() * &x + &x * &a - &x * &b * b.transpose() * &x / 0.5 + &q;
        assert!(res.amax() < 1e-9);
        let closed = &a - &b * b.transpose() * &x / 0.5;
        assert!(eigenvalues(&closed).unwrap().iter().all(|l| l.re < 0.0));
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - m).amax() < 1e-12);
    }
}
