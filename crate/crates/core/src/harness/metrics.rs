use nalgebra::DVector;

use crate::error::{Error, Result};

/// Error statistics over the full state vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// `√(mean over steps and states of e²)`.
    pub rmse: f64,
    /// Per-step mean of `|e|`.
    pub mae_series: Vec<f64>,
    /// Per-step `|e|` for every state.
    pub abs_error: Vec<DVector<f64>>,
}

pub fn compute_metrics(truth: &[DVector<f64>], estimates: &[DVector<f64>]) -> Result<Metrics> {
    if truth.len() != estimates.len() {
        return Err(Error::Dimension {
            what: "estimate series",
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut mae_series = Vec::with_capacity(truth.len());
    let mut abs_error = Vec::with_capacity(truth.len());
    for (x, e) in truth.iter().zip(estimates) {
        if x.len() != e.len() {
            return Err(Error::Dimension {
                what: "estimate",
                expected: x.len(),
                got: e.len(),
            });
        }
        let err = (x - e).abs();
        sq += err.norm_squared();
        count += err.len();
        mae_series.push(if err.is_empty() { 0.0 } else { err.mean() });
        abs_error.push(err);
    }
    let rmse = if count == 0 {
        0.0
    } else {
        (sq / count as f64).sqrt()
    };
    Ok(Metrics {
        rmse,
        mae_series,
        abs_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_estimate_has_zero_error() {
        let t = vec![DVector::from_vec(vec![1.0, 2.0]); 5];
        let m = compute_metrics(&t, &t).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert!(m.mae_series.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_offset() {
        let t = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]); 4];
        let e: Vec<_> = t.iter().map(|x| x.add_scalar(0.1)).collect();
        let m = compute_metrics(&t, &e).unwrap();
        assert!((m.rmse - 0.1).abs() < 1e-12);
        assert!(m.mae_series.iter().all(|v| (v - 0.1).abs() < 1e-12));
    }

    #[test]
    fn single_state_offset() {
        let n = 9;
        let t = vec![DVector::zeros(n); 3];
        let mut e = t.clone();
        for x in &mut e {
            x[4] = 0.6;
        }
        let m = compute_metrics(&t, &e).unwrap();
        assert!((m.rmse - 0.6 / (n as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let t = vec![DVector::zeros(2); 3];
        assert!(compute_metrics(&t, &t[..2]).is_err());
    }
}
