//! Residual-based intrusion detectors: χ² and CUSUM (aggregated or per
//! measurement), plus calibration from attack-free residual history.
//!
//! All thresholds are strict: `z = α` or `c = τ` never alarms.
//! A CUSUM alarm is stamped with the step at which `c` first exceeds `τ`;
//! the statistic is reset to zero right after.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// `α = 2 P⁻¹(n_y/2, 1 − 1/m)`: the χ²(n_y) quantile that yields one false
/// alarm every `m` steps on average.
pub fn chi2_threshold(n_y: usize, m: f64) -> f64 {
    assert!(
        n_y >= 1 && m >= 2.0,
        "chi2_threshold needs n_y ≥ 1 and m ≥ 2"
    );
    let a = n_y as f64 / 2.0;
    // Upper tail against 1/m keeps precision for large m.
    let tail = |x: f64| gamma_ur(a, x) - 1.0 / m;
    let (mut lo, mut hi) = (0.0, a.max(1.0));
    while tail(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tail(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

fn precision(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::Dimension {
            what: "residual covariance",
            expected: sigma.nrows(),
            got: sigma.ncols(),
        });
    }
    let inv = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("residual covariance is not positive definite".into()))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `rᵀ Σ⁻¹ r`.
pub fn mahalanobis(r: &DVector<f64>, sigma_inv: &DMatrix<f64>) -> f64 {
    (r.transpose() * sigma_inv * r)[(0, 0)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Detector {
    pub alpha: f64,
    pub sigma_inv: DMatrix<f64>,
}

impl Chi2Detector {
    pub fn new(alpha: f64, sigma: &DMatrix<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(Chi2Detector {
            alpha,
            sigma_inv: precision(sigma)?,
        })
    }

    pub fn step(&self, r: &DVector<f64>) -> (f64, bool) {
        let z = mahalanobis(r, &self.sigma_inv);
        (z, z > self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CusumMode {
    Aggregated,
    Vector,
}

/// Aggregated mode keeps scalar `c`, `b`, `τ` (length-1 vectors); vector
/// mode keeps one entry per measurement and uses `z_i = |r_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumDetector {
    pub mode: CusumMode,
    pub c: DVector<f64>,
    pub b: DVector<f64>,
    pub tau: DVector<f64>,
    pub sigma_inv: Option<DMatrix<f64>>,
    pub alarm_log: Vec<usize>,
    steps: usize,
}

/// Outcome of one CUSUM update; `c` is the value before any reset.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumStep {
    pub z: DVector<f64>,
    pub c: DVector<f64>,
    pub alarms: Vec<bool>,
}

impl CusumStep {
    pub fn alarm(&self) -> bool {
        self.alarms.iter().any(|&a| a)
    }
}

impl CusumDetector {
    pub fn aggregated(b: f64, tau: f64, sigma: &DMatrix<f64>) -> Result<Self> {
        if !(b > 0.0 && tau > 0.0) {
            return Err(Error::Config("CUSUM needs b > 0 and tau > 0".into()));
        }
        Ok(CusumDetector {
            mode: CusumMode::Aggregated,
            c: DVector::zeros(1),
            b: DVector::from_element(1, b),
            tau: DVector::from_element(1, tau),
            sigma_inv: Some(precision(sigma)?),
            alarm_log: Vec::new(),
            steps: 0,
        })
    }

    pub fn vector(b: DVector<f64>, tau: DVector<f64>) -> Result<Self> {
        if b.len() != tau.len() {
            return Err(Error::Dimension {
                what: "CUSUM tau",
                expected: b.len(),
                got: tau.len(),
            });
        }
        if b.iter().chain(tau.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::Config("CUSUM needs b > 0 and tau > 0".into()));
        }
        Ok(CusumDetector {
            mode: CusumMode::Vector,
            c: DVector::zeros(b.len()),
            b,
            tau,
            sigma_inv: None,
            alarm_log: Vec::new(),
            steps: 0,
        })
    }

    /// Distance measure `z` for a residual.
    pub fn distance(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.sigma_inv {
            Some(si) => DVector::from_element(1, mahalanobis(r, si)),
            None => r.abs(),
        }
    }

    /// Number of updates processed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, r: &DVector<f64>) -> CusumStep {
        let z = self.distance(r);
        let k = self.steps;
        self.steps += 1;
        let mut c_out = DVector::zeros(self.c.len());
        let mut alarms = vec![false; self.c.len()];
        for i in 0..self.c.len() {
            let c = (self.c[i] + z[i] - self.b[i]).max(0.0);
            c_out[i] = c;
            if c > self.tau[i] {
                alarms[i] = true;
                self.c[i] = 0.0;
            } else {
                self.c[i] = c;
            }
        }
        if alarms.iter().any(|&a| a) {
            self.alarm_log.push(k);
        }
        CusumStep {
            z,
            c: c_out,
            alarms,
        }
    }

    /// Scalar summary for traces: `c` itself (aggregated) or the largest
    /// `c_i/τ_i` (vector).
    pub fn summary(&self, c: &DVector<f64>) -> f64 {
        match self.mode {
            CusumMode::Aggregated => c[0],
            CusumMode::Vector => c.component_div(&self.tau).max(),
        }
    }
}

/// Chosen CUSUM parameters and the evidence behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mode: CusumMode,
    pub b: Vec<f64>,
    pub tau: Vec<f64>,
    pub history_len: usize,
    pub held_out_len: usize,
    pub target_interval: f64,
    /// Held-out steps per false alarm (held-out length when none occur).
    pub achieved_interval: Vec<f64>,
}

fn alarm_count(z: &[f64], b: f64, tau: f64) -> usize {
    let mut c = 0.0;
    let mut n = 0;
    for &zi in z {
        c = f64::max(0.0, c + zi - b);
        if c > tau {
            n += 1;
            c = 0.0;
        }
    }
    n
}

fn interval(len: usize, alarms: usize) -> f64 {
    if alarms == 0 {
        len as f64
    } else {
        len as f64 / alarms as f64
    }
}

/// `b = mean + std` on the first half, then the smallest `τ` whose
/// false-alarm interval on the second half reaches `m`.
fn calibrate_scalar(z: &[f64], m: f64) -> Result<(f64, f64, f64)> {
    let half = z.len() / 2;
    let (fit, held) = z.split_at(half);
    if (held.len() as f64) < m {
        return Err(Error::UnreachableTarget { target: m });
    }
    let n = fit.len() as f64;
    let mean = fit.iter().sum::<f64>() / n;
    let var = fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let b = mean + var.sqrt();
    let ok = |tau: f64| interval(held.len(), alarm_count(held, b, tau)) >= m;
    let mut hi = held
        .iter()
        .map(|&v| (v - b).max(0.0))
        .sum::<f64>()
        .max(f64::EPSILON);
    if !ok(hi) {
        return Err(Error::UnreachableTarget { target: m });
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok((b, hi, interval(held.len(), alarm_count(held, b, hi))))
}

/// Calibrates `(b, τ)` from attack-free residuals. `sigma` is required in
/// aggregated mode.
pub fn calibrate_cusum(
    history: &[DVector<f64>],
    mode: CusumMode,
    sigma: Option<&DMatrix<f64>>,
    m: f64,
) -> Result<(CusumDetector, CalibrationReport)> {
    if history.len() < 20 {
        return Err(Error::InsufficientHistory {
            needed: 20,
            got: history.len(),
        });
    }
    let held_out_len = history.len() - history.len() / 2;
    match mode {
        CusumMode::Aggregated => {
            let sigma = sigma.ok_or_else(|| {
                Error::Config("aggregated CUSUM needs a residual covariance".into())
            })?;
            let si = precision(sigma)?;
            let z: Vec<f64> = history.iter().map(|r| mahalanobis(r, &si)).collect();
            let (b, tau, achieved) = calibrate_scalar(&z, m)?;
            let det = CusumDetector::aggregated(b.max(f64::MIN_POSITIVE), tau, sigma)?;
            let report = CalibrationReport {
                mode,
                b: vec![b],
                tau: vec![tau],
                history_len: history.len(),
                held_out_len,
                target_interval: m,
                achieved_interval: vec![achieved],
            };
            Ok((det, report))
        }
        CusumMode::Vector => {
            let p = history[0].len();
            let mut bs = Vec::with_capacity(p);
            let mut taus = Vec::with_capacity(p);
            let mut achieved = Vec::with_capacity(p);
            for i in 0..p {
                let z: Vec<f64> = history.iter().map(|r| r[i].abs()).collect();
                let (b, tau, a) = calibrate_scalar(&z, m)?;
                bs.push(b.max(f64::MIN_POSITIVE));
                taus.push(tau);
                achieved.push(a);
            }
            let det = CusumDetector::vector(
                DVector::from_vec(bs.clone()),
                DVector::from_vec(taus.clone()),
            )?;
            let report = CalibrationReport {
                mode,
                b: bs,
                tau: taus,
                history_len: history.len(),
                held_out_len,
                target_interval: m,
                achieved_interval: achieved,
            };
            Ok((det, report))
        }
    }
}

/// Either detector behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Chi2(Chi2Detector),
    Cusum(CusumDetector),
}

/// One detector update as logged in traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSample {
    pub z: f64,
    pub c: f64,
    pub alarm: bool,
}

impl Detector {
    pub fn step(&mut self, r: &DVector<f64>) -> DetectorSample {
        match self {
            Detector::Chi2(d) => {
                let (z, alarm) = d.step(r);
                DetectorSample { z, c: z, alarm }
            }
            Detector::Cusum(d) => {
                let s = d.step(r);
                let z = match d.mode {
                    CusumMode::Aggregated => s.z[0],
                    CusumMode::Vector => s.z.component_div(&d.b).max(),
                };
                DetectorSample {
                    z,
                    c: d.summary(&s.c),
                    alarm: s.alarm(),
                }
            }
        }
    }

    /// Whether feeding `r` would raise an alarm, without touching the state.
    pub fn would_alarm(&self, r: &DVector<f64>) -> bool {
        self.clone().step(r).alarm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dof_threshold_is_closed_form() {
        for m in [2.0, 10.0, 1000.0] {
            assert!((chi2_threshold(2, m) - 2.0 * f64::ln(m)).abs() < 1e-8);
        }
    }

    #[test]
    fn one_dof_median() {
        assert!((chi2_threshold(1, 2.0) - 0.454_936_423_119_572_8).abs() < 1e-8);
    }

    #[test]
    fn chi2_pythagorean() {
        let d = Chi2Detector::new(24.0, &DMatrix::identity(3, 3)).unwrap();
        let (z, alarm) = d.step(&DVector::from_vec(vec![3.0, 4.0, 0.0]));
        assert_eq!(z, 25.0);
        assert!(alarm);
        let d = Chi2Detector::new(25.0, &DMatrix::identity(3, 3)).unwrap();
        assert!(!d.step(&DVector::from_vec(vec![3.0, 4.0, 0.0])).1);
    }

    #[test]
    fn cusum_branch_arithmetic() {
        let sigma = DMatrix::identity(1, 1);
        let mut d = CusumDetector::aggregated(2.0, 5.0, &sigma).unwrap();
        let s = d.step(&DVector::from_element(1, 1.0));
        assert_eq!(s.c[0], 0.0);
        let s = d.step(&DVector::from_element(1, 2.5));
        assert_eq!(s.c[0], 4.25);
        assert!(!s.alarm());
        let s = d.step(&DVector::from_element(1, 2.0));
        assert_eq!(s.c[0], 6.25);
        assert!(s.alarm());
        assert_eq!(d.c[0], 0.0);
        assert_eq!(d.alarm_log, vec![2]);
    }

    #[test]
    fn aggregated_scalar_matches_vector_on_squares() {
        let mut agg = CusumDetector::aggregated(0.5, 3.0, &DMatrix::identity(1, 1)).unwrap();
        let mut vec =
            CusumDetector::vector(DVector::from_element(1, 0.5), DVector::from_element(1, 3.0))
                .unwrap();
        for k in 0..200 {
            let r = ((k * 37 % 17) as f64 - 8.0) / 5.0;
            let a = agg.step(&DVector::from_element(1, r));
            let v = vec.step(&DVector::from_element(1, r * r));
            assert_eq!(a.c, v.c);
            assert_eq!(a.alarms, v.alarms);
        }
    }

    #[test]
    fn constant_history_calibrates_to_its_value() {
        let h = vec![DVector::from_element(1, 1.5); 400];
        let (det, rep) = calibrate_cusum(&h, CusumMode::Vector, None, 50.0).unwrap();
        assert_eq!(rep.b, vec![1.5]);
        assert!(det.tau[0] > 0.0);
        assert_eq!(rep.achieved_interval, vec![200.0]);
    }

    #[test]
    fn short_held_out_window_is_unreachable() {
        let h = vec![DVector::from_element(1, 1.0); 40];
        assert!(matches!(
            calibrate_cusum(&h, CusumMode::Vector, None, 1000.0),
            Err(Error::UnreachableTarget { .. })
        ));
    }
}
