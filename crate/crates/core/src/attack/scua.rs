//! Closed-form stealthy constraint-unaware attacks.
//!
//! Each construction picks a target residual `d` that sits exactly on the
//! detector threshold and returns `a = d − r`. In `Literal` mode every row is
//! rewritten (the full residual is cancelled); `Masked` mode only touches the
//! targeted rows.

use nalgebra::{DMatrix, DVector};

use super::{ResidualMode, SignChoice};
use crate::detectors::{CusumMode, Detector};
use crate::error::{Error, Result};
use crate::linalg::condition_number;

fn check_gamma(gamma: &[usize], p: usize) -> Result<()> {
    if gamma.is_empty() {
        return Err(Error::Config(
            "attack needs at least one targeted measurement".into(),
        ));
    }
    if let Some(&bad) = gamma.iter().find(|&&i| i >= p) {
        return Err(Error::Dimension {
            what: "targeted measurement index",
            expected: p,
            got: bad + 1,
        });
    }
    Ok(())
}

fn mask(gamma: &[usize], p: usize, mode: ResidualMode) -> DVector<f64> {
    match mode {
        ResidualMode::Literal => DVector::from_element(p, 1.0),
        ResidualMode::Masked => {
            let mut m = DVector::zeros(p);
            for &i in gamma {
                m[i] = 1.0;
            }
            m
        }
    }
}

/// `a = mask ∘ (s·d − r)`.
fn assemble(d: &DVector<f64>, r: &DVector<f64>, mask: &DVector<f64>, s: f64) -> DVector<f64> {
    (d * s - r).component_mul(mask)
}

/// Target residual `Σ^{1/2} Γ (√(ρ/n), …)ᵀ` shared by the χ² and aggregated forms.
fn spread(sigma_sqrt: &DMatrix<f64>, gamma: &[usize], radicand: f64) -> Result<DVector<f64>> {
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand(radicand));
    }
    let p = sigma_sqrt.nrows();
    let k = (radicand / gamma.len() as f64).sqrt();
    let mut e = DVector::zeros(p);
    for &i in gamma {
        e[i] = k;
    }
    Ok(sigma_sqrt * e)
}

/// Aggregated-CUSUM attack. The first attacked step lifts `c` from `c_prev`
/// to `τ`; later steps feed `z = b` so `c` stays there.
#[allow(clippy::too_many_arguments)]
pub fn scua_cusum_agg(
    r: &DVector<f64>,
    c_prev: f64,
    tau: f64,
    b: f64,
    sigma_sqrt: &DMatrix<f64>,
    gamma: &[usize],
    is_first_step: bool,
    mode: ResidualMode,
) -> Result<DVector<f64>> {
    check_gamma(gamma, r.len())?;
    let radicand = if is_first_step { tau + b - c_prev } else { b };
    let d = spread(sigma_sqrt, gamma, radicand)?;
    Ok(assemble(&d, r, &mask(gamma, r.len(), mode), 1.0))
}

/// Per-measurement CUSUM attack; untargeted rows are left alone.
#[allow(clippy::too_many_arguments)]
pub fn scua_cusum_vec(
    r: &DVector<f64>,
    c_prev: &DVector<f64>,
    tau: &DVector<f64>,
    b: &DVector<f64>,
    gamma: &[usize],
    is_first_step: bool,
    sign: SignChoice,
) -> Result<DVector<f64>> {
    check_gamma(gamma, r.len())?;
    let s = match sign {
        SignChoice::Plus => 1.0,
        SignChoice::Minus => -1.0,
    };
    let mut a = DVector::zeros(r.len());
    for &i in gamma {
        let level = if is_first_step {
            tau[i] + b[i] - c_prev[i]
        } else {
            b[i]
        };
        a[i] = s * level - r[i];
    }
    Ok(a)
}

/// χ² attack with total energy `α`.
pub fn scua_chi2(
    r: &DVector<f64>,
    alpha: f64,
    sigma_sqrt: &DMatrix<f64>,
    gamma: &[usize],
    mode: ResidualMode,
) -> Result<DVector<f64>> {
    check_gamma(gamma, r.len())?;
    let d = spread(sigma_sqrt, gamma, alpha)?;
    Ok(assemble(&d, r, &mask(gamma, r.len(), mode), 1.0))
}

/// Alarm on a channel the attacker writes to (per-measurement CUSUM), or any
/// alarm for the scalar detectors.
fn controlled_alarm(detector: &Detector, r: &DVector<f64>, m: &DVector<f64>) -> bool {
    match detector {
        Detector::Cusum(d) if d.mode == CusumMode::Vector => d
            .clone()
            .step(r)
            .alarms
            .iter()
            .zip(m.iter())
            .any(|(&alarm, &w)| alarm && w != 0.0),
        _ => detector.would_alarm(r),
    }
}

/// SCUA matched to the victim detector, pulled back just inside the
/// threshold when rounding would otherwise land a hair above it. Alarms the
/// attacker cannot influence (untouched rows) are left to happen.
#[allow(clippy::too_many_arguments)]
pub fn scua_for(
    detector: &Detector,
    sigma_sqrt: &DMatrix<f64>,
    r: &DVector<f64>,
    gamma: &[usize],
    is_first_step: bool,
    mode: ResidualMode,
    sign: SignChoice,
) -> Result<DVector<f64>> {
    let p = r.len();
    let (a, m) = match detector {
        Detector::Chi2(d) => (
            scua_chi2(r, d.alpha, sigma_sqrt, gamma, mode)?,
            mask(gamma, p, mode),
        ),
        Detector::Cusum(d) => match d.mode {
            CusumMode::Aggregated => (
                scua_cusum_agg(
                    r,
                    d.c[0],
                    d.tau[0],
                    d.b[0],
                    sigma_sqrt,
                    gamma,
                    is_first_step,
                    mode,
                )?,
                mask(gamma, p, mode),
            ),
            CusumMode::Vector => (
                scua_cusum_vec(r, &d.c, &d.tau, &d.b, gamma, is_first_step, sign)?,
                mask(gamma, p, ResidualMode::Masked),
            ),
        },
    };
    let target = r + &a;
    if !controlled_alarm(detector, &target, &m) {
        return Ok(a);
    }
    for j in 0..60 {
        let s = 1.0 - f64::EPSILON * (1u64 << j) as f64;
        let cand = assemble(&target, r, &m, s);
        if !controlled_alarm(detector, &(r + &cand), &m) {
            return Ok(cand);
        }
    }
    Ok(a)
}

/// Euler one-step map from injected attack to post-estimation residual,
/// `M = I − dt·C·L`.
pub fn post_se_matrix(c: &DMatrix<f64>, gain: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    DMatrix::identity(c.nrows(), c.nrows()) - c * gain * dt
}

/// Injection that moves the post-estimation residual from `r` to `target`
/// under the one-step map `m`.
pub fn propagate_with(
    m: &DMatrix<f64>,
    target: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DVector<f64>> {
    let condition = condition_number(m);
    if !(condition <= 1e12) {
        return Err(Error::IllConditioned { condition });
    }
    m.clone()
        .lu()
        .solve(&(target - r))
        .ok_or(Error::IllConditioned { condition })
}

/// Post-estimation placement of a residual target.
pub fn propagate_post_se(
    target: &DVector<f64>,
    r: &DVector<f64>,
    gain: &DMatrix<f64>,
    c: &DMatrix<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    propagate_with(&post_se_matrix(c, gain, dt), target, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{mahalanobis, Chi2Detector, CusumDetector};

    #[test]
    fn single_target_hand_value() {
        let sigma_sqrt = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 1.0]));
        let r = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let a = scua_cusum_agg(
            &r,
            1.0,
            6.0,
            4.0,
            &sigma_sqrt,
            &[1],
            true,
            ResidualMode::Literal,
        )
        .unwrap();
        assert!((a[1] - (6.0 + 0.2)).abs() < 1e-12);
        assert!((a[0] + 0.3).abs() < 1e-12);
    }

    #[test]
    fn negative_radicand_is_reported() {
        let r = DVector::zeros(2);
        let s = DMatrix::identity(2, 2);
        let err =
            scua_cusum_agg(&r, 20.0, 5.0, 2.0, &s, &[0], true, ResidualMode::Literal).unwrap_err();
        assert!(matches!(err, Error::NegativeRadicand(_)));
    }

    #[test]
    fn chi2_full_targeting_neutralizes_residual() {
        let s = DMatrix::identity(4, 4);
        let alpha = 9.5;
        for r in [
            DVector::from_vec(vec![1.0, -3.0, 0.2, 0.0]),
            DVector::from_vec(vec![-7.0, 0.5, 2.0, 1.0]),
        ] {
            let a = scua_chi2(&r, alpha, &s, &[0, 1, 2, 3], ResidualMode::Literal).unwrap();
            let post = &r + &a;
            assert!((post.norm_squared() - alpha).abs() < 1e-12);
            assert!((post - DVector::from_element(4, (alpha / 4.0).sqrt())).amax() < 1e-12);
        }
    }

    #[test]
    fn masked_mode_leaves_other_rows() {
        let s = DMatrix::identity(3, 3);
        let r = DVector::from_vec(vec![0.5, 0.7, -0.1]);
        let a = scua_chi2(&r, 4.0, &s, &[2], ResidualMode::Masked).unwrap();
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn vector_signs_mirror() {
        let r = DVector::from_vec(vec![0.4, -0.3]);
        let c = DVector::zeros(2);
        let tau = DVector::from_vec(vec![3.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 0.5]);
        let plus = scua_cusum_vec(&r, &c, &tau, &b, &[0], true, SignChoice::Plus).unwrap();
        let minus = scua_cusum_vec(&r, &c, &tau, &b, &[0], true, SignChoice::Minus).unwrap();
        assert!(((&r + &plus)[0].abs() - 4.0).abs() < 1e-12);
        assert!(((&r + &minus)[0].abs() - 4.0).abs() < 1e-12);
        assert_ne!(plus, minus);
        assert_eq!(plus[1], 0.0);
    }

    #[test]
    fn guarded_attack_never_alarms() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let sqrt = crate::linalg::psd_sqrt(&sigma);
        let det = Detector::Cusum(CusumDetector::aggregated(3.0, 11.0, &sigma).unwrap());
        let r = DVector::from_vec(vec![0.123, -0.456]);
        let a = scua_for(
            &det,
            &sqrt,
            &r,
            &[0, 1],
            true,
            ResidualMode::Literal,
            SignChoice::Plus,
        )
        .unwrap();
        let mut d = det.clone();
        let s = d.step(&(&r + &a));
        assert!(!s.alarm);
        assert!((s.c - 11.0).abs() < 1e-10);

        let chi = Detector::Chi2(Chi2Detector::new(7.0, &sigma).unwrap());
        let a = scua_for(
            &chi,
            &sqrt,
            &r,
            &[0, 1],
            true,
            ResidualMode::Literal,
            SignChoice::Plus,
        )
        .unwrap();
        let Detector::Chi2(c) = &chi else {
            unreachable!()
        };
        assert!((mahalanobis(&(&r + &a), &c.sigma_inv) - 7.0).abs() < 1e-10);
    }

    #[test]
    fn post_se_identity_limits() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        let l = DMatrix::from_row_slice(3, 2, &[0.2, 0.0, 0.0, 0.3, 0.1, 0.1]);
        let t = DVector::from_vec(vec![1.0, 2.0]);
        let r = DVector::from_vec(vec![0.5, -0.5]);
        assert_eq!(propagate_post_se(&t, &r, &l, &c, 0.0).unwrap(), &t - &r);
        assert_eq!(
            propagate_post_se(&t, &r, &DMatrix::zeros(3, 2), &c, 0.3).unwrap(),
            &t - &r
        );
        let big = DMatrix::from_element(3, 2, 1.0);
        let singular = post_se_matrix(&DMatrix::from_element(2, 3, 1.0 / 3.0), &big, 0.5);
        assert!(matches!(
            propagate_with(&singular, &t, &r),
            Err(Error::IllConditioned { .. })
        ));
    }
}
