use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ndae_attack::detectors::{
    calibrate_cusum, chi2_threshold, Chi2Detector, CusumDetector, CusumMode,
};
use ndae_attack::Error;

fn gaussian(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| StandardNormal.sample(rng))
}

#[test]
fn two_degree_threshold_is_closed_form() {
    // χ²(2) has CDF 1 − e^{−x/2}.
    for m in [2.0, 10.0, 1000.0, 1e6] {
        let alpha = chi2_threshold(2, m);
        assert!((alpha - 2.0 * f64::ln(m)).abs() < 1e-9 * alpha, "m = {m}");
    }
}

#[test]
fn thresholds_match_tabulated_quantiles() {
    let table = [
        (1, 20.0, 3.841458820694124),
        (10, 100.0, 23.209251158954356),
        (29, 1000.0, 58.301173489794905),
        (58, 1000.0, 97.03882856650883),
    ];
    for (n, m, q) in table {
        let alpha = chi2_threshold(n, m);
        assert!((alpha - q).abs() < 1e-9 * q, "n = {n}: {alpha} vs {q}");
    }
}

#[test]
fn chi2_false_alarm_rate_matches_design() {
    let (p, m, n) = (4, 50.0, 200_000);
    let det = Chi2Detector::new(chi2_threshold(p, m), &DMatrix::identity(p, p)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alarms = (0..n)
        .filter(|_| det.step(&gaussian(&mut rng, p)).1)
        .count();
    let rate = alarms as f64 / n as f64;
    let q = 1.0 / m;
    let std = (q * (1.0 - q) / n as f64).sqrt();
    assert!((rate - q).abs() < 3.0 * std, "rate {rate} vs {q}");
}

#[test]
fn aggregated_calibration_reaches_target_interval() {
    let p = 3;
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 0.25]));
    let root = sigma.map(f64::sqrt);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let history: Vec<_> = (0..20_000).map(|_| &root * gaussian(&mut rng, p)).collect();
    let (det, report) =
        calibrate_cusum(&history, CusumMode::Aggregated, Some(&sigma), 500.0).unwrap();

    let z: Vec<f64> = history[..10_000]
        .iter()
        .map(|r| (0..p).map(|i| r[i] * r[i] / sigma[(i, i)]).sum())
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
    assert!((report.b[0] - (mean + std)).abs() < 1e-9);
    assert_eq!(report.held_out_len, 10_000);
    assert!(report.achieved_interval[0] >= 500.0);

    // Replaying the held-out half reproduces the reported interval.
    let mut replay = det.clone();
    let alarms = history[10_000..]
        .iter()
        .filter(|r| replay.step(r).alarm())
        .count();
    let achieved = if alarms == 0 {
        10_000.0
    } else {
        10_000.0 / alarms as f64
    };
    assert_eq!(achieved, report.achieved_interval[0]);

    // A slightly smaller τ misses the target.
    let mut tighter =
        CusumDetector::aggregated(report.b[0], report.tau[0] * 0.999, &sigma).unwrap();
    let alarms = history[10_000..]
        .iter()
        .filter(|r| tighter.step(r).alarm())
        .count();
    assert!(10_000.0 / (alarms as f64) < 500.0);
}

#[test]
fn vector_calibration_is_per_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scale = [1.0, 3.0];
    let history: Vec<_> = (0..4000)
        .map(|_| gaussian(&mut rng, 2).component_mul(&DVector::from_column_slice(&scale)))
        .collect();
    let (_, report) = calibrate_cusum(&history, CusumMode::Vector, None, 100.0).unwrap();
    assert_eq!(report.b.len(), 2);
    // |N(0, s²)| has mean s·√(2/π) and std s·√(1 − 2/π).
    let unit = (2.0 / std::f64::consts::PI).sqrt() + (1.0 - 2.0 / std::f64::consts::PI).sqrt();
    for i in 0..2 {
        assert!(
            (report.b[i] / (scale[i] * unit) - 1.0).abs() < 0.05,
            "{:?}",
            report.b
        );
        assert!(report.achieved_interval[i] >= 100.0);
    }
    assert!(
        (report.tau[1] / report.tau[0] - 3.0).abs() < 1.0,
        "{:?}",
        report.tau
    );
}

#[test]
fn calibration_rejects_short_or_unreachable_histories() {
    let history = vec![DVector::from_element(2, 0.1); 10];
    assert!(matches!(
        calibrate_cusum(&history, CusumMode::Vector, None, 5.0),
        Err(Error::InsufficientHistory { .. })
    ));
    let history = vec![DVector::from_element(2, 0.1); 100];
    assert!(matches!(
        calibrate_cusum(&history, CusumMode::Vector, None, 1000.0),
        Err(Error::UnreachableTarget { .. })
    ));
}
