use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::config::{DetectorKind, ScenarioConfig, ScopeChoice};
use super::metrics::compute_metrics;
use crate::attack::{
    attack_zone, icaa, scaa_optimize, sigma_sqrt, AttackSpec, AttackStep, AttackTrace, AttackZone,
    DetectorParams, Placement, ScaaCache, StepContext, Strategy,
};
use crate::case::{
    eval_constraints, ConstraintScope, DescriptorSystem, MeasurementKind, StateVector,
};
use crate::detectors::{
    calibrate_cusum, chi2_threshold, CalibrationReport, Chi2Detector, CusumMode, Detector,
    DetectorSample,
};
use crate::error::{Error, Result};
use crate::observer::{estimate, estimate_sigma, load_or_synthesize_gain, Observer};
use crate::sim::{simulate, DisturbanceModel, NoiseModel, Trajectory};

/// Everything that depends only on the system, noise levels, observer and
/// detector settings: reused across seeds and sweep points.
#[derive(Debug)]
pub struct Setup {
    pub sys: DescriptorSystem,
    pub gain: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_sqrt: DMatrix<f64>,
    /// Fresh (zero-state) detector.
    pub detector: Detector,
    pub calibration: Option<CalibrationReport>,
    pub process_std: DVector<f64>,
    pub measurement_std: DVector<f64>,
    pub disturbance_std: DVector<f64>,
}

impl Setup {
    pub fn noise(&self, seed: u64) -> Result<NoiseModel> {
        NoiseModel::diagonal(&self.process_std, &self.measurement_std, seed)
    }

    pub fn disturbance(&self, seed: u64) -> Result<DisturbanceModel> {
        DisturbanceModel::new(
            self.sys.init.q_bar.clone(),
            self.disturbance_std.clone(),
            seed,
        )
    }

    pub fn simulate(&self, seed: u64, dt: f64, horizon: f64) -> Result<Trajectory> {
        let sys = &self.sys;
        simulate(
            sys,
            &sys.init.x0,
            &sys.init.u0,
            &self.disturbance(seed)?,
            &self.noise(seed)?,
            dt,
            horizon,
        )
    }
}

fn setup_key(cfg: &ScenarioConfig) -> String {
    serde_json::json!({
        "case": cfg.case,
        "form": cfg.reactive_form,
        "dt": cfg.dt,
        "noise": cfg.noise,
        "meas": cfg.measurements,
        "observer": cfg.observer,
        "detector": cfg.detector,
    })
    .to_string()
}

type SetupCache = Mutex<HashMap<String, Arc<Setup>>>;

fn cache() -> &'static SetupCache {
    static CACHE: OnceLock<SetupCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Builds (or fetches) the system, observer gain, residual covariance and
/// calibrated detector for a configuration.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Arc<Setup>> {
    let key = setup_key(cfg);
    if let Some(s) = cache().lock().expect("setup cache").get(&key) {
        return Ok(s.clone());
    }
    let setup = Arc::new(build_setup(cfg)?);
    cache()
        .lock()
        .expect("setup cache")
        .insert(key, setup.clone());
    Ok(setup)
}

fn build_setup(cfg: &ScenarioConfig) -> Result<Setup> {
    let case = cfg.grid_case()?;
    let sys = DescriptorSystem::from_case(&case, &cfg.measurements)?;
    let gain = load_or_synthesize_gain(&sys, &cfg.observer.gain, cfg.dt)?;
    let (n, nd, p, nb) = (sys.n(), sys.n_dynamic(), sys.p(), sys.layout.n_bus);
    let process_std = DVector::from_fn(n, |i, _| if i < nd { cfg.noise.process_std } else { 0.0 });
    let measurement_std = DVector::from_fn(p, |i, _| match sys.measurements.rows[i].kind {
        MeasurementKind::VoltageAngle | MeasurementKind::CurrentAngle => cfg.noise.angle_std,
        _ => cfg.noise.measurement_std,
    });
    let mut disturbance_std = DVector::zeros(4 * nb);
    for r in &case.renewables {
        let b = case.bus_index(r.bus)?;
        disturbance_std[b] += cfg.noise.renewable_sigma * r.capacity;
        disturbance_std[nb + b] += cfg.noise.renewable_sigma * r.capacity;
    }
    for (b, bus) in case.buses.iter().enumerate() {
        disturbance_std[2 * nb + b] = cfg.noise.load_sigma * bus.p_load.abs();
        disturbance_std[3 * nb + b] = cfg.noise.load_sigma * bus.q_load.abs();
    }
    let mut setup = Setup {
        sys,
        gain,
        sigma: DMatrix::zeros(0, 0),
        sigma_sqrt: DMatrix::zeros(0, 0),
        detector: Detector::Chi2(Chi2Detector {
            alpha: 1.0,
            sigma_inv: DMatrix::zeros(0, 0),
        }),
        calibration: None,
        process_std,
        measurement_std,
        disturbance_std,
    };

    let det = &cfg.detector;
    let traj = setup
        .simulate(det.calibration_seed, cfg.dt, det.calibration_horizon)
        .map_err(|e| Error::Stage {
            step: 0,
            stage: "calibration",
            source: Box::new(e),
        })?;
    let trace = estimate(&setup.sys, &setup.gain, &traj, &setup.sys.init.x0)?;
    let sigma = estimate_sigma(&trace.residuals)?;
    let m = det.false_alarm_interval;
    let (detector, calibration) = match det.kind {
        DetectorKind::Chi2 => {
            let alpha = det.alpha.unwrap_or_else(|| chi2_threshold(p, m));
            (Detector::Chi2(Chi2Detector::new(alpha, &sigma)?), None)
        }
        DetectorKind::CusumAggregated | DetectorKind::CusumVector => {
            let mode = if det.kind == DetectorKind::CusumAggregated {
                CusumMode::Aggregated
            } else {
                CusumMode::Vector
            };
            let (d, report) = calibrate_cusum(&trace.residuals, mode, Some(&sigma), m)?;
            (Detector::Cusum(d), Some(report))
        }
    };
    setup.sigma_sqrt = sigma_sqrt(&sigma);
    setup.sigma = sigma;
    setup.detector = detector;
    setup.calibration = calibration;
    Ok(setup)
}

/// Resolved attack campaign for one scenario.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub spec: AttackSpec,
    pub zone: AttackZone,
    pub scope: ConstraintScope,
}

pub fn plan_attack(cfg: &ScenarioConfig, setup: &Setup) -> Result<Option<AttackPlan>> {
    let Some(a) = &cfg.attack else {
        return Ok(None);
    };
    let sys = &setup.sys;
    let p = sys.p();
    let gamma: Vec<usize> = match a.n_targets {
        Some(n) if n == 0 || n > p => {
            return Err(Error::Config(format!(
                "n_targets must lie in 1..={p}, got {n}"
            )));
        }
        Some(n) => (0..n).collect(),
        None => {
            let mut rows: BTreeSet<usize> = sys
                .measurements
                .rows_touching(&a.target_buses)
                .into_iter()
                .collect();
            rows.extend(a.target_rows.iter().copied());
            rows.into_iter().collect()
        }
    };
    let mut buses: BTreeSet<usize> = a.target_buses.iter().copied().collect();
    for &i in &gamma {
        let row = sys.measurements.rows.get(i).ok_or(Error::Dimension {
            what: "targeted measurement index",
            expected: p,
            got: i + 1,
        })?;
        buses.insert(row.bus);
        buses.extend(row.far);
    }
    let buses: Vec<usize> = buses.into_iter().collect();
    let zone = attack_zone(&sys.case, &sys.ybus, &buses, a.d_max, a.epsilon)?;
    let scope = match a.scope {
        ScopeChoice::Zone => ConstraintScope::Zone(zone.scope_indices(&sys.case)),
        ScopeChoice::Full => ConstraintScope::Full,
    };
    let spec = AttackSpec {
        gamma,
        k_star: start_step(a.start_time, cfg.dt),
        strategy: a.strategy,
        detector_params: Some(DetectorParams::of(&setup.detector)),
        icaa: a.icaa(),
        placement: a.placement,
        residual_mode: a.residual_mode,
        sign: a.sign,
    };
    spec.validate(p)?;
    Ok(Some(AttackPlan { spec, zone, scope }))
}

/// First step index with `t ≥ start`.
pub fn start_step(start: f64, dt: f64) -> usize {
    (start / dt - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    pub rmse: f64,
    pub mean_mae: f64,
    pub mean_g_abs_sum: f64,
    pub violation_steps: usize,
    pub alarms: usize,
    pub attacked_steps: usize,
    pub reverted_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub times: Vec<f64>,
    pub state_names: Vec<String>,
    pub truth: Vec<StateVector>,
    /// `x̂_k`, the estimate available before `y_k` arrives.
    pub estimates: Vec<StateVector>,
    pub rmse: f64,
    pub mae_series: Vec<f64>,
    pub abs_error: Vec<DVector<f64>>,
    /// Violations at `x̂_{k+1}` within the attack scope (full network without an attack).
    pub violations: Vec<usize>,
    /// `|Σ g|` at `x̂_{k+1}`.
    pub g_abs_sum: Vec<f64>,
    pub detector: Vec<DetectorSample>,
    pub alarm_times: Vec<f64>,
    pub runtime_s: f64,
    /// Time spent choosing attack vectors.
    pub attack_time_s: f64,
    pub attack: Option<AttackTrace>,
    pub plan: Option<AttackPlan>,
}

impl ScenarioResult {
    /// True when an attack ran and every attacked step had to be withdrawn.
    pub fn attack_fully_reverted(&self) -> bool {
        self.attack
            .as_ref()
            .is_some_and(|t| !t.is_empty() && t.reverted() == t.len())
    }

    pub fn summary(&self) -> ScenarioSummary {
        let steps = self.times.len();
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        ScenarioSummary {
            name: self.name.clone(),
            seed: self.seed,
            steps,
            rmse: self.rmse,
            mean_mae: mean(&self.mae_series),
            mean_g_abs_sum: mean(&self.g_abs_sum),
            violation_steps: self.violations.iter().filter(|&&v| v > 0).count(),
            alarms: self.alarm_times.len(),
            attacked_steps: self.attack.as_ref().map_or(0, |t| t.len()),
            reverted_steps: self.attack.as_ref().map_or(0, |t| t.reverted()),
        }
    }
}

/// Simulates, attacks, estimates and detects step by step.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let setup = prepare(cfg)?;
    let plan = plan_attack(cfg, &setup)?;
    let start = Instant::now();
    let sys = &setup.sys;
    let (dt, p) = (cfg.dt, sys.p());
    let truth = setup.simulate(cfg.seed, dt, cfg.horizon)?;
    let (u, q_bar) = (&sys.init.u0, &sys.init.q_bar);
    let count = truth.len();

    let placement = plan
        .as_ref()
        .map_or(Placement::PreSe, |pl| pl.spec.placement);
    let scope = plan
        .as_ref()
        .map_or(ConstraintScope::Full, |pl| pl.scope.clone());
    let zeta = cfg.attack.as_ref().map_or(0.22, |a| a.zeta);

    let mut observer = Observer::new(sys, setup.gain.clone())?;
    let mut detector = setup.detector.clone();
    let mut scaa_cache = ScaaCache::default();
    let mut x_hat = sys.init.x0.clone();
    let mut estimates = Vec::with_capacity(count);
    let mut violations = Vec::with_capacity(count);
    let mut g_abs_sum = Vec::with_capacity(count);
    let mut det_trace = Vec::with_capacity(count);
    let mut alarm_times = Vec::new();
    let mut attack_trace = plan.as_ref().map(|_| AttackTrace::default());
    let mut attack_time = 0.0;

    for k in 0..count {
        let y = &truth.measurements[k];
        estimates.push(x_hat.clone());
        let mut a = DVector::zeros(p);
        let mut status = None;
        if let Some(pl) = plan.as_ref().filter(|pl| k >= pl.spec.k_star) {
            let t0 = Instant::now();
            let ctx = StepContext {
                sys,
                observer: &observer,
                detector: &detector,
                sigma_sqrt: &setup.sigma_sqrt,
                x_hat: &x_hat,
                y,
                u,
                q_bar,
                dt,
                scope: &pl.scope,
                is_first_step: k == pl.spec.k_star,
            };
            let chosen: Result<(DVector<f64>, bool, usize)> = match pl.spec.strategy {
                Strategy::Scua => ctx.scua(&pl.spec).map(|a| (a, true, 1)),
                Strategy::Icaa => ctx
                    .scua(&pl.spec)
                    .and_then(|a0| icaa(&ctx, &pl.spec, a0))
                    .map(|o| (o.a, o.feasible, o.iterations)),
                Strategy::ScaaOpt => {
                    scaa_optimize(&ctx, &pl.spec, &mut scaa_cache).map(|o| (o.a, o.feasible, 1))
                }
            };
            let (vec, feasible, iterations) = chosen.map_err(|e| e.at(k, "attack"))?;
            attack_time += t0.elapsed().as_secs_f64();
            a = vec;
            status = Some((feasible, iterations));
        }
        let y_star = y + &a;
        let x_next = observer
            .step(sys, &x_hat, &y_star, u, q_bar, dt)
            .map_err(|e| e.at(k, "observer"))?;
        let r = match placement {
            Placement::PreSe => &y_star - &sys.c * &x_hat,
            Placement::PostSe => &y_star - &sys.c * &x_next,
        };
        let sample = detector.step(&r);
        if sample.alarm {
            alarm_times.push(truth.times[k]);
        }
        let report = eval_constraints(sys, &x_next, q_bar, zeta, &scope);
        violations.push(report.violation_count);
        g_abs_sum.push(report.g_abs_sum);
        det_trace.push(sample);
        if let (Some(trace), Some((feasible, iterations))) = (attack_trace.as_mut(), status) {
            trace.steps.push(AttackStep {
                k,
                a,
                y_star,
                x_hat_star: x_next.clone(),
                feasible,
                iterations,
                report,
                detector: sample,
            });
        }
        x_hat = x_next;
    }

    let metrics = compute_metrics(&truth.states, &estimates)?;
    Ok(ScenarioResult {
        name: cfg.name.clone(),
        seed: cfg.seed,
        state_names: sys.state_names(),
        times: truth.times,
        truth: truth.states,
        estimates,
        rmse: metrics.rmse,
        mae_series: metrics.mae_series,
        abs_error: metrics.abs_error,
        violations,
        g_abs_sum,
        detector: det_trace,
        alarm_times,
        runtime_s: start.elapsed().as_secs_f64(),
        attack_time_s: attack_time,
        attack: attack_trace,
        plan,
    })
}
