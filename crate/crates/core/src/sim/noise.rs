//! Disturbance and noise models. Every draw is keyed by `(seed, stream, key)`
//! so a sample depends only on its time index, never on call order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn keyed_rng(seed: u64, stream: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ key))
}

pub(crate) fn standard_normals(seed: u64, stream: u64, key: u64, n: usize) -> DVector<f64> {
    let mut rng = keyed_rng(seed, stream, key);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

const DISTURBANCE_STREAM: u64 = 1;
const PROCESS_STREAM: u64 = 2;
const MEASUREMENT_STREAM: u64 = 3;

/// `q(t) = q̄ + Δq(t)` with independent Gaussian components.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    pub q_bar: DVector<f64>,
    pub sigma_q: DVector<f64>,
    pub seed: u64,
}

impl DisturbanceModel {
    pub fn new(q_bar: DVector<f64>, sigma_q: DVector<f64>, seed: u64) -> Result<Self> {
        if q_bar.len() != sigma_q.len() {
            return Err(Error::Dimension {
                what: "sigma_q",
                expected: q_bar.len(),
                got: sigma_q.len(),
            });
        }
        if sigma_q.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("sigma_q must be nonnegative".into()));
        }
        Ok(DisturbanceModel {
            q_bar,
            sigma_q,
            seed,
        })
    }

    pub fn quiet(q_bar: DVector<f64>) -> Self {
        let n = q_bar.len();
        DisturbanceModel {
            q_bar,
            sigma_q: DVector::zeros(n),
            seed: 0,
        }
    }

    /// Draw at time `t`; identical `(seed, t)` give identical vectors.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        if self.sigma_q.iter().all(|&s| s == 0.0) {
            return self.q_bar.clone();
        }
        let z = standard_normals(self.seed, DISTURBANCE_STREAM, t.to_bits(), self.q_bar.len());
        &self.q_bar + self.sigma_q.component_mul(&z)
    }
}

pub fn sample_disturbance(model: &DisturbanceModel, t: f64) -> DVector<f64> {
    model.sample(t)
}

/// Square-root factor `F` with `F Fᵀ = Σ` for a PSD matrix.
fn psd_factor(cov: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::Dimension {
            what,
            expected: cov.nrows(),
            got: cov.ncols(),
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    if (&sym - cov).amax() > 1e-12 * (1.0 + cov.amax()) {
        return Err(Error::Config(format!("{what} is not symmetric")));
    }
    let is_diag = (0..cov.nrows()).all(|i| (0..cov.ncols()).all(|j| i == j || cov[(i, j)] == 0.0));
    if is_diag {
        if cov.diagonal().iter().any(|&d| d < 0.0) {
            return Err(Error::Config(format!("{what} has a negative variance")));
        }
        return Ok(DMatrix::from_diagonal(&cov.diagonal().map(f64::sqrt)));
    }
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::Config(format!(
            "{what} is not positive semidefinite"
        )));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// Process noise `w_p` (state-sized) and measurement noise `w_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub process_cov: DMatrix<f64>,
    pub measurement_cov: DMatrix<f64>,
    pub seed: u64,
    process_factor: DMatrix<f64>,
    measurement_factor: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(
        process_cov: DMatrix<f64>,
        measurement_cov: DMatrix<f64>,
        seed: u64,
    ) -> Result<Self> {
        let process_factor = psd_factor(&process_cov, "process covariance")?;
        let measurement_factor = psd_factor(&measurement_cov, "measurement covariance")?;
        Ok(NoiseModel {
            process_cov,
            measurement_cov,
            seed,
            process_factor,
            measurement_factor,
        })
    }

    pub fn diagonal(
        process_std: &DVector<f64>,
        measurement_std: &DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&process_std.map(|s| s * s)),
            DMatrix::from_diagonal(&measurement_std.map(|s| s * s)),
            seed,
        )
    }

    pub fn zero(n: usize, p: usize) -> Self {
        Self::new(DMatrix::zeros(n, n), DMatrix::zeros(p, p), 0)
            .expect("zero covariances are valid")
    }

    pub fn n(&self) -> usize {
        self.process_cov.nrows()
    }

    pub fn p(&self) -> usize {
        self.measurement_cov.nrows()
    }

    pub fn process_sample(&self, k: u64) -> DVector<f64> {
        if self.process_factor.iter().all(|&v| v == 0.0) {
            return DVector::zeros(self.n());
        }
        &self.process_factor * standard_normals(self.seed, PROCESS_STREAM, k, self.n())
    }

    pub fn measurement_sample(&self, k: u64) -> DVector<f64> {
        if self.measurement_factor.iter().all(|&v| v == 0.0) {
            return DVector::zeros(self.p());
        }
        &self.measurement_factor * standard_normals(self.seed, MEASUREMENT_STREAM, k, self.p())
    }
}
