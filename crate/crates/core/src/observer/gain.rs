//! Observer gain: file IO, a Riccati-based stand-in design and a
//! simulation check.
//!
//! The design eliminates the algebraic states through the linearized network
//! (`x_a ≈ H x_d`, `H = −G_a⁻¹ G_d`) and designs the reduced gain by a
//! shifted Riccati equation. The lift back to `n×p` uses
//! `L_a = −κ G_a C_a⁺`, which gives the reduced error dynamics
//! `A_r − L_eff C_r` with `L_eff = (κ F_a C_a⁺ + L_d)/(1 + κ)`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Observer;
use crate::case::DescriptorSystem;
use crate::error::{Error, Result};
use crate::linalg::{care, eigenvalues, right_pinv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainDesign {
    /// Pull of the algebraic estimate towards the measured subspace.
    pub kappa: f64,
    /// Guaranteed decay rate as a multiple of the slowest plant mode.
    pub pole_multiple: f64,
    /// Measurement weight `R = ρ I` (state weight is `I`).
    pub rho: f64,
}

impl Default for GainDesign {
    fn default() -> Self {
        GainDesign {
            kappa: 1.0,
            pole_multiple: 5.0,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSource {
    File(PathBuf),
    Synthesize(GainDesign),
}

impl Default for GainSource {
    fn default() -> Self {
        GainSource::Synthesize(GainDesign::default())
    }
}

/// Slowest decay rate among the non-degenerate modes of `a`.
fn slowest_rate(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .and_then(|ev| {
            ev.iter()
                .filter(|l| l.norm() > 1e-6)
                .map(|l| l.re.abs())
                .min_by(|x, y| x.total_cmp(y))
        })
        .unwrap_or(0.05)
}

pub fn synthesize_gain(sys: &DescriptorSystem, design: &GainDesign) -> Result<DMatrix<f64>> {
    if !(design.kappa >= 0.0 && design.rho > 0.0 && design.pole_multiple >= 0.0) {
        return Err(Error::Config(
            "gain design needs kappa ≥ 0, rho > 0, pole_multiple ≥ 0".into(),
        ));
    }
    let (nd, na, p) = (sys.n_dynamic(), sys.layout.n_algebraic(), sys.p());
    let j = sys.jacobian(&sys.init.x0);
    let fd = j.view((0, 0), (nd, nd)).into_owned();
    let fa = j.view((0, nd), (nd, na)).into_owned();
    let gd = j.view((nd, 0), (na, nd)).into_owned();
    let ga = j.view((nd, nd), (na, na)).into_owned();
    let ca = sys.c.columns(nd, na).into_owned();
    let h = -ga.clone().lu().solve(&gd).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let ar = &fd + &fa * &h;
    let cr = &ca * &h;
    let ca_pinv = right_pinv(&ca)?;

    let shift = design.pole_multiple * slowest_rate(&ar);
    let a_bar = ar.transpose() + DMatrix::identity(nd, nd) * shift;
    let x = care(
        &a_bar,
        &cr.transpose(),
        &DMatrix::identity(nd, nd),
        design.rho,
    )?;
    let l_eff = &x * cr.transpose() / design.rho;

    let k = design.kappa;
    let l_d = &l_eff * (1.0 + k) - &fa * &ca_pinv * k;
    let l_a = -(&ga * &ca_pinv) * k;
    let mut gain = DMatrix::zeros(nd + na, p);
    gain.view_mut((0, 0), (nd, p)).copy_from(&l_d);
    gain.view_mut((nd, 0), (na, p)).copy_from(&l_a);
    Ok(gain)
}

pub fn write_gain(path: &Path, gain: &DMatrix<f64>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{} {}", gain.nrows(), gain.ncols())?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for r in 0..gain.nrows() {
        w.write_record(gain.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a gain file (`n p` header, then `n` comma-separated rows).
pub fn read_gain(text: &str) -> Result<DMatrix<f64>> {
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Config(format!("bad gain header `{header}`")))
        })
        .collect::<Result<_>>()?;
    let [n, p] = dims[..] else {
        return Err(Error::Config(format!(
            "gain header needs `n p`, found `{header}`"
        )));
    };
    let mut values = Vec::with_capacity(n * p);
    let mut rows = 0;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != p {
            return Err(Error::Dimension {
                what: "gain row",
                expected: p,
                got: rec.len(),
            });
        }
        for field in rec.iter() {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad gain entry `{field}`")))?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Dimension {
            what: "gain rows",
            expected: n,
            got: rows,
        });
    }
    Ok(DMatrix::from_row_slice(n, p, &values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCheck {
    pub initial_error: f64,
    pub final_error: f64,
    pub max_error: f64,
}

impl GainCheck {
    pub fn passed(&self) -> bool {
        self.final_error.is_finite()
            && self.final_error < self.initial_error
            && self.max_error < 10.0 * self.initial_error
    }
}

/// Attack-free, noise-free 10 s run from a rotated and flux-shifted initial estimate.
pub fn validate_gain(sys: &DescriptorSystem, gain: &DMatrix<f64>, dt: f64) -> Result<GainCheck> {
    let l = &sys.layout;
    let x = &sys.init.x0;
    let mut x_hat = x.clone();
    for g in 0..l.n_gen {
        x_hat[l.delta(g)] += 0.05;
        x_hat[l.eq(g)] += 0.02;
    }
    for b in 0..l.n_bus {
        x_hat[l.theta(b)] += 0.05;
    }
    let y: DVector<f64> = &sys.c * x;
    let mut obs = Observer::new(sys, gain.clone())?;
    let initial_error = (x - &x_hat).norm();
    let mut max_error = initial_error;
    let steps = (10.0 / dt).round() as usize;
    for _ in 0..steps {
        x_hat = match obs.step(sys, &x_hat, &y, &sys.init.u0, &sys.init.q_bar, dt) {
            Ok(v) => v,
            Err(_) => {
                return Ok(GainCheck {
                    initial_error,
                    final_error: f64::INFINITY,
                    max_error: f64::INFINITY,
                })
            }
        };
        max_error = max_error.max((x - &x_hat).norm());
    }
    Ok(GainCheck {
        initial_error,
        final_error: (x - &x_hat).norm(),
        max_error,
    })
}

/// Loads or designs `L`, then insists on a passing [`validate_gain`] check.
pub fn load_or_synthesize_gain(
    sys: &DescriptorSystem,
    source: &GainSource,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let gain = match source {
        GainSource::File(path) => read_gain(&std::fs::read_to_string(path)?)?,
        GainSource::Synthesize(design) => synthesize_gain(sys, design)?,
    };
    if gain.nrows() != sys.n() || gain.ncols() != sys.p() {
        return Err(Error::Dimension {
            what: "observer gain",
            expected: sys.n() * sys.p(),
            got: gain.nrows() * gain.ncols(),
        });
    }
    let check = validate_gain(sys, &gain, dt)?;
    if !check.passed() {
        return Err(Error::GainValidation(format!(
            "error {:.3e} → {:.3e} (max {:.3e}) over 10 s",
            check.initial_error, check.final_error, check.max_error
        )));
    }
    Ok(gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::tests_support::three_bus_system;

    #[test]
    fn reduced_error_dynamics_meet_the_shift() {
        let sys = three_bus_system();
        let design = GainDesign::default();
        let gain = synthesize_gain(&sys, &design).unwrap();
        let (nd, na) = (sys.n_dynamic(), sys.layout.n_algebraic());
        // Closed-loop linearized error dynamics with the algebraic rows eliminated.
        let lc = &gain * &sys.c;
        let m = sys.jacobian(&sys.init.x0) - lc;
        let ga = m.view((nd, nd), (na, na)).into_owned();
        let h = -ga
            .lu()
            .solve(&m.view((nd, 0), (na, nd)).into_owned())
            .unwrap();
        let a = m.view((0, 0), (nd, nd)) + m.view((0, nd), (nd, na)) * h;
        let ev = eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|l| l.re < 0.0), "{ev:?}");
    }

    #[test]
    fn gain_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let gain = DMatrix::from_fn(4, 3, |i, j| i as f64 * 0.1 - j as f64 / 3.0);
        write_gain(&path, &gain).unwrap();
        assert_eq!(
            read_gain(&std::fs::read_to_string(&path).unwrap()).unwrap(),
            gain
        );
    }

    #[test]
    fn wrong_shape_file_is_rejected() {
        let sys = three_bus_system();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        write_gain(&path, &DMatrix::identity(sys.n(), sys.n())).unwrap();
        let err = load_or_synthesize_gain(&sys, &GainSource::File(path), 0.01).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(read_gain("2 2\n1,2\n").is_err());
    }

    #[test]
    fn zero_gain_fails_validation() {
        let sys = three_bus_system();
        let check = validate_gain(&sys, &DMatrix::zeros(sys.n(), sys.p()), 0.01).unwrap();
        assert!(!check.passed());
    }
}
