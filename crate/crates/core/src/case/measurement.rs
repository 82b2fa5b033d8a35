//! PMU measurement map.
//!
//! Every PMU reports its bus voltage magnitude and angle. When current rows are
//! enabled it also reports the current phasor on selected incident lines; each
//! phasor becomes two fixed rows (magnitude and angle gradients with respect to
//! the endpoint `(v, θ)`) linearized at the operating point.
//!
//! Without an explicit list, a PMU meters the lines towards neighbours that are
//! neither PMU nor generator buses, one line per neighbour, first PMU in list
//! order wins.

use std::collections::HashSet;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::ybus::branch_admittance;
use super::{GridCase, StateLayout, StateVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOptions {
    pub include_currents: bool,
}

impl Default for MeasurementOptions {
    fn default() -> Self {
        MeasurementOptions {
            include_currents: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementKind {
    VoltageMagnitude,
    VoltageAngle,
    CurrentMagnitude,
    CurrentAngle,
}

/// Meaning of one row of `C`; `far` is set for current rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub kind: MeasurementKind,
    pub bus: usize,
    pub far: Option<usize>,
}

impl MeasurementRow {
    pub fn label(&self) -> String {
        match (self.kind, self.far) {
            (MeasurementKind::VoltageMagnitude, _) => format!("vm_b{}", self.bus),
            (MeasurementKind::VoltageAngle, _) => format!("va_b{}", self.bus),
            (MeasurementKind::CurrentMagnitude, Some(f)) => format!("im_{}_{}", self.bus, f),
            (MeasurementKind::CurrentAngle, Some(f)) => format!("ia_{}_{}", self.bus, f),
            (_, None) => format!("i_b{}", self.bus),
        }
    }

    /// Whether the row reads a quantity attached to bus `id`.
    pub fn touches(&self, id: usize) -> bool {
        self.bus == id || self.far == Some(id)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementLayout {
    pub rows: Vec<MeasurementRow>,
}

impl MeasurementLayout {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.label()).collect()
    }

    /// Rows that read something at any of `buses`.
    pub fn rows_touching(&self, buses: &[usize]) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| buses.iter().any(|&b| self.rows[i].touches(b)))
            .collect()
    }
}

fn metered_lines(case: &GridCase) -> Result<Vec<(usize, usize, usize)>> {
    let pmu: HashSet<usize> = case.pmus.iter().map(|p| p.bus).collect();
    let gens: HashSet<usize> = case.generators.iter().map(|g| g.bus).collect();
    let mut claimed = HashSet::new();
    let mut out = Vec::new();
    for p in &case.pmus {
        match &p.metered_lines {
            Some(far) => {
                for &f in far {
                    let line = case
                        .lines
                        .iter()
                        .position(|l| {
                            (l.from == p.bus && l.to == f) || (l.to == p.bus && l.from == f)
                        })
                        .ok_or_else(|| {
                            Error::InvalidCase(format!(
                                "PMU at bus {} has no line to bus {f}",
                                p.bus
                            ))
                        })?;
                    out.push((p.bus, f, line));
                }
            }
            None => {
                for (k, l) in case.lines.iter().enumerate() {
                    let far = if l.from == p.bus {
                        l.to
                    } else if l.to == p.bus {
                        l.from
                    } else {
                        continue;
                    };
                    if pmu.contains(&far) || gens.contains(&far) || !claimed.insert(far) {
                        continue;
                    }
                    out.push((p.bus, far, k));
                }
            }
        }
    }
    Ok(out)
}

pub fn build_measurement_matrix(
    case: &GridCase,
    layout: &StateLayout,
    x_op: &StateVector,
    opts: &MeasurementOptions,
) -> Result<(DMatrix<f64>, MeasurementLayout)> {
    if case.pmus.is_empty() {
        return Err(Error::InvalidCase("no PMUs placed".into()));
    }
    layout.check(x_op)?;
    let mut rows: Vec<(MeasurementRow, Vec<(usize, f64)>)> = Vec::new();
    for p in &case.pmus {
        let b = case.bus_index(p.bus)?;
        rows.push((
            MeasurementRow {
                kind: MeasurementKind::VoltageMagnitude,
                bus: p.bus,
                far: None,
            },
            vec![(layout.v(b), 1.0)],
        ));
        rows.push((
            MeasurementRow {
                kind: MeasurementKind::VoltageAngle,
                bus: p.bus,
                far: None,
            },
            vec![(layout.theta(b), 1.0)],
        ));
    }
    if opts.include_currents {
        for (near, far, k) in metered_lines(case)? {
            let line = &case.lines[k];
            let [yff, yft, ytf, ytt] = branch_admittance(line)?;
            let (a, c) = if line.from == near {
                (yff, yft)
            } else {
                (ytt, ytf)
            };
            let (m, o) = (case.bus_index(near)?, case.bus_index(far)?);
            let vm = Complex::from_polar(x_op[layout.v(m)], x_op[layout.theta(m)]);
            let vo = Complex::from_polar(x_op[layout.v(o)], x_op[layout.theta(o)]);
            let i = a * vm + c * vo;
            let mag = i.norm();
            if mag < 1e-9 {
                return Err(Error::InvalidCase(format!(
                    "line {near}-{far} carries no current at the operating point"
                )));
            }
            let j = Complex::new(0.0, 1.0);
            let partials = [
                (
                    layout.v(m),
                    a * Complex::from_polar(1.0, x_op[layout.theta(m)]),
                ),
                (layout.theta(m), j * a * vm),
                (
                    layout.v(o),
                    c * Complex::from_polar(1.0, x_op[layout.theta(o)]),
                ),
                (layout.theta(o), j * c * vo),
            ];
            let conj = i.conj();
            rows.push((
                MeasurementRow {
                    kind: MeasurementKind::CurrentMagnitude,
                    bus: near,
                    far: Some(far),
                },
                partials
                    .iter()
                    .map(|&(s, d)| (s, (conj * d).re / mag))
                    .collect(),
            ));
            rows.push((
                MeasurementRow {
                    kind: MeasurementKind::CurrentAngle,
                    bus: near,
                    far: Some(far),
                },
                partials
                    .iter()
                    .map(|&(s, d)| (s, (conj * d).im / (mag * mag)))
                    .collect(),
            ));
        }
    }
    let mut c = DMatrix::zeros(rows.len(), layout.n());
    for (r, (_, coeffs)) in rows.iter().enumerate() {
        for &(s, v) in coeffs {
            c[(r, s)] += v;
        }
    }
    Ok((
        c,
        MeasurementLayout {
            rows: rows.into_iter().map(|(r, _)| r).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;

    #[test]
    fn single_pmu_without_currents_selects_v_theta() {
        let case = parse_case(
            "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 1 10 0 0 0 1 0 1.1 0.9\n[branch]\n1 2 0 0.1 0 0\n[pmu]\n1\n",
        )
        .unwrap();
        let layout = StateLayout::new(0, 2);
        let x = StateVector::from_vec(vec![1.01, 0.98, 0.0, -0.1]);
        let (c, m) = build_measurement_matrix(
            &case,
            &layout,
            &x,
            &MeasurementOptions {
                include_currents: false,
            },
        )
        .unwrap();
        assert_eq!(c.nrows(), 2);
        let y = &c * &x;
        assert_eq!(y[0], 1.01);
        assert_eq!(y[1], 0.0);
        assert_eq!(m.labels(), vec!["vm_b1", "va_b1"]);
    }

    #[test]
    fn current_rows_match_finite_differences() {
        let case = parse_case(
            "[bus]\n1 3 0 0 0 0 1 0 1.1 0.9\n2 1 10 0 0 0 1 0 1.1 0.9\n[branch]\n1 2 0.02 0.1 0.04 0 0.97\n[pmu]\n2\n",
        )
        .unwrap();
        let layout = StateLayout::new(0, 2);
        let x = StateVector::from_vec(vec![1.01, 0.97, 0.0, -0.08]);
        let (c, _) =
            build_measurement_matrix(&case, &layout, &x, &MeasurementOptions::default()).unwrap();
        assert_eq!(c.nrows(), 4);
        let line = &case.lines[0];
        let [_, _, ytf, ytt] = branch_admittance(line).unwrap();
        let current = |x: &StateVector| {
            ytt * Complex::from_polar(x[1], x[3]) + ytf * Complex::from_polar(x[0], x[2])
        };
        let h = 1e-7;
        for k in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (ip, im) = (current(&xp), current(&xm));
            let dmag = (ip.norm() - im.norm()) / (2.0 * h);
            let dang = (ip.arg() - im.arg()) / (2.0 * h);
            assert!((dmag - c[(2, k)]).abs() < 1e-6);
            assert!((dang - c[(3, k)]).abs() < 1e-6);
        }
    }
}
