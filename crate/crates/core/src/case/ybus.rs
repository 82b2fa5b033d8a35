use nalgebra::{Complex, DMatrix};

use super::{GridCase, Line};
use crate::error::{Error, Result};

/// Dense bus admittance matrix, split into conductance and susceptance parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<f64> {
        Complex::new(self.g[(i, j)], self.b[(i, j)])
    }

    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j).norm()
    }
}

/// Two-port π-model of a branch: `(y_ff, y_ft, y_tf, y_tt)`.
pub(crate) fn branch_admittance(line: &Line) -> Result<[Complex<f64>; 4]> {
    if line.r == 0.0 && line.x == 0.0 {
        return Err(Error::ZeroImpedance {
            from: line.from,
            to: line.to,
        });
    }
    let y = Complex::new(1.0, 0.0) / Complex::new(line.r, line.x);
    let half = Complex::new(0.0, line.b_shunt / 2.0);
    let t = line.tap;
    Ok([(y + half) / (t * t), -y / t, -y / t, y + half])
}

pub fn build_ybus(case: &GridCase) -> Result<AdmittanceMatrix> {
    let n = case.bus_count();
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for line in &case.lines {
        let f = case.bus_index(line.from)?;
        let t = case.bus_index(line.to)?;
        let [yff, yft, ytf, ytt] = branch_admittance(line)?;
        y[(f, f)] += yff;
        y[(f, t)] += yft;
        y[(t, f)] += ytf;
        y[(t, t)] += ytt;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex::new(bus.g_shunt, bus.b_shunt);
    }
    Ok(AdmittanceMatrix {
        g: y.map(|c| c.re),
        b: y.map(|c| c.im),
    })
}
