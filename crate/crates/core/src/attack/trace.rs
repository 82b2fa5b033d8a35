use std::io::Write;

use nalgebra::DVector;

use crate::case::ConstraintReport;
use crate::detectors::DetectorSample;
use crate::error::Result;

/// One attacked step. `y_star = y + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackStep {
    pub k: usize,
    pub a: DVector<f64>,
    pub y_star: DVector<f64>,
    pub x_hat_star: DVector<f64>,
    pub feasible: bool,
    pub iterations: usize,
    pub report: ConstraintReport,
    pub detector: DetectorSample,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackTrace {
    pub steps: Vec<AttackStep>,
}

impl AttackTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps at which the attack had to be withdrawn.
    pub fn reverted(&self) -> usize {
        self.steps.iter().filter(|s| !s.feasible).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "feasible",
            "iterations",
            "norm_a",
            "g_abs_sum",
            "violations",
            "detector_stat",
        ])?;
        for s in &self.steps {
            w.write_record([
                s.k.to_string(),
                s.feasible.to_string(),
                s.iterations.to_string(),
                s.a.norm().to_string(),
                s.report.g_abs_sum.to_string(),
                s.report.violation_count.to_string(),
                s.detector.c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
