//! Static network description, admittance matrix, power flow and the
//! assembled descriptor (NDAE) model.

mod constraints;
mod descriptor;
mod measurement;
mod parse;
mod powerflow;
mod state;
mod ybus;

pub use constraints::{
    eval_constraints, inequality_jacobian, inequality_values, linearize_constraints, scope_rows,
    ConstraintReport, ConstraintScope, Linearization, ScopeRows,
};
pub use descriptor::{assemble_descriptor, DescriptorSystem, InitialConditions};
pub use measurement::{
    build_measurement_matrix, MeasurementKind, MeasurementLayout, MeasurementOptions,
    MeasurementRow,
};
pub use parse::parse_case;
pub use powerflow::{solve_power_flow, PowerFlowOptions, PowerFlowSolution};
pub use state::{StateLayout, StateParts, StateVector};
pub use ybus::{build_ybus, AdmittanceMatrix};

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Slack,
    PV,
    PQ,
}

/// Which reactive power-balance kernel the network equations use.
///
/// `Standard` is the usual `G sin θ − B cos θ`; `AsPrinted` keeps the
/// `G cos θ − B sin θ` form that appears in some NDAE write-ups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactiveForm {
    #[default]
    Standard,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    /// Voltage set-point (p.u.); for PV/slack buses this is the generator set-point.
    pub v_set: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub is_zero_injection: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
    /// Apparent-power rating F_max (p.u.); `f64::INFINITY` when unrated.
    pub rating: f64,
    /// Off-nominal turns ratio at the from end (1.0 for plain lines).
    pub tap: f64,
}

/// Fourth-order synchronous machine parameters, per-unit on the system base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Inertia coefficient `2H/ω0`.
    pub m: f64,
    /// Damping in p.u. power per rad/s.
    pub d: f64,
    pub xd: f64,
    pub xd_prime: f64,
    pub xq: f64,
    pub xq_prime: f64,
    pub td0_prime: f64,
    pub tq0_prime: f64,
    pub omega_0: f64,
    /// Proportional terminal-voltage feedback on the field voltage (0 = open loop).
    #[serde(default)]
    pub avr_gain: f64,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.m),
            ("xd", self.xd),
            ("xd'", self.xd_prime),
            ("xq", self.xq),
            ("xq'", self.xq_prime),
            ("Td0'", self.td0_prime),
            ("Tq0'", self.tq0_prime),
            ("omega_0", self.omega_0),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidCase(format!(
                    "generator parameter {name} must be positive, got {value}"
                )));
            }
        }
        if self.avr_gain < 0.0 {
            return Err(Error::InvalidCase("AVR gain must be nonnegative".into()));
        }
        if self.d < 0.0 {
            return Err(Error::InvalidCase(
                "generator damping must be nonnegative".into(),
            ));
        }
        if self.xd < self.xd_prime {
            return Err(Error::InvalidCase("xd must be at least xd'".into()));
        }
        if self.xq < self.xq_prime {
            return Err(Error::InvalidCase("xq must be at least xq'".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub p_set: f64,
    pub v_set: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub params: GeneratorParams,
}

/// Renewable injection point; its nominal output enters the disturbance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Renewable {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
    pub capacity: f64,
}

/// A PMU and, optionally, the far-end buses of the lines whose current it meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmu {
    pub bus: usize,
    pub metered_lines: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct GridCase {
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub renewables: Vec<Renewable>,
    pub pmus: Vec<Pmu>,
    pub reactive_form: ReactiveForm,
    index: HashMap<usize, usize>,
}

impl GridCase {
    /// Builds a case and checks all structural invariants.
    pub fn new(
        base_mva: f64,
        frequency_hz: f64,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        renewables: Vec<Renewable>,
        pmus: Vec<Pmu>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(Error::InvalidCase(format!("duplicate bus id {}", bus.id)));
            }
        }
        let case = GridCase {
            base_mva,
            frequency_hz,
            buses,
            lines,
            generators,
            renewables,
            pmus,
            reactive_form: ReactiveForm::Standard,
            index,
        };
        case.validate()?;
        Ok(case)
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::InvalidCase("base_mva must be positive".into()));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(Error::InvalidCase("frequency must be positive".into()));
        }
        if self.buses.is_empty() {
            return Err(Error::InvalidCase("case has no buses".into()));
        }
        let slack = self
            .buses
            .iter()
            .filter(|b| b.kind == BusType::Slack)
            .count();
        if slack != 1 {
            return Err(Error::InvalidCase(format!(
                "expected exactly one slack bus, found {slack}"
            )));
        }
        for bus in &self.buses {
            if bus.v_min < 0.0 || bus.v_max < bus.v_min {
                return Err(Error::InvalidCase(format!(
                    "bus {} has invalid voltage limits",
                    bus.id
                )));
            }
            if !(bus.v_set > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "bus {} has nonpositive voltage set-point",
                    bus.id
                )));
            }
        }
        for line in &self.lines {
            self.bus_index(line.from)?;
            self.bus_index(line.to)?;
            if line.from == line.to {
                return Err(Error::InvalidCase(format!(
                    "line {}-{} is a self loop",
                    line.from, line.to
                )));
            }
            if line.rating < 0.0 {
                return Err(Error::InvalidCase(format!(
                    "line {}-{} has negative rating",
                    line.from, line.to
                )));
            }
            if !(line.tap > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "line {}-{} has nonpositive tap",
                    line.from, line.to
                )));
            }
        }
        for gen in &self.generators {
            self.bus_index(gen.bus)?;
            gen.params.validate()?;
            if gen.p_max < gen.p_min || gen.q_max < gen.q_min {
                return Err(Error::InvalidCase(format!(
                    "generator at bus {} has inverted limits",
                    gen.bus
                )));
            }
        }
        for ren in &self.renewables {
            self.bus_index(ren.bus)?;
            if ren.capacity < 0.0 {
                return Err(Error::InvalidCase(format!(
                    "renewable at bus {} has negative capacity",
                    ren.bus
                )));
            }
        }
        for pmu in &self.pmus {
            self.bus_index(pmu.bus)?;
            if let Some(far) = &pmu.metered_lines {
                for &to in far {
                    self.bus_index(to)?;
                }
            }
        }
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownBus(id))
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated")
    }

    pub fn pmu_buses(&self) -> Vec<usize> {
        self.pmus.iter().map(|p| p.bus).collect()
    }

    pub fn omega_0(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    /// Bus indices that host at least one generator.
    pub fn generator_bus_indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .generators
            .iter()
            .map(|g| self.bus_index(g.bus).expect("validated"))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nominal renewable output per bus index (p, q).
    pub fn renewable_injection(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.buses.len()];
        for ren in &self.renewables {
            let i = self.bus_index(ren.bus).expect("validated");
            out[i].0 += ren.p;
            out[i].1 += ren.q;
        }
        out
    }

    /// Ids of the buses adjacent to `id` through a line.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .lines
            .iter()
            .filter_map(|l| {
                if l.from == id {
                    Some(l.to)
                } else if l.to == id {
                    Some(l.from)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn with_reactive_form(mut self, form: ReactiveForm) -> Self {
        self.reactive_form = form;
        self
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub fn three_bus_system() -> DescriptorSystem {
        let case = parse_case(crate::data::THREE_BUS).unwrap();
        DescriptorSystem::from_case(&case, &MeasurementOptions::default()).unwrap()
    }
}
