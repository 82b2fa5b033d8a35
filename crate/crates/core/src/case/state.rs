use nalgebra::DVector;

use crate::error::{Error, Result};

/// Packed state: `[δ, ω, E'q, E'd | P_G, Q_G, v, θ]`, each block contiguous.
pub type StateVector = DVector<f64>;

/// Index arithmetic for the packed state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_gen: usize,
    pub n_bus: usize,
}

impl StateLayout {
    pub fn new(n_gen: usize, n_bus: usize) -> Self {
        StateLayout { n_gen, n_bus }
    }

    pub fn n(&self) -> usize {
        6 * self.n_gen + 2 * self.n_bus
    }

    pub fn n_dynamic(&self) -> usize {
        4 * self.n_gen
    }

    pub fn n_algebraic(&self) -> usize {
        2 * self.n_gen + 2 * self.n_bus
    }

    pub fn delta(&self, g: usize) -> usize {
        g
    }
    pub fn omega(&self, g: usize) -> usize {
        self.n_gen + g
    }
    pub fn eq(&self, g: usize) -> usize {
        2 * self.n_gen + g
    }
    pub fn ed(&self, g: usize) -> usize {
        3 * self.n_gen + g
    }
    pub fn pg(&self, g: usize) -> usize {
        4 * self.n_gen + g
    }
    pub fn qg(&self, g: usize) -> usize {
        5 * self.n_gen + g
    }
    pub fn v(&self, b: usize) -> usize {
        6 * self.n_gen + b
    }
    pub fn theta(&self, b: usize) -> usize {
        6 * self.n_gen + self.n_bus + b
    }

    pub fn is_dynamic(&self, i: usize) -> bool {
        i < self.n_dynamic()
    }

    /// Column labels, e.g. `delta_g1`, `v_b30` (1-based generator ordinal, bus id).
    pub fn names(&self, bus_ids: &[usize]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n());
        for prefix in ["delta", "omega", "eq", "ed", "pg", "qg"] {
            for g in 0..self.n_gen {
                out.push(format!("{prefix}_g{}", g + 1));
            }
        }
        for prefix in ["v", "theta"] {
            for &id in bus_ids {
                out.push(format!("{prefix}_b{id}"));
            }
        }
        out
    }

    pub fn check(&self, x: &StateVector) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                what: "state vector",
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Unpacked, named view of a state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParts {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub e_q_prime: Vec<f64>,
    pub e_d_prime: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl StateParts {
    pub fn unpack(layout: &StateLayout, x: &StateVector) -> Result<Self> {
        layout.check(x)?;
        let (ng, nb) = (layout.n_gen, layout.n_bus);
        let s = x.as_slice();
        let take = |from: usize, len: usize| s[from..from + len].to_vec();
        Ok(StateParts {
            delta: take(0, ng),
            omega: take(ng, ng),
            e_q_prime: take(2 * ng, ng),
            e_d_prime: take(3 * ng, ng),
            p_g: take(4 * ng, ng),
            q_g: take(5 * ng, ng),
            v: take(6 * ng, nb),
            theta: take(6 * ng + nb, nb),
        })
    }

    pub fn pack(&self) -> StateVector {
        let mut data = Vec::new();
        for block in [
            &self.delta,
            &self.omega,
            &self.e_q_prime,
            &self.e_d_prime,
            &self.p_g,
            &self.q_g,
            &self.v,
            &self.theta,
        ] {
            data.extend_from_slice(block);
        }
        DVector::from_vec(data)
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.delta.len(), self.v.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(ng in 1usize..5, nb in 1usize..8, seed in any::<u64>()) {
            let layout = StateLayout::new(ng, nb);
            let x = StateVector::from_fn(layout.n(), |i, _| (i as f64 + 1.0) * (seed % 97) as f64);
            let parts = StateParts::unpack(&layout, &x).unwrap();
            prop_assert_eq!(parts.layout(), layout);
            prop_assert_eq!(parts.pack(), x);
        }
    }

    #[test]
    fn index_blocks_are_disjoint() {
        let l = StateLayout::new(10, 39);
        assert_eq!(l.n(), 138);
        assert_eq!(l.theta(38), 137);
        assert_eq!(l.v(0), 60);
        assert_eq!(l.names(&(1..=39).collect::<Vec<_>>()).len(), 138);
    }
}
