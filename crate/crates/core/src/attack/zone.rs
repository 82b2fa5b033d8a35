//! Attack zone: the buses an attacker must reason about to keep targeted
//! measurements physically consistent.
//!
//! Starting from the targets, a breadth-first walk crosses zero-injection
//! buses; any other bus reached is added but not expanded. The boundary is
//! the ring of buses adjacent to the zone, and the state scope covers the
//! network variables of zone and boundary buses plus their generators.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::case::{AdmittanceMatrix, GridCase, StateLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackZone {
    /// Bus ids inside the zone.
    pub zone: BTreeSet<usize>,
    /// Bus ids adjacent to the zone but outside it.
    pub boundary: BTreeSet<usize>,
    /// State indices tied to zone and boundary buses.
    pub state_indices: BTreeSet<usize>,
}

impl AttackZone {
    /// Bus indices (not ids) of zone ∪ boundary.
    pub fn scope_indices(&self, case: &GridCase) -> BTreeSet<usize> {
        self.zone
            .iter()
            .chain(&self.boundary)
            .map(|&id| case.bus_index(id).expect("zone built from this case"))
            .collect()
    }
}

fn neighbors(ybus: &AdmittanceMatrix, i: usize, epsilon: f64) -> impl Iterator<Item = usize> + '_ {
    (0..ybus.dim()).filter(move |&j| j != i && ybus.magnitude(i, j) > epsilon)
}

pub fn attack_zone(
    case: &GridCase,
    ybus: &AdmittanceMatrix,
    targets: &[usize],
    d_max: usize,
    epsilon: f64,
) -> Result<AttackZone> {
    if ybus.dim() != case.bus_count() {
        return Err(Error::Dimension {
            what: "admittance matrix",
            expected: case.bus_count(),
            got: ybus.dim(),
        });
    }
    let mut inside = vec![false; case.bus_count()];
    let mut queue = VecDeque::new();
    for &id in targets {
        let i = case.bus_index(id)?;
        if !inside[i] {
            inside[i] = true;
            queue.push_back((i, 0));
        }
    }
    while let Some((i, depth)) = queue.pop_front() {
        if depth >= d_max {
            continue;
        }
        for j in neighbors(ybus, i, epsilon) {
            if inside[j] {
                continue;
            }
            inside[j] = true;
            if case.buses[j].is_zero_injection {
                queue.push_back((j, depth + 1));
            }
        }
    }
    let mut boundary_idx = BTreeSet::new();
    for i in (0..inside.len()).filter(|&i| inside[i]) {
        boundary_idx.extend(neighbors(ybus, i, epsilon).filter(|&j| !inside[j]));
    }

    let layout = StateLayout::new(case.generator_count(), case.bus_count());
    let mut state_indices = BTreeSet::new();
    let covered = |i: usize| inside[i] || boundary_idx.contains(&i);
    for i in (0..inside.len()).filter(|&i| covered(i)) {
        state_indices.insert(layout.v(i));
        state_indices.insert(layout.theta(i));
    }
    for (g, gen) in case.generators.iter().enumerate() {
        if covered(case.bus_index(gen.bus)?) {
            state_indices.extend([
                layout.delta(g),
                layout.omega(g),
                layout.eq(g),
                layout.ed(g),
                layout.pg(g),
                layout.qg(g),
            ]);
        }
    }
    let id = |i: usize| case.buses[i].id;
    Ok(AttackZone {
        zone: (0..inside.len()).filter(|&i| inside[i]).map(id).collect(),
        boundary: boundary_idx.into_iter().map(id).collect(),
        state_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_ybus, parse_case};
    use crate::data;

    #[test]
    fn zero_depth_is_just_the_targets() {
        let case = parse_case(data::IEEE39).unwrap();
        let y = build_ybus(&case).unwrap();
        let z = attack_zone(&case, &y, &[10, 11], 0, 1e-6).unwrap();
        assert_eq!(z.zone, [10, 11].into_iter().collect());
        assert!(z.boundary.contains(&13) && z.boundary.contains(&6));
    }

    #[test]
    fn unknown_target_is_rejected() {
        let case = parse_case(data::IEEE39).unwrap();
        let y = build_ybus(&case).unwrap();
        assert!(matches!(
            attack_zone(&case, &y, &[99], 2, 1e-6),
            Err(Error::UnknownBus(99))
        ));
    }
}
