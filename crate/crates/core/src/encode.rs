//! Model inputs: boolean occupancy tensor and one-hot phase matrix.

use bitvec::prelude::*;

use crate::sim::Simulation;
use crate::topology::{Network, PHASES};

/// Occupancy tensor of shape (I, J, K). Cell `k = K-1` is the one adjacent
/// to the junction for both entry and exit lanes. Links shared by two
/// intersections appear in both slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateTensor {
    dims: (usize, usize, usize),
    bits: BitVec<u64, Lsb0>,
}

impl StateTensor {
    pub fn zeros(i: usize, j: usize, k: usize) -> Self {
        Self {
            dims: (i, j, k),
            bits: bitvec![u64, Lsb0; 0; i * j * k],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let (_, nj, nk) = self.dims;
        (i * nj + j) * nk + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.bits.set(idx, value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    /// Flat row-major view as 0/1 values.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().by_vals()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Indices of set cells in flat row-major order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }
}

/// One-hot current phase per intersection, shape (I, M).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseMatrix {
    rows: usize,
    current: Vec<u8>,
}

impl PhaseMatrix {
    pub fn from_phases(phases: &[usize]) -> Self {
        Self {
            rows: phases.len(),
            current: phases.iter().map(|&p| p as u8).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, PHASES)
    }

    pub fn get(&self, i: usize, m: usize) -> bool {
        self.current[i] as usize == m
    }

    pub fn current(&self, i: usize) -> usize {
        self.current[i] as usize
    }

    /// Row-major 0/1 values.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.current
            .iter()
            .flat_map(|&c| (0..PHASES).map(move |m| c as usize == m))
    }
}

pub fn encode_state(sim: &Simulation) -> StateTensor {
    let net = sim.network();
    let (ni, nj, nk) = (net.intersections(), net.lanes_per_slice(), net.cells());
    let mut t = StateTensor::zeros(ni, nj, nk);
    for (link_id, link) in net.links().iter().enumerate() {
        for idx in 0..3 {
            let lane = Network::lane(link_id, idx);
            for cell in 0..nk {
                if sim.vehicle_at(lane, cell).is_none() {
                    continue;
                }
                if let Some(i) = link.to {
                    let (j, _) = net.slice_row(i, lane).expect("entry lane touches its junction");
                    t.set(i, j, cell, true);
                }
                if let Some(i) = link.from {
                    let (j, _) = net.slice_row(i, lane).expect("exit lane touches its junction");
                    t.set(i, j, nk - 1 - cell, true);
                }
            }
        }
    }
    t
}

/// During amber the row keeps the outgoing phase until the next green.
pub fn encode_phase(sim: &Simulation) -> PhaseMatrix {
    let phases: Vec<usize> = sim.phases().iter().map(|p| p.current).collect();
    PhaseMatrix::from_phases(&phases)
}
