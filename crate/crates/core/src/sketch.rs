//! Dense Gaussian CountSketch over the virtual vector z (per-coordinate
//! head entries plus a Gaussian tail aggregate per coordinate).
//!
//! The sketch is r independent repetitions of k rows. Every matrix entry
//! is a standard normal regenerated on demand from the tape, keyed by
//! (coordinate, cell, slot); nothing per-coordinate is stored. An update
//! (i, Δ) adds Δ·(Σ_j g·v_j + g_tail·σ̃_i) to every cell, which is the
//! image of the duplicated scaling vector under the dense Gaussian matrix
//! with the tail block collapsed through 2-stability.
//!
//! Entry estimates are medians over repetitions of (1/k)·⟨column, cells⟩;
//! the L₂ norm estimate is (5/4)·median of |cell| over all r·k cells.

use crate::samplers::{HeadStatistics, TailAggregate};
use crate::tape::{label, TapeKey};
use std::cell::Cell;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("tail slots have no explicit column to estimate")]
    TailSlot,
}

/// Sketch dimensions: `rows` cells per repetition (the error parameter k)
/// and `reps` independent repetitions (the median parameter r).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    pub rows: usize,
    pub reps: usize,
}

/// Position in the virtual vector: a head rank of a coordinate, or the
/// coordinate's aggregated tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualIndex {
    pub coordinate: u64,
    pub slot: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head(u32),
    Tail,
}

impl VirtualIndex {
    /// Bijection into [n·(τ+1)]: coordinate·(τ+1) + slot.
    pub fn encode(&self, tau: u32) -> u64 {
        let s = match self.slot {
            Slot::Head(j) => {
                debug_assert!(j < tau);
                j
            }
            Slot::Tail => tau,
        };
        self.coordinate * (tau as u64 + 1) + s as u64
    }

    pub fn decode(index: u64, tau: u32) -> Self {
        let coordinate = index / (tau as u64 + 1);
        let s = (index % (tau as u64 + 1)) as u32;
        let slot = if s == tau { Slot::Tail } else { Slot::Head(s) };
        VirtualIndex { coordinate, slot }
    }
}

/// Cells of one sketch instance plus the tape scope that regenerates its
/// columns.
pub struct SketchState {
    config: SketchConfig,
    scope: TapeKey,
    /// reps × rows, repetition-major.
    cells: Vec<f64>,
    derivations: Cell<u64>,
}

impl SketchState {
    /// `scope` is the instance-level tape key; all columns of this sketch
    /// derive from it.
    pub fn new(config: SketchConfig, scope: TapeKey) -> Self {
        assert!(config.rows >= 1 && config.reps >= 1);
        Self {
            config,
            scope,
            cells: vec![0.0; config.rows * config.reps],
            derivations: Cell::new(0),
        }
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Tape derivations performed so far (update + estimation work).
    pub fn derivation_count(&self) -> u64 {
        self.derivations.get()
    }

    #[inline(always)]
    fn gaussian(&self, key: TapeKey) -> f64 {
        self.derivations.set(self.derivations.get() + 1);
        key.gaussian()
    }

    /// Apply update Δ to coordinate i: every cell receives
    /// Δ·(Σ_j g(cell, i, j)·v_j + g(cell, i, tail)·σ̃_i), all Gaussians
    /// regenerated from the tape.
    pub fn update(&mut self, i: u64, delta: i64, head: &HeadStatistics, tail: &TailAggregate) {
        if delta == 0 {
            return;
        }
        let d = delta as f64;
        let sigma = tail.sigma_sq.sqrt();
        let tau = head.tau() as u64;
        let coord_key = self.scope.at(label::COORD, i);
        let values = head.values();
        let cells_per = self.config.rows;
        for rep in 0..self.config.reps {
            for row in 0..cells_per {
                let cell_idx = rep * cells_per + row;
                let cell_key = coord_key.at(label::CELL, cell_idx as u64);
                let mut acc = 0.0;
                for (j, &v) in values.iter().enumerate() {
                    acc += self.gaussian(cell_key.at(label::SLOT, j as u64)) * v;
                }
                acc += self.gaussian(cell_key.at(label::SLOT, tau)) * sigma;
                self.cells[cell_idx] += d * acc;
            }
        }
    }

    /// Median over repetitions of (1/k)·⟨column(vi), cells⟩. Head slots
    /// only; the tail block has no addressable column.
    pub fn estimate_entry(&self, vi: VirtualIndex) -> Result<f64, SketchError> {
        let j = match vi.slot {
            Slot::Head(j) => j as u64,
            Slot::Tail => return Err(SketchError::TailSlot),
        };
        let coord_key = self.scope.at(label::COORD, vi.coordinate);
        let k = self.config.rows;
        let mut per_rep: Vec<f64> = Vec::with_capacity(self.config.reps);
        for rep in 0..self.config.reps {
            let mut dot = 0.0;
            for row in 0..k {
                let cell_idx = rep * k + row;
                let g = self.gaussian(coord_key.at(label::CELL, cell_idx as u64).at(label::SLOT, j));
                dot += g * self.cells[cell_idx];
            }
            per_rep.push(dot / k as f64);
        }
        Ok(median_in_place(&mut per_rep))
    }

    /// Norm estimate Z = (5/4)·median over all cells of |cell|.
    pub fn estimate_norm(&self) -> f64 {
        let mut mags: Vec<f64> = self.cells.iter().map(|c| c.abs()).collect();
        1.25 * median_in_place(&mut mags)
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let mid = n / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let (_, m2, _) = values[..mid].select_nth_unstable_by(mid - 1, |a, b| a.partial_cmp(b).unwrap());
        0.5 * (hi + *m2)
    }
}
