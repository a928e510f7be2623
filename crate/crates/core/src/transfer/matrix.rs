use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;

use super::potential::MemoryPotential;
use super::symmetry::StateSpace;

/// `L(w, shift(wz)) = mu(z) e^{phi(wz)}`, one entry per state row and
/// appended letter. On a symmetry-reduced space this is the lumped matrix:
/// it acts exactly on invariant functions, and its transpose carries orbit
/// masses.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub space: Arc<StateSpace>,
    values: Vec<f64>,
    /// Entries grouped by target row: `incoming[offsets[t]..offsets[t+1]]`.
    offsets: Vec<usize>,
    incoming: Vec<u32>,
}

pub fn build_transfer(potential: &MemoryPotential) -> TransferMatrix {
    let space = potential.space.clone();
    let s = space.letters();
    let w = &space.alphabet.weights;
    let values: Vec<f64> = potential.values().iter().enumerate().map(|(e, phi)| w[e % s] * phi.exp()).collect();
    TransferMatrix::from_values(space, values)
}

impl TransferMatrix {
    pub(crate) fn from_values(space: Arc<StateSpace>, values: Vec<f64>) -> TransferMatrix {
        let rows = space.rows();
        let s = space.letters();
        let mut counts = vec![0usize; rows + 1];
        for r in 0..rows {
            for z in 0..s {
                counts[space.target(r, z) + 1] += 1;
            }
        }
        for t in 0..rows {
            counts[t + 1] += counts[t];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut incoming = vec![0u32; values.len()];
        for r in 0..rows {
            for z in 0..s {
                let t = space.target(r, z);
                incoming[fill[t]] = (r * s + z) as u32;
                fill[t] += 1;
            }
        }
        TransferMatrix { space, values, offsets, incoming }
    }

    pub fn dimension(&self) -> usize {
        self.space.rows()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `out = L f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        apply_entries(&self.space, &self.values, f, out);
    }

    /// `out = L^T g`, summing each row's incoming entries in a fixed order.
    pub fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        let s = self.space.letters();
        out.par_iter_mut().enumerate().for_each(|(t, o)| {
            *o = self.incoming[self.offsets[t]..self.offsets[t + 1]]
                .iter()
                .map(|&e| self.values[e as usize] * g[e as usize / s])
                .sum();
        });
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.dimension();
        let s = self.space.letters();
        let mut out = vec![vec![0.0; n]; n];
        for r in 0..n {
            for z in 0..s {
                out[r][self.space.target(r, z)] += self.values[r * s + z];
            }
        }
        out
    }

    /// Coordinate triplets `row col value`, duplicates summed.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        let s = self.space.letters();
        for r in 0..self.dimension() {
            let mut row: Vec<(usize, f64)> = (0..s).map(|z| (self.space.target(r, z), self.values[r * s + z])).collect();
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                writeln!(w, "{r} {c} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

/// `out(r) = sum_z values(r, z) f(target(r, z))`.
pub(crate) fn apply_entries(space: &StateSpace, values: &[f64], f: &[f64], out: &mut [f64]) {
    let s = space.letters();
    out.par_iter_mut().enumerate().for_each(|(r, o)| {
        *o = (0..s).map(|z| values[r * s + z] * f[space.target(r, z)]).sum();
    });
}
