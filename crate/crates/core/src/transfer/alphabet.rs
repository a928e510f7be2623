use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Direction, Jump, Letter, ModelParams, Site, MAX_DIM};

use super::symmetry::SignedPerm;

/// Finite stand-in for the letter law: at most `max_jumps` jumps, jump
/// times at the midpoints of `bins` equal sub-intervals.
///
/// Letters are grouped in blocks sharing the jump count and the multiset of
/// time bins; inside a block the ordered direction tuple is the base-`2d`
/// offset, so a signed permutation acts on letter indices arithmetically.
/// Tied times keep their direction order, which makes letters with the same
/// decoded path but different tuples distinct.
#[derive(Clone, Debug, Serialize)]
pub struct QuantizedAlphabet {
    pub dim: usize,
    pub max_jumps: usize,
    pub bins: usize,
    pub letters: Vec<Letter>,
    pub weights: Vec<f64>,
    /// Poisson mass above `max_jumps` that was dropped before renormalizing.
    pub truncated_mass: f64,
    #[serde(skip)]
    dirs: Vec<Vec<u8>>,
    #[serde(skip)]
    block: Vec<u32>,
    #[serde(skip)]
    displacement: Vec<Site>,
}

/// Largest dropped Poisson mass accepted by [`quantize_alphabet`] unless the
/// caller asks for another threshold.
pub const DEFAULT_MAX_TRUNCATED_MASS: f64 = 0.1;

pub fn quantize_alphabet(params: &ModelParams, max_jumps: usize, bins: usize) -> Result<QuantizedAlphabet> {
    quantize_alphabet_with(params, max_jumps, bins, DEFAULT_MAX_TRUNCATED_MASS)
}

pub fn quantize_alphabet_with(
    params: &ModelParams,
    max_jumps: usize,
    bins: usize,
    max_truncated_mass: f64,
) -> Result<QuantizedAlphabet> {
    params.validate()?;
    if bins == 0 {
        return Err(Error::invalid("need at least one time bin"));
    }
    let d = params.d;
    if d > MAX_DIM {
        return Err(Error::invalid(format!("d = {d} exceeds {MAX_DIM}")));
    }
    let kappa = params.kappa;
    let pois: Vec<f64> = (0..=max_jumps)
        .scan(1.0, |term, k| {
            if k > 0 {
                *term *= kappa / k as f64;
            }
            Some(*term * (-kappa).exp())
        })
        .collect();
    let kept: f64 = pois.iter().sum();
    let truncated_mass = (1.0 - kept).max(0.0);
    if truncated_mass > max_truncated_mass {
        return Err(Error::invalid(format!(
            "J = {max_jumps} drops Poisson mass {truncated_mass:.4} > {max_truncated_mass}; raise J"
        )));
    }
    let ndir = 2 * d;
    let count: usize = (0..=max_jumps)
        .map(|k| multisets(bins, k) * ndir.checked_pow(k as u32).unwrap_or(usize::MAX))
        .fold(0usize, |a, b| a.saturating_add(b));
    if count > u16::MAX as usize {
        return Err(Error::invalid(format!("alphabet would have {count} letters; at most {} supported", u16::MAX)));
    }
    let mut out = QuantizedAlphabet {
        dim: d,
        max_jumps,
        bins,
        letters: Vec::with_capacity(count),
        weights: Vec::with_capacity(count),
        truncated_mass,
        dirs: Vec::with_capacity(count),
        block: Vec::with_capacity(count),
        displacement: Vec::with_capacity(count),
    };
    for (k, p) in pois.iter().enumerate() {
        let p_k = p / kept;
        let dir_mass = (ndir as f64).powi(-(k as i32));
        for bin_set in bin_multisets(bins, k) {
            let block = out.letters.len() as u32;
            let time_mass = multinomial(&bin_set) / (bins as f64).powi(k as i32);
            for code in 0..ndir.pow(k as u32) {
                let mut tuple = vec![0u8; k];
                let mut c = code;
                for slot in tuple.iter_mut().rev() {
                    *slot = (c % ndir) as u8;
                    c /= ndir;
                }
                let jumps: Vec<Jump> = bin_set
                    .iter()
                    .zip(&tuple)
                    .map(|(&b, &dir)| Jump {
                        time: (b as f64 + 0.5) / bins as f64,
                        dir: Direction::from_index(dir as usize, d).expect("index below 2d"),
                    })
                    .collect();
                let letter = Letter::new(jumps)?;
                out.displacement.push(letter.displacement());
                out.letters.push(letter);
                out.weights.push(p_k * time_mass * dir_mass);
                out.dirs.push(tuple);
                out.block.push(block);
            }
        }
    }
    Ok(out)
}

fn multisets(bins: usize, k: usize) -> usize {
    // C(bins + k - 1, k)
    (0..k).fold(1usize, |acc, i| acc * (bins + i) / (i + 1))
}

/// Non-decreasing bin sequences of length `k`, in lexicographic order.
fn bin_multisets(bins: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    if k == 0 {
        return vec![Vec::new()];
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < bins {
                cur[i] += 1;
                let v = cur[i];
                cur[i + 1..].iter_mut().for_each(|c| *c = v);
                break;
            }
        }
    }
}

fn multinomial(bin_set: &[usize]) -> f64 {
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < bin_set.len() {
        let j = bin_set[i..].iter().take_while(|&&b| b == bin_set[i]).count();
        runs.push(j);
        i += j;
    }
    fact(bin_set.len()) / runs.into_iter().map(fact).product::<f64>()
}

impl QuantizedAlphabet {
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Direction indices of the letter's jumps in time order.
    pub fn dirs(&self, letter: usize) -> &[u8] {
        &self.dirs[letter]
    }

    pub fn displacement(&self, letter: usize) -> Site {
        self.displacement[letter]
    }

    /// Index of the letter obtained by applying `g` to every jump.
    pub fn image(&self, letter: usize, g: &SignedPerm) -> usize {
        let ndir = 2 * self.dim;
        let offset = self.dirs[letter].iter().fold(0usize, |acc, &dir| acc * ndir + g.apply(dir) as usize);
        self.block[letter] as usize + offset
    }

    /// `sum_z mu(z) <e_a, D(z)>^2`, the same for every axis `a`.
    pub fn displacement_variance(&self) -> f64 {
        self.weights.iter().zip(&self.displacement).map(|(w, s)| w * (s.coord(0) as f64).powi(2)).sum()
    }
}
