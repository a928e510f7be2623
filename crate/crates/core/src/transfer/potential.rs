use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{decode_word, ModelParams, Word};
use crate::rng::stream;
use crate::trap::cache::PhiCache;
use crate::trap::{potential_phi_multi, NestedMc, TruncationPolicy};

use super::symmetry::{pack, StateSpace, Symmetry, WordKey};

/// `phi` on every `(m+1)`-word, stored per state row and appended letter.
#[derive(Clone, Debug)]
pub struct MemoryPotential {
    pub space: Arc<StateSpace>,
    pub gamma: f64,
    values: Vec<f64>,
    /// Decay exponent of `var_n` used past the memory; `None` when the table
    /// is the whole potential.
    pub tail_exponent: Option<f64>,
}

impl MemoryPotential {
    /// Potential given directly on `(row, letter)`; the table is taken to be
    /// exact, so no variation is extrapolated past the memory.
    pub fn from_values(space: Arc<StateSpace>, values: Vec<f64>) -> Result<MemoryPotential> {
        if values.len() != space.rows() * space.letters() {
            return Err(Error::invalid(format!(
                "potential table has {} values, expected {}",
                values.len(),
                space.rows() * space.letters()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "potential table".into() });
        }
        Ok(MemoryPotential { space, gamma: f64::NAN, values, tail_exponent: None })
    }

    pub fn m(&self) -> usize {
        self.space.m
    }

    pub fn value(&self, row: usize, z: usize) -> f64 {
        self.values[row * self.space.letters() + z]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shifted(&self, a: f64) -> MemoryPotential {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += a);
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PotentialConfig {
    pub policy: TruncationPolicy,
    pub seed: u64,
    /// Length of the excursions in the pool. Tables that are compared with
    /// each other should share it (and the seed) so that they see the same
    /// excursions.
    pub pool_len: Option<f64>,
}

const KEY_POTENTIAL_POOL: u64 = 0x7068;

/// Tabulate `phi` with the cemetery before the `(m+1)`-word, for every
/// `gamma` in `gammas` from one excursion pool.
pub fn project_potential(
    space: &Arc<StateSpace>,
    params: &ModelParams,
    gammas: &[f64],
    cfg: &PotentialConfig,
    mut cache: Option<&mut PhiCache>,
) -> Result<Vec<MemoryPotential>> {
    params.validate()?;
    if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::invalid("gammas must be non-empty, finite and non-negative"));
    }
    if space.alphabet.dim != params.d {
        return Err(Error::invalid("alphabet and parameters disagree on d"));
    }
    let m = space.m;
    let s = space.letters();
    let (classes, words) = distinct_words(space);

    let g_max = gammas.iter().copied().fold(0.0, f64::max);
    let pool_params = params.with_gamma(g_max.max(f64::MIN_POSITIVE));
    let pool_len = cfg.pool_len.unwrap_or((m + 1) as f64);
    let mc = NestedMc::new(&pool_params, &cfg.policy, pool_len, &mut stream(cfg.seed, &[KEY_POTENTIAL_POOL]))?;
    let tag = format!("{params:?}|{:?}|{pool_len}|{}", cfg.policy, cfg.seed);
    let cache_key = |w: &[u16]| {
        let text: Vec<String> = w.iter().map(|l| l.to_string()).collect();
        PhiCache::key(&[&text.join(","), &tag, &format!("{:?}", (space.alphabet.max_jumps, space.alphabet.bins))])
    };
    let gamma_key = |base: &str, g: f64| PhiCache::key(&[base, &g.to_string()]);

    let mut phi: Vec<Option<Vec<f64>>> = vec![None; words.len()];
    if let Some(c) = cache.as_deref() {
        for (slot, w) in phi.iter_mut().zip(&words) {
            let base = cache_key(w);
            let hits: Option<Vec<f64>> = gammas.iter().map(|&g| c.get(&gamma_key(&base, g)).map(|r| r.0)).collect();
            *slot = hits;
        }
    }
    let todo: Vec<usize> = (0..words.len()).filter(|&i| phi[i].is_none()).collect();
    let computed: Vec<Vec<f64>> = todo
        .par_iter()
        .map_init(Vec::new, |nodes, &i| {
            let word = Word::new(words[i].iter().map(|&l| space.alphabet.letters[l as usize].clone()).collect());
            let path = decode_word(&word, params.d);
            potential_phi_multi(&path, &mc, gammas, nodes)
        })
        .collect();
    for (&i, v) in todo.iter().zip(computed) {
        if let Some(c) = cache.as_deref_mut() {
            let base = cache_key(&words[i]);
            for (&g, &x) in gammas.iter().zip(&v) {
                c.insert(&gamma_key(&base, g), x, 0.0)?;
            }
        }
        phi[i] = Some(v);
    }

    let tail_exponent = Some(params.d as f64 / 2.0 - 1.0);
    gammas
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            let bound = params.alpha * g;
            let mut values = Vec::with_capacity(space.rows() * s);
            for &c in &classes {
                let v = phi[c as usize].as_ref().expect("every class evaluated")[j];
                if !(v <= 1e-12 && v >= -bound - 1e-12) {
                    return Err(Error::BoundViolation(format!("phi = {v} outside [-{bound}, 0] at gamma = {g}")));
                }
                values.push(v);
            }
            Ok(MemoryPotential { space: space.clone(), gamma: g, values, tail_exponent })
        })
        .collect()
}

/// Class index of every `(row, letter)` entry and one representative
/// `(m+1)`-word per class.
fn distinct_words(space: &StateSpace) -> (Vec<u32>, Vec<Vec<u16>>) {
    let m = space.m;
    let mut index: HashMap<WordKey, u32> = HashMap::new();
    let mut words = Vec::new();
    let mut classes = Vec::with_capacity(space.rows() * space.letters());
    let mut word = vec![0u16; m + 1];
    let mut scratch = Vec::new();
    for r in 0..space.rows() {
        word[..m].copy_from_slice(space.rep(r));
        for z in 0..space.letters() {
            word[m] = z as u16;
            let (key, _) = space.class_of(&word, &mut scratch);
            let id = *index.entry(key).or_insert_with(|| {
                words.push(if space.symmetry == Symmetry::Trivial { word.clone() } else { scratch.clone() });
                words.len() as u32 - 1
            });
            classes.push(id);
        }
    }
    (classes, words)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionConstants {
    /// `var_i` for `i = 0..=m` from the table.
    pub var: Vec<f64>,
    /// Extrapolated `sum_{i > m} var_i`.
    pub tail: f64,
    /// `M = sum_i var_i`, table plus tail.
    pub m_total: f64,
    /// `e^{-5M}`.
    pub c: f64,
}

/// `var_i` is the spread of `phi` over words that agree in their last `i`
/// letters. Beyond the memory it is extrapolated as
/// `var_m (m/i)^r` with the potential's tail exponent `r`.
pub fn contraction_constants(pot: &MemoryPotential) -> Result<ContractionConstants> {
    let space = &pot.space;
    let m = space.m;
    let s = space.letters();
    let mut var = Vec::with_capacity(m + 1);
    let mut word = vec![0u16; m + 1];
    let mut scratch = Vec::new();
    for i in 0..=m {
        let mut groups: HashMap<WordKey, (f64, f64)> = HashMap::new();
        for r in 0..space.rows() {
            word[..m].copy_from_slice(space.rep(r));
            for z in 0..s {
                word[m] = z as u16;
                let key = if i == 0 { 0 } else { space.class_of(&word[m + 1 - i..], &mut scratch).0 };
                let v = pot.value(r, z);
                let e = groups.entry(key).or_insert((v, v));
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
        }
        var.push(groups.values().fold(0.0, |a: f64, (lo, hi)| a.max(hi - lo)));
    }
    let tail = match pot.tail_exponent {
        None => 0.0,
        Some(_) if var[m] == 0.0 => 0.0,
        Some(r) if r <= 1.0 => {
            return Err(Error::SeriesDivergence { k_max: m, partial: var.iter().sum(), last_term: var[m] });
        }
        Some(r) => var[m] * power_tail(m as f64, r),
    };
    let m_total = var.iter().sum::<f64>() + tail;
    Ok(ContractionConstants { var, tail, m_total, c: (-5.0 * m_total).exp() })
}

/// `sum_{i > m} (m / i)^r` for `r > 1`.
fn power_tail(m: f64, r: f64) -> f64 {
    let n = 100_000usize;
    let head: f64 = (m as usize + 1..=n).map(|i| (m / i as f64).powf(r)).sum();
    head + m.powf(r) * (n as f64 + 0.5).powf(1.0 - r) / (r - 1.0)
}

/// `max |phi_{m+1}(x) - phi_m(x)|` over `(m+2)`-words `x`, with `phi_m`
/// read off its last `m+1` letters.
pub fn memory_truncation_error(coarse: &MemoryPotential, fine: &MemoryPotential) -> Result<f64> {
    let (cs, fs) = (&coarse.space, &fine.space);
    if fs.m != cs.m + 1 || cs.letters() != fs.letters() || cs.symmetry != fs.symmetry {
        return Err(Error::invalid("tables must share the alphabet and differ by one in memory"));
    }
    let index: HashMap<WordKey, usize> = (0..cs.rows()).map(|r| (pack(cs.rep(r)), r)).collect();
    let mut worst: f64 = 0.0;
    let mut scratch = Vec::new();
    for r in 0..fs.rows() {
        let ctx = &fs.rep(r)[1..];
        let (row, g) = match cs.symmetry {
            Symmetry::Trivial => (index[&pack(ctx)], None),
            Symmetry::Hyperoctahedral => {
                let (g, _) = super::symmetry::canonicalize(&cs.alphabet, ctx, &mut scratch);
                (index[&pack(&scratch)], Some(g))
            }
        };
        for z in 0..fs.letters() {
            let zc = g.map_or(z, |g| cs.alphabet.image(z, &g));
            worst = worst.max((fine.value(r, z) - coarse.value(row, zc)).abs());
        }
    }
    Ok(worst)
}
