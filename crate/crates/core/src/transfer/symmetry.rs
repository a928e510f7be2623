//! Lattice symmetries acting on words, and the state space of `m`-words
//! modulo those symmetries.
//!
//! The trap potential and the letter law are invariant under the signed
//! permutations of the coordinate axes, so the leading eigenfunction, the
//! eigenmeasure and everything built from them are invariant as well. The
//! operator is therefore assembled on orbit representatives, with each
//! transition remembering the symmetry ("twist") that maps the
//! representative of the target orbit onto the actual shifted word.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::MAX_DIM;

use super::alphabet::QuantizedAlphabet;

/// Signed permutation of the axes, stored as its action on the `2d`
/// direction indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedPerm {
    dim: u8,
    map: [u8; 2 * MAX_DIM],
}

impl SignedPerm {
    pub fn identity(dim: usize) -> SignedPerm {
        let mut map = [0u8; 2 * MAX_DIM];
        for (i, m) in map.iter_mut().enumerate() {
            *m = i as u8;
        }
        SignedPerm { dim: dim as u8, map }
    }

    /// `images[a]` is the direction index that `+e_a` is sent to.
    pub fn from_images(dim: usize, images: &[u8]) -> SignedPerm {
        let mut g = SignedPerm::identity(dim);
        for (a, &img) in images.iter().enumerate() {
            g.map[2 * a] = img;
            g.map[2 * a + 1] = img ^ 1;
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn apply(&self, dir: u8) -> u8 {
        self.map[dir as usize]
    }

    /// `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &SignedPerm) -> SignedPerm {
        let mut out = *self;
        for i in 0..2 * self.dim() {
            out.map[i] = self.map[other.map[i] as usize];
        }
        out
    }

    pub fn inverse(&self) -> SignedPerm {
        let mut out = *self;
        for i in 0..2 * self.dim() {
            out.map[self.map[i] as usize] = i as u8;
        }
        out
    }

    /// Action on coordinate vectors: `(g v)_b = ±v_a` when `g e_a = ±e_b`.
    pub fn apply_vec(&self, v: &[f64], out: &mut [f64]) {
        for (a, x) in v.iter().enumerate() {
            let img = self.map[2 * a];
            let sign = if img % 2 == 0 { 1.0 } else { -1.0 };
            out[(img / 2) as usize] = sign * x;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// No reduction: every word is its own orbit.
    Trivial,
    /// Signed permutations of the axes.
    Hyperoctahedral,
}

/// Letter indices packed 16 bits apiece, oldest letter in the high bits.
pub type WordKey = u128;

pub const MAX_KEY_LETTERS: usize = 8;

pub fn pack(word: &[u16]) -> WordKey {
    word.iter().fold(0u128, |k, &l| (k << 16) | l as u128)
}

/// Canonical representative of the orbit of `word` and a `g` with
/// `g(word) = canonical`.
///
/// Walking the jumps from oldest to newest, each axis gets the next free
/// label when it first appears, with the sign that makes that first jump
/// positive; unused axes fill the remaining labels in order. Two words in the
/// same orbit produce the same labelling, so this is a canonical form. The
/// number of labelled axes is returned as well.
pub fn canonicalize(alphabet: &QuantizedAlphabet, word: &[u16], out: &mut Vec<u16>) -> (SignedPerm, usize) {
    let d = alphabet.dim;
    let mut g = SignedPerm::identity(d);
    let mut seen = [false; MAX_DIM];
    let mut next = 0u8;
    for &l in word {
        for &dir in alphabet.dirs(l as usize) {
            let a = (dir / 2) as usize;
            if !seen[a] {
                seen[a] = true;
                g.map[dir as usize] = 2 * next;
                g.map[(dir ^ 1) as usize] = 2 * next + 1;
                next += 1;
            }
        }
    }
    let used = next as usize;
    for (a, s) in seen.iter().enumerate().take(d) {
        if !s {
            g.map[2 * a] = 2 * next;
            g.map[2 * a + 1] = 2 * next + 1;
            next += 1;
        }
    }
    out.clear();
    out.extend(word.iter().map(|&l| alphabet.image(l as usize, &g) as u16));
    (g, used)
}

/// `|B_d| / |stabilizer|` for a word that uses `used` of the `d` axes.
pub fn orbit_size(dim: usize, used: usize) -> f64 {
    (0..used).map(|i| 2.0 * (dim - i) as f64).product()
}

/// Interned signed permutations.
#[derive(Clone, Debug, Default)]
struct PermTable {
    perms: Vec<SignedPerm>,
    index: HashMap<SignedPerm, u16>,
}

impl PermTable {
    fn intern(&mut self, g: SignedPerm) -> u16 {
        if let Some(&i) = self.index.get(&g) {
            return i;
        }
        let i = self.perms.len() as u16;
        self.perms.push(g);
        self.index.insert(g, i);
        i
    }

    fn get(&self, i: u16) -> &SignedPerm {
        &self.perms[i as usize]
    }

    fn len(&self) -> usize {
        self.perms.len()
    }
}

/// States are `m`-words up to symmetry. Row `i` has the representative
/// `reps[i*m..(i+1)*m]`; appending letter `z` to it and dropping the oldest
/// letter lands in row `target[i*|S|+z]`, on the word
/// `twist(rep(target))`.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub alphabet: QuantizedAlphabet,
    pub m: usize,
    pub symmetry: Symmetry,
    reps: Vec<u16>,
    orbit_size: Vec<f64>,
    target: Vec<u32>,
    twist: Vec<u16>,
    perms: PermTable,
    twist_letters: Vec<Vec<u16>>,
}

impl StateSpace {
    pub fn new(alphabet: QuantizedAlphabet, m: usize, symmetry: Symmetry) -> Result<StateSpace> {
        if m == 0 || m + 1 > MAX_KEY_LETTERS {
            return Err(Error::invalid(format!("memory m = {m} outside 1..={}", MAX_KEY_LETTERS - 1)));
        }
        let s = alphabet.len();
        let d = alphabet.dim;
        let mut perms = PermTable::default();
        perms.intern(SignedPerm::identity(d));
        let mut index: HashMap<WordKey, u32> = HashMap::new();
        let mut reps: Vec<u16> = vec![0; m];
        let mut orbit_sizes = vec![1.0];
        index.insert(pack(&reps), 0);
        let mut target = Vec::new();
        let mut twist = Vec::new();
        let mut word = vec![0u16; m];
        let mut canon = Vec::with_capacity(m);
        let mut row = 0;
        while row < orbit_sizes.len() {
            for z in 0..s {
                word[..m - 1].copy_from_slice(&reps[row * m + 1..(row + 1) * m]);
                word[m - 1] = z as u16;
                let (g, used) = match symmetry {
                    Symmetry::Trivial => {
                        canon.clone_from(&word);
                        (SignedPerm::identity(d), 0)
                    }
                    Symmetry::Hyperoctahedral => canonicalize(&alphabet, &word, &mut canon),
                };
                let key = pack(&canon);
                let next_id = orbit_sizes.len() as u32;
                let id = *index.entry(key).or_insert_with(|| {
                    reps.extend_from_slice(&canon);
                    orbit_sizes.push(match symmetry {
                        Symmetry::Trivial => 1.0,
                        Symmetry::Hyperoctahedral => orbit_size(d, used),
                    });
                    next_id
                });
                target.push(id);
                twist.push(perms.intern(g.inverse()));
            }
            row += 1;
        }
        let twist_letters = (0..perms.len())
            .map(|i| {
                let g = perms.get(i as u16).inverse();
                (0..s).map(|z| alphabet.image(z, &g) as u16).collect()
            })
            .collect();
        Ok(StateSpace { alphabet, m, symmetry, reps, orbit_size: orbit_sizes, target, twist, perms, twist_letters })
    }

    pub fn rows(&self) -> usize {
        self.orbit_size.len()
    }

    pub fn letters(&self) -> usize {
        self.alphabet.len()
    }

    pub fn rep(&self, row: usize) -> &[u16] {
        &self.reps[row * self.m..(row + 1) * self.m]
    }

    /// Number of words in the orbit of row `row`.
    pub fn orbit_size(&self, row: usize) -> f64 {
        self.orbit_size[row]
    }

    pub fn target(&self, row: usize, z: usize) -> usize {
        self.target[row * self.letters() + z] as usize
    }

    pub fn twist(&self, row: usize, z: usize) -> u16 {
        self.twist[row * self.letters() + z]
    }

    pub fn perm(&self, id: u16) -> &SignedPerm {
        self.perms.get(id)
    }

    pub fn perm_count(&self) -> usize {
        self.perms.len()
    }

    /// `twist^{-1}(z)` for an interned twist.
    pub fn untwist_letter(&self, twist: u16, z: usize) -> usize {
        self.twist_letters[twist as usize][z] as usize
    }

    /// Total number of `m`-words represented, `|S|^m`.
    pub fn word_count(&self) -> f64 {
        self.orbit_size.iter().sum()
    }

    /// Canonical key and orbit size of a word of any length up to
    /// [`MAX_KEY_LETTERS`].
    pub fn class_of(&self, word: &[u16], scratch: &mut Vec<u16>) -> (WordKey, f64) {
        match self.symmetry {
            Symmetry::Trivial => (pack(word), 1.0),
            Symmetry::Hyperoctahedral => {
                let (_, used) = canonicalize(&self.alphabet, word, scratch);
                (pack(scratch), orbit_size(self.alphabet.dim, used))
            }
        }
    }

    /// Class ids of the last `k` letters of every row representative, and
    /// the number of `k`-words in each class.
    pub fn suffix_classes(&self, k: usize) -> (Vec<u32>, Vec<f64>) {
        let mut ids = HashMap::new();
        let mut sizes = Vec::new();
        let mut scratch = Vec::new();
        let class = (0..self.rows())
            .map(|r| {
                let rep = self.rep(r);
                let (key, size) = self.class_of(&rep[self.m - k..], &mut scratch);
                *ids.entry(key).or_insert_with(|| {
                    sizes.push(size);
                    sizes.len() as u32 - 1
                })
            })
            .collect();
        (class, sizes)
    }
}
