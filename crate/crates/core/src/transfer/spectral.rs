use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::rpf::{dot, RpfData};
use super::symmetry::{SignedPerm, Symmetry};

/// Conditional expectation under `nu_h` given the last `k` letters.
#[derive(Clone, Debug)]
pub struct AkOperator {
    pub k: usize,
    class: Vec<u32>,
    mass: Vec<f64>,
    nu_h: Vec<f64>,
}

pub fn ak_project(rpf: &RpfData, k: usize) -> Result<AkOperator> {
    let m = rpf.space().m;
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("A_k needs 1 <= k < m = {m}, got k = {k}")));
    }
    let (class, sizes) = rpf.space().suffix_classes(k);
    let mut mass = vec![0.0; sizes.len()];
    for (c, w) in class.iter().zip(&rpf.nu_h) {
        mass[*c as usize] += w;
    }
    Ok(AkOperator { k, class, mass, nu_h: rpf.nu_h.clone() })
}

impl AkOperator {
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let mut acc = vec![0.0; self.mass.len()];
        for ((c, w), x) in self.class.iter().zip(&self.nu_h).zip(f) {
            acc[*c as usize] += w * x;
        }
        for (o, c) in out.iter_mut().zip(&self.class) {
            *o = acc[*c as usize] / self.mass[*c as usize];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBounds {
    pub k: usize,
    pub min: f64,
    pub max: f64,
    /// `max_z |int K(x, z) nu_h(dx) - 1|`.
    pub column_error: f64,
}

const MAX_KERNEL_WORDS: usize = 20_000_000;

/// `K_k(x, z) = Pi_h^k(x -> xz) / nu_h(last k letters = z)` over every past
/// and every `k`-word, checked against `c <= K <= 1/c`.
pub fn verify_kernel_bounds(rpf: &RpfData, k: usize, c: f64) -> Result<KernelBounds> {
    let space = rpf.space();
    let m = space.m;
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("kernel needs 1 <= k < m = {m}, got k = {k}")));
    }
    let s = space.letters();
    let n_words = s.checked_pow(k as u32).filter(|n| *n <= MAX_KERNEL_WORDS).ok_or_else(|| {
        Error::invalid(format!("{s}^{k} words is too many for the kernel enumeration"))
    })?;

    // Class of every k-word, by its base-|S| code.
    let (row_class, sizes) = space.suffix_classes(k);
    let mut key_class: HashMap<u128, u32> = HashMap::new();
    let mut scratch = Vec::new();
    for r in 0..space.rows() {
        let (key, _) = space.class_of(&space.rep(r)[m - k..], &mut scratch);
        key_class.insert(key, row_class[r]);
    }
    let mut word = vec![0u16; k];
    let word_class: Vec<u32> = (0..n_words)
        .map(|code| {
            let mut c = code;
            for slot in word.iter_mut().rev() {
                *slot = (c % s) as u16;
                c /= s;
            }
            key_class[&space.class_of(&word, &mut scratch).0]
        })
        .collect();
    let mut class_mass = vec![0.0; sizes.len()];
    for (cl, w) in row_class.iter().zip(&rpf.nu_h) {
        class_mass[*cl as usize] += w;
    }
    // nu_h of one k-word in the class.
    let word_mass: Vec<f64> = class_mass.iter().zip(&sizes).map(|(a, b)| a / b).collect();

    let walk = KernelWalk {
        rpf,
        symmetric: space.symmetry == Symmetry::Hyperoctahedral,
        k,
        word_class: &word_class,
        word_mass: &word_mass,
    };
    let rows: Vec<usize> = (0..space.rows()).collect();
    let parts: Vec<(f64, f64, Vec<f64>)> = rows
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = (f64::INFINITY, 0.0, vec![0.0; sizes.len()]);
            for &r in chunk {
                walk.descend(r, r, 0, 1.0, SignedPerm::identity(space.alphabet.dim), 0, &mut acc);
            }
            acc
        })
        .collect();

    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut col = vec![0.0; sizes.len()];
    for (a, b, c) in parts {
        lo = lo.min(a);
        hi = hi.max(b);
        col.iter_mut().zip(c).for_each(|(x, y)| *x += y);
    }
    // Summed over the class and divided by its size; every word of a class
    // has the same column integral.
    let column_error = col.iter().zip(&sizes).fold(0.0, |m: f64, (a, b)| m.max((a / b - 1.0).abs()));
    let out = KernelBounds { k, min: lo, max: hi, column_error };
    let slack = 1e-10;
    if lo < c * (1.0 - slack) || hi > (1.0 + slack) / c {
        return Err(Error::BoundViolation(format!("kernel range [{lo}, {hi}] outside [{c}, {}]", 1.0 / c)));
    }
    Ok(out)
}

struct KernelWalk<'a> {
    rpf: &'a RpfData,
    symmetric: bool,
    k: usize,
    word_class: &'a [u32],
    word_mass: &'a [f64],
}

impl KernelWalk<'_> {
    /// The walk sits on `g(rep(row))`; entry letter `e` of the row is the
    /// actual letter `g(e)`, and the target is reached through the twist.
    #[allow(clippy::too_many_arguments)]
    fn descend(&self, start: usize, row: usize, depth: usize, p: f64, g: SignedPerm, code: usize, acc: &mut (f64, f64, Vec<f64>)) {
        if depth == self.k {
            let class = self.word_class[code] as usize;
            let kk = p / self.word_mass[class];
            acc.0 = acc.0.min(kk);
            acc.1 = acc.1.max(kk);
            acc.2[class] += self.rpf.nu_h[start] * kk;
            return;
        }
        let space = self.rpf.space();
        let s = space.letters();
        for e in 0..s {
            let (actual, next_g) = if self.symmetric {
                (space.alphabet.image(e, &g), g.compose(space.perm(space.twist(row, e))))
            } else {
                (e, g)
            };
            let q = p * self.rpf.pi_h[row * s + e];
            self.descend(start, space.target(row, e), depth + 1, q, next_g, code * s + actual, acc);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub k: usize,
    /// `|Pi_h^k A_k f|_1` under `nu_h`.
    pub lhs: f64,
    /// `(1 - c) |f|_1`.
    pub rhs: f64,
}

impl ContractionCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// `|Pi_h^k A_k f|_1 <= (1 - c) |f|_1` for a `nu_h`-centred invariant `f`.
pub fn contraction_check(rpf: &RpfData, k: usize, c: f64, f: &[f64]) -> Result<ContractionCheck> {
    let a = ak_project(rpf, k)?;
    let f = centred(rpf, f)?;
    let mut g = vec![0.0; f.len()];
    a.apply(&f, &mut g);
    let mut next = vec![0.0; f.len()];
    for _ in 0..k {
        rpf.apply_pi(&g, &mut next);
        std::mem::swap(&mut g, &mut next);
    }
    Ok(ContractionCheck { k, lhs: l1(rpf, &g), rhs: (1.0 - c) * l1(rpf, &f) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingDecay {
    /// `|Pi_h^n f|_{L^2(nu_h)}` for `n = 0..=n_max`.
    pub norms: Vec<f64>,
    pub contraction: Vec<ContractionCheck>,
}

pub fn mixing_decay(rpf: &RpfData, f: &[f64], n_max: usize, c: f64) -> Result<MixingDecay> {
    let mut g = centred(rpf, f)?;
    let contraction =
        (1..rpf.space().m).map(|k| contraction_check(rpf, k, c, &g)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = contraction.iter().find(|x| !x.holds(1e-10)) {
        return Err(Error::BoundViolation(format!("contraction fails at k = {}: {} > {}", bad.k, bad.lhs, bad.rhs)));
    }
    let mut next = vec![0.0; g.len()];
    let mut norms = Vec::with_capacity(n_max + 1);
    norms.push(l2(rpf, &g));
    for _ in 0..n_max {
        rpf.apply_pi(&g, &mut next);
        std::mem::swap(&mut g, &mut next);
        norms.push(l2(rpf, &g));
    }
    Ok(MixingDecay { norms, contraction })
}

fn centred(rpf: &RpfData, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != rpf.rows() {
        return Err(Error::invalid("function does not match the state space"));
    }
    let mean = rpf.mean(f);
    Ok(if mean.abs() > 1e-12 { f.iter().map(|x| x - mean).collect() } else { f.to_vec() })
}

fn l1(rpf: &RpfData, f: &[f64]) -> f64 {
    rpf.nu_h.iter().zip(f).map(|(w, x)| w * x.abs()).sum()
}

fn l2(rpf: &RpfData, f: &[f64]) -> f64 {
    rpf.nu_h.iter().zip(f).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesConfig {
    pub k_max: usize,
    pub tail_tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { k_max: 10_000, tail_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaSquared {
    /// One entry per coordinate; a scalar observable has one.
    pub sigma2: Vec<f64>,
    pub tail_bound: f64,
    pub lags: usize,
}

/// `Var(f) + 2 sum_n <f, Pi_h^n f>` under `nu_h` for an invariant scalar `f`.
pub fn sigma_squared(rpf: &RpfData, f: &[f64], cfg: SeriesConfig) -> Result<SigmaSquared> {
    let f = centred(rpf, f)?;
    autocov_series(rpf, &f, 1, false, cfg)
}

/// Series for the displacement of the newest letter, per coordinate.
///
/// The displacement is equivariant rather than invariant, so on a reduced
/// space each step carries the transition twist; the covariance matrix is
/// then isotropic and every coordinate gets the trace over `d`.
pub fn displacement_sigma_squared(rpf: &RpfData, cfg: SeriesConfig) -> Result<SigmaSquared> {
    let space = rpf.space();
    let d = space.alphabet.dim;
    let m = space.m;
    let mut f = vec![0.0; space.rows() * d];
    for r in 0..space.rows() {
        let disp = space.alphabet.displacement(space.rep(r)[m - 1] as usize);
        for a in 0..d {
            f[r * d + a] = disp.coord(a) as f64;
        }
    }
    let symmetric = space.symmetry == Symmetry::Hyperoctahedral;
    if !symmetric {
        for a in 0..d {
            let mean: f64 = (0..space.rows()).map(|r| rpf.nu_h[r] * f[r * d + a]).sum();
            (0..space.rows()).for_each(|r| f[r * d + a] -= mean);
        }
    }
    autocov_series(rpf, &f, d, symmetric, cfg)
}

/// `f` holds `dim` values per row; with `equivariant` the vector is rotated
/// by each transition twist and coordinates are pooled.
fn autocov_series(rpf: &RpfData, f: &[f64], dim: usize, equivariant: bool, cfg: SeriesConfig) -> Result<SigmaSquared> {
    let space = rpf.space();
    let rows = space.rows();
    let s = space.letters();
    let cov = |g: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for r in 0..rows {
            for a in 0..dim {
                c[a] += rpf.nu_h[r] * f[r * dim + a] * g[r * dim + a];
            }
        }
        if equivariant {
            let mean = c.iter().sum::<f64>() / dim as f64;
            c.iter_mut().for_each(|x| *x = mean);
        }
        c
    };
    let abs_mean: f64 = (0..rows)
        .map(|r| rpf.nu_h[r] * (0..dim).map(|a| f[r * dim + a].abs()).fold(0.0, f64::max))
        .sum();
    let sup = |g: &[f64]| g.iter().fold(0.0, |m: f64, x| m.max(x.abs()));

    let mut sigma2 = cov(f);
    let mut g = f.to_vec();
    let mut next = vec![0.0; g.len()];
    let mut recent: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut prev_sup = sup(&g);
    for n in 1..=cfg.k_max {
        next.par_chunks_mut(dim).enumerate().for_each(|(r, out)| {
            out.iter_mut().for_each(|x| *x = 0.0);
            let mut tmp = [0.0; crate::lattice::MAX_DIM];
            for z in 0..s {
                let p = rpf.pi_h[r * s + z];
                let t = space.target(r, z);
                let src = &g[t * dim..(t + 1) * dim];
                if equivariant {
                    space.perm(space.twist(r, z)).apply_vec(src, &mut tmp[..dim]);
                    out.iter_mut().zip(&tmp[..dim]).for_each(|(o, x)| *o += p * x);
                } else {
                    out.iter_mut().zip(src).for_each(|(o, x)| *o += p * x);
                }
            }
        });
        std::mem::swap(&mut g, &mut next);
        let c = cov(&g);
        sigma2.iter_mut().zip(&c).for_each(|(s2, x)| *s2 += 2.0 * x);
        recent.push(c.iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        let cur_sup = sup(&g);
        ratios.push(if prev_sup > 0.0 { cur_sup / prev_sup } else { 0.0 });
        prev_sup = cur_sup;
        if recent.len() >= 5 {
            let last = &recent[recent.len() - 5..];
            let rho = ratios[ratios.len() - 5..].iter().copied().fold(0.0, f64::max);
            let tail_bound = if cur_sup == 0.0 {
                0.0
            } else if rho < 1.0 {
                2.0 * abs_mean * cur_sup * rho / (1.0 - rho)
            } else {
                f64::INFINITY
            };
            if last.iter().all(|x| *x < cfg.tail_tol) && tail_bound < cfg.tail_tol {
                return finish(sigma2, tail_bound, n);
            }
        }
        if cur_sup == 0.0 {
            return finish(sigma2, 0.0, n);
        }
    }
    Err(Error::SeriesDivergence {
        k_max: cfg.k_max,
        partial: sigma2.iter().sum::<f64>() / dim as f64,
        last_term: recent.last().copied().unwrap_or(0.0),
    })
}

fn finish(sigma2: Vec<f64>, tail_bound: f64, lags: usize) -> Result<SigmaSquared> {
    if sigma2.iter().any(|x| *x < -1e-12) {
        return Err(Error::BoundViolation(format!("negative asymptotic variance {sigma2:?}")));
    }
    Ok(SigmaSquared { sigma2: sigma2.into_iter().map(|x| x.max(0.0)).collect(), tail_bound, lags })
}

/// `<f, g>` under `nu_h`.
pub fn inner(rpf: &RpfData, f: &[f64], g: &[f64]) -> f64 {
    let w: Vec<f64> = rpf.nu_h.iter().zip(f).map(|(a, b)| a * b).collect();
    dot(&w, g)
}
