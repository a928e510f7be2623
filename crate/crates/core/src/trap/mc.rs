//! Nested Monte Carlo for the Feynman-Kac function `v(s, X)`.
//!
//! A fixed pool of time-reversed trap excursions is drawn once per evaluator
//! and reused for every quadrature node, every path and every `gamma`.
//! With the pool fixed, the estimated weight is a deterministic function of
//! the path, which is what the MCMC sampler and the potential tables need:
//! differences between nearby paths come only from the paths themselves.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{simulate_walk, LatticePath, ModelParams, Site};
use crate::trap::coincidence::{reversed_overlap, Excursion};
use crate::trap::{TruncationPolicy, VEstimate};

/// Sub-points per inter-jump segment in the quadrature; each sub-point
/// index has its own slice of the excursion pool.
pub const SUBPOINTS: usize = 8;

#[derive(Clone, Debug)]
pub struct NestedMc {
    params: ModelParams,
    horizon: f64,
    pool: Vec<Vec<Excursion>>,
}

impl NestedMc {
    /// `max_len` caps the excursion length when the horizon exceeds the
    /// longest past that will ever be queried.
    pub fn new<R: Rng + ?Sized>(
        params: &ModelParams,
        policy: &TruncationPolicy,
        max_len: f64,
        rng: &mut R,
    ) -> Result<NestedMc> {
        params.validate()?;
        policy.validate()?;
        let len = policy.horizon.min(max_len);
        if !len.is_finite() || len <= 0.0 {
            return Err(Error::invalid("nested Monte Carlo needs a finite positive horizon or path length"));
        }
        let pool = (0..SUBPOINTS)
            .map(|_| {
                (0..policy.n_inner)
                    .map(|_| Excursion::from_path(&simulate_walk(params.d, params.rho, len, Site::ORIGIN, rng)))
                    .collect()
            })
            .collect();
        Ok(NestedMc { params: *params, horizon: len, pool })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_inner(&self) -> usize {
        self.pool[0].len()
    }

    /// Estimate of `v(s, X)` and the variance of that estimate.
    pub fn v_node(&self, path: &LatticePath, s: f64, sub: usize, gamma: f64) -> (f64, f64) {
        if path.position(s).is_none() {
            return (0.0, 0.0);
        }
        if gamma == 0.0 {
            return (1.0, 0.0);
        }
        mean_var(self.pool[sub % SUBPOINTS].iter().map(|w| (-gamma * reversed_overlap(path, s, w, self.horizon)).exp()))
    }

    /// Estimates of `v(s, X)` for several `gamma` values from one set of
    /// coincidence times.
    pub fn v_node_multi(&self, path: &LatticePath, s: f64, sub: usize, gammas: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if path.position(s).is_none() {
            return;
        }
        let pool = &self.pool[sub % SUBPOINTS];
        for w in pool {
            let c = reversed_overlap(path, s, w, self.horizon);
            for (o, g) in out.iter_mut().zip(gammas) {
                *o += (-g * c).exp();
            }
        }
        let n = pool.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
}

pub(crate) fn mean_var(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    let n_f = n as f64;
    let mean = sum / n_f;
    let var = if n > 1 { ((sq - n_f * mean * mean) / (n_f - 1.0)).max(0.0) / n_f } else { 0.0 };
    (mean, var)
}

/// Fresh-sample estimate of `v(s, X)` with `policy.n_inner` trap excursions.
pub fn v_hat<R: Rng + ?Sized>(
    past: &LatticePath,
    s: f64,
    params: &ModelParams,
    policy: &TruncationPolicy,
    rng: &mut R,
) -> Result<VEstimate> {
    params.validate()?;
    policy.validate()?;
    if past.position(s).is_none() {
        return Ok(VEstimate { estimate: 0.0, stderr: 0.0 });
    }
    if params.gamma == 0.0 {
        return Ok(VEstimate { estimate: 1.0, stderr: 0.0 });
    }
    let len = policy.horizon.min(s - past.defined_from());
    if !len.is_finite() {
        return Err(Error::invalid("infinite horizon with an unbounded past"));
    }
    let (mean, var) = mean_var((0..policy.n_inner).map(|_| {
        let w = Excursion::from_path(&simulate_walk(params.d, params.rho, len.max(0.0), Site::ORIGIN, rng));
        (-params.gamma * reversed_overlap(past, s, &w, len)).exp()
    }));
    if !mean.is_finite() || !var.is_finite() {
        return Err(Error::NonFinite { context: format!("v_hat at s = {s}") });
    }
    Ok(VEstimate { estimate: mean, stderr: var.sqrt() })
}
