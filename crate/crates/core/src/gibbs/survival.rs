//! Annealed survival `Z_t = E[Z_{t,X}]` by averaging over walker paths.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{simulate_walk, Direction, LatticePath, ModelParams, PathBuilder, Site};
use crate::rng::stream;
use crate::stats::log_mean_exp;
use crate::trap::{gibbs_weight, DensityEval, NestedMc, RenewalEval, TruncationPolicy, VEvaluator};

const KEY_PATH: u64 = 1;
const KEY_POOL: u64 = 2;
const KEY_PILOT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMethod {
    /// Lattice ODE for `d <= 2`, nested Monte Carlo otherwise.
    Auto,
    Density,
    NestedMc,
    /// Renewal equation along the path, step `dt`.
    Renewal,
}

/// Which `v` evaluator to build for each path, and its numerical settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub method: VMethod,
    pub dt: f64,
    pub policy: TruncationPolicy,
}

impl EvaluatorSpec {
    pub fn auto(params: &ModelParams, n_inner: usize, tail_tol: f64) -> EvaluatorSpec {
        EvaluatorSpec { method: VMethod::Auto, dt: 0.1, policy: TruncationPolicy::calibrated(params, n_inner, tail_tol) }
    }

    pub fn resolved(&self, params: &ModelParams) -> VMethod {
        match self.method {
            VMethod::Auto if params.d <= 2 => VMethod::Density,
            VMethod::Auto => VMethod::NestedMc,
            m => m,
        }
    }

    /// Evaluator for paths no longer than `max_len`; the excursion pool of
    /// the nested Monte Carlo evaluator is drawn from stream `(seed, key)`.
    pub fn build(&self, params: &ModelParams, max_len: f64, seed: u64, key: &[u64]) -> Result<VEvaluator> {
        Ok(match self.resolved(params) {
            VMethod::Density => VEvaluator::Density(DensityEval::new(params, self.dt)?),
            VMethod::Renewal => VEvaluator::Renewal(RenewalEval::new(params, self.dt)?),
            _ => VEvaluator::NestedMc(NestedMc::new(params, &self.policy, max_len, &mut stream(seed, key))?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalMethod {
    Plain,
    /// Walker tilted towards the origin with strength `theta`; `None`
    /// selects `theta` from a pilot run.
    Importance { theta: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub log_z: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub method: &'static str,
    pub theta: f64,
}

pub fn annealed_survival(
    params: &ModelParams,
    t: f64,
    n_paths: usize,
    spec: &EvaluatorSpec,
    method: SurvivalMethod,
    seed: u64,
) -> Result<SurvivalEstimate> {
    params.validate()?;
    if n_paths < 2 {
        return Err(Error::invalid("annealed_survival needs n_paths >= 2"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    let tag = match method {
        SurvivalMethod::Plain => "plain",
        SurvivalMethod::Importance { .. } => "importance",
    };
    if params.gamma == 0.0 {
        return Ok(SurvivalEstimate { t, log_z: 0.0, stderr: 0.0, n_paths, method: tag, theta: 0.0 });
    }
    let theta = match method {
        SurvivalMethod::Plain => 0.0,
        SurvivalMethod::Importance { theta: Some(th) } => th,
        SurvivalMethod::Importance { theta: None } => pilot_theta(params, t, n_paths, spec, seed)?,
    };
    let log_w = tilted_log_weights(params, t, n_paths, spec, theta, seed, &[])?;
    let est = log_mean_exp(&log_w);
    if !est.mean.is_finite() {
        return Err(Error::NonFinite { context: format!("log Z at t = {t}") });
    }
    Ok(SurvivalEstimate { t, log_z: est.mean, stderr: est.stderr, n_paths, method: tag, theta })
}

/// Estimates on a grid of times. With the plain method and integer times,
/// one set of paths serves every grid point, since the weight of a prefix
/// only depends on the prefix.
pub fn annealed_survival_grid(
    params: &ModelParams,
    ts: &[f64],
    n_paths: usize,
    spec: &EvaluatorSpec,
    method: SurvivalMethod,
    seed: u64,
) -> Result<Vec<SurvivalEstimate>> {
    let integer = ts.iter().all(|t| *t > 0.0 && t.fract() == 0.0);
    if method != SurvivalMethod::Plain || !integer || params.gamma == 0.0 {
        return ts
            .iter()
            .enumerate()
            .map(|(i, &t)| annealed_survival(params, t, n_paths, spec, method, crate::rng::stream(seed, &[i as u64]).random()))
            .collect();
    }
    if n_paths < 2 {
        return Err(Error::invalid("annealed_survival needs n_paths >= 2"));
    }
    let t_max = ts.iter().copied().fold(0.0, f64::max);
    let ag = params.alpha * params.gamma;
    let prefixes: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[KEY_PATH, i as u64]);
            let path = simulate_walk(params.d, params.kappa, t_max, Site::ORIGIN, &mut rng);
            let eval = spec.build(params, t_max, seed, &[KEY_POOL, i as u64])?;
            let u = eval.unit_integrals(&path)?;
            let mut acc = 0.0;
            let mut cum = Vec::with_capacity(u.values.len());
            for v in &u.values {
                acc += v;
                cum.push(-ag * acc);
            }
            Ok(cum)
        })
        .collect::<Result<_>>()?;
    ts.iter()
        .map(|&t| {
            let k = t as usize - 1;
            let lw: Vec<f64> = prefixes.iter().map(|c| c[k]).collect();
            let est = log_mean_exp(&lw);
            Ok(SurvivalEstimate { t, log_z: est.mean, stderr: est.stderr, n_paths, method: "plain", theta: 0.0 })
        })
        .collect()
}

fn tilted_log_weights(
    params: &ModelParams,
    t: f64,
    n_paths: usize,
    spec: &EvaluatorSpec,
    theta: f64,
    seed: u64,
    key: &[u64],
) -> Result<Vec<f64>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut k = key.to_vec();
            k.extend([KEY_PATH, i as u64]);
            let mut rng = stream(seed, &k);
            let (path, log_lr) = if theta == 0.0 {
                (simulate_walk(params.d, params.kappa, t, Site::ORIGIN, &mut rng), 0.0)
            } else {
                simulate_tilted(params.d, params.kappa, theta, t, &mut rng)
            };
            k.pop();
            k.pop();
            k.extend([KEY_POOL, i as u64]);
            let eval = spec.build(params, t, seed, &k)?;
            Ok(gibbs_weight(&path, &eval)?.value + log_lr)
        })
        .collect()
}

fn pilot_theta(params: &ModelParams, t: f64, n_paths: usize, spec: &EvaluatorSpec, seed: u64) -> Result<f64> {
    let n_pilot = (n_paths / 10).max(50);
    let mut best = (f64::INFINITY, 0.0);
    for (j, &theta) in [0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0].iter().enumerate() {
        let lw = tilted_log_weights(params, t, n_pilot, spec, theta, seed, &[KEY_PILOT, j as u64])?;
        let est = log_mean_exp(&lw);
        let rel_var = est.stderr.powi(2) * n_pilot as f64;
        if rel_var < best.0 {
            best = (rel_var, theta);
        }
    }
    Ok(best.1)
}

/// Walk whose jumps towards the origin (per coordinate) are sped up by
/// `e^theta` and jumps away slowed by `e^-theta`. Returns the path and the
/// log likelihood ratio of the simple random walk against the tilted law.
pub fn simulate_tilted<R: Rng + ?Sized>(
    dim: usize,
    kappa: f64,
    theta: f64,
    duration: f64,
    rng: &mut R,
) -> (LatticePath, f64) {
    let mut b = PathBuilder::new(dim, 0.0, Site::ORIGIN);
    let mut log_lr = 0.0;
    if kappa <= 0.0 {
        return (b.finish(duration), 0.0);
    }
    let base = kappa / (2 * dim) as f64;
    let (up, down) = (base * theta.exp(), base * (-theta).exp());
    let mut t = 0.0;
    let mut rates = vec![0.0; 2 * dim];
    loop {
        let x = b.current();
        for a in 0..dim {
            let c = x.coord(a);
            let (plus, minus) = match c.signum() {
                0 => (base, base),
                1 => (down, up),
                _ => (up, down),
            };
            rates[2 * a] = plus;
            rates[2 * a + 1] = minus;
        }
        let total: f64 = rates.iter().sum();
        let u: f64 = rng.random();
        let hold = -(1.0 - u).ln() / total;
        if t + hold > duration {
            log_lr -= (kappa - total) * (duration - t);
            break;
        }
        t += hold;
        log_lr -= (kappa - total) * hold;
        let mut pick = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < rates.len() && pick >= rates[k] {
            pick -= rates[k];
            k += 1;
        }
        log_lr += (base / rates[k]).ln();
        b.jump(t, Direction::from_index(k, dim).expect("index below 2d"));
    }
    (b.finish(duration), log_lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilted_likelihood_ratio_has_unit_mean() {
        let mut rng = stream(4, &[]);
        let n = 20000;
        let lr: Vec<f64> = (0..n).map(|_| simulate_tilted(2, 1.0, 0.5, 3.0, &mut rng).1).collect();
        let est = log_mean_exp(&lr);
        assert!(est.mean.abs() < 3.0 * est.stderr + 1e-3, "{est:?}");
    }

    #[test]
    fn zero_gamma_is_exact() {
        let p = ModelParams::new(3, 1.0, 1.0, 0.0, 1.0).unwrap();
        let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
        let e = annealed_survival(&p, 5.0, 10, &spec, SurvivalMethod::Plain, 1).unwrap();
        assert_eq!((e.log_z, e.stderr), (0.0, 0.0));
    }
}
