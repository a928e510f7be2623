//! Metropolis sampling of the survival-conditioned path measure.
//!
//! The state is the walker path on `[0, t]` (integer `t`) stored as `t`
//! letters. A move picks a window of whole letters, redraws them from the
//! walk law and rigidly translates everything after the window. Since the
//! proposal is the prior restricted to the window, the acceptance ratio is
//! the ratio of survival weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{sample_letter, Letter, LatticePath, ModelParams, Site};
use crate::rng::{stream, StreamRng};
use crate::stats::integrated_autocorr_time;
use crate::trap::{DensityEval, DensityGrid, DensityState, VEvaluator};

use super::survival::{EvaluatorSpec, VMethod};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    /// Longest redrawn window, in letters.
    pub max_window: usize,
    pub warmup: usize,
    /// Fixed thinning; `None` uses `ceil(5 * IAT)` estimated during warmup.
    pub thin: Option<usize>,
    pub recheck_every: usize,
    pub diag_window: usize,
    pub min_acceptance: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            max_window: 4,
            warmup: 2000,
            thin: None,
            recheck_every: 1000,
            diag_window: 1000,
            min_acceptance: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsChainState {
    pub path: LatticePath,
    pub log_weight: f64,
    pub step: usize,
    pub acceptance_count: usize,
}

/// Log weight of the letters of a path on `[0, t]`.
pub type LogWeightFn = Box<dyn Fn(&[Letter]) -> f64 + Send + Sync>;

enum Backend {
    Free,
    Custom(LogWeightFn),
    Mc { eval: VEvaluator, reach: usize },
    Density { eval: DensityEval, grid: DensityGrid, checkpoints: Vec<DensityState> },
}

pub struct GibbsChain {
    params: ModelParams,
    t: usize,
    cfg: ProposalConfig,
    letters: Vec<Letter>,
    path: LatticePath,
    units: Vec<f64>,
    step: usize,
    accepted: usize,
    rng: StreamRng,
    backend: Backend,
    window: (usize, usize),
    pub warnings: Vec<String>,
    pub max_drift: f64,
    pub boundary_rejections: usize,
}

impl GibbsChain {
    pub fn new(params: &ModelParams, t: usize, cfg: ProposalConfig, spec: &EvaluatorSpec, seed: u64) -> Result<GibbsChain> {
        params.validate()?;
        Self::check(t, &cfg)?;
        let (rng, letters, path) = Self::initial(params, t, seed);
        let backend = if params.gamma == 0.0 {
            Backend::Free
        } else {
            match spec.resolved(params) {
                VMethod::Density => {
                    let eval = DensityEval::new(params, spec.dt)?;
                    // Box for paths of typical diffusive range; proposals
                    // leaving it are rejected and counted.
                    let tf = t as f64;
                    let reach = (4.0 * (params.kappa * tf).sqrt()).ceil() as i32 + 2 + path.max_norm();
                    let half = reach + eval.margin_for(tf);
                    let mut lo = Site::ORIGIN;
                    let mut hi = Site::ORIGIN;
                    for a in 0..params.d {
                        lo.0[a] = -half;
                        hi.0[a] = half;
                    }
                    let grid = DensityGrid::new(params.d, lo, hi);
                    Backend::Density { eval, grid, checkpoints: Vec::new() }
                }
                _ => {
                    let eval = spec.build(params, t as f64, seed, &[0x706f6f6c])?;
                    // The renewal solution depends on the whole past.
                    let reach = match &eval {
                        VEvaluator::NestedMc(m) => m.horizon().ceil() as usize,
                        _ => t,
                    };
                    Backend::Mc { eval, reach }
                }
            }
        };
        Self::assemble(params, t, cfg, rng, letters, path, backend)
    }

    /// Chain for an arbitrary log weight on the letters, recomputed in full
    /// at every step. Meant for small test problems.
    pub fn with_log_weight(
        params: &ModelParams,
        t: usize,
        cfg: ProposalConfig,
        seed: u64,
        log_weight: LogWeightFn,
    ) -> Result<GibbsChain> {
        params.validate()?;
        Self::check(t, &cfg)?;
        let (rng, letters, path) = Self::initial(params, t, seed);
        Self::assemble(params, t, cfg, rng, letters, path, Backend::Custom(log_weight))
    }

    fn check(t: usize, cfg: &ProposalConfig) -> Result<()> {
        if t == 0 {
            return Err(Error::invalid("the chain needs t >= 1"));
        }
        if cfg.max_window == 0 || cfg.recheck_every == 0 || cfg.diag_window == 0 {
            return Err(Error::invalid(format!("bad proposal config {cfg:?}")));
        }
        Ok(())
    }

    fn initial(params: &ModelParams, t: usize, seed: u64) -> (StreamRng, Vec<Letter>, LatticePath) {
        let mut rng = stream(seed, &[0x6962]);
        let letters: Vec<Letter> = (0..t).map(|_| sample_letter(params, &mut rng)).collect();
        let path = LatticePath::from_letters(params.d, 0.0, Site::ORIGIN, &letters);
        (rng, letters, path)
    }

    fn assemble(
        params: &ModelParams,
        t: usize,
        cfg: ProposalConfig,
        rng: StreamRng,
        letters: Vec<Letter>,
        path: LatticePath,
        backend: Backend,
    ) -> Result<GibbsChain> {
        let mut chain = GibbsChain {
            params: *params,
            t,
            cfg,
            letters,
            path,
            units: vec![0.0; t],
            step: 0,
            accepted: 0,
            rng,
            backend,
            window: (0, 0),
            warnings: Vec::new(),
            max_drift: 0.0,
            boundary_rejections: 0,
        };
        chain.units = chain.full_units()?;
        Ok(chain)
    }

    fn full_units(&mut self) -> Result<Vec<f64>> {
        let path = &self.path;
        match &mut self.backend {
            Backend::Free => Ok(vec![0.0; self.t]),
            Backend::Custom(f) => {
                let mut u = vec![0.0; self.t];
                u[0] = f(&self.letters);
                Ok(u)
            }
            Backend::Mc { eval, .. } => Ok(eval.unit_integrals(path)?.values),
            Backend::Density { eval, grid, checkpoints } => {
                let mut state = DensityState::fresh(grid, 0.0);
                checkpoints.clear();
                checkpoints.push(state.clone());
                let marks: Vec<f64> = (1..=self.t).map(|i| i as f64).collect();
                eval.advance(grid, path, &mut state, &marks, Some(checkpoints))
            }
        }
    }

    pub fn log_weight(&self) -> f64 {
        if let Backend::Custom(_) = self.backend {
            return self.units[0];
        }
        -self.params.alpha * self.params.gamma * self.units.iter().sum::<f64>()
    }

    pub fn path(&self) -> &LatticePath {
        &self.path
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn state(&self) -> GibbsChainState {
        GibbsChainState {
            path: self.path.clone(),
            log_weight: self.log_weight(),
            step: self.step,
            acceptance_count: self.accepted,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.step == 0 {
            0.0
        } else {
            self.accepted as f64 / self.step as f64
        }
    }

    /// One Metropolis step; returns whether the proposal was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let t = self.t;
        let a = self.rng.random_range(0..t);
        let len = self.rng.random_range(1..=self.cfg.max_window);
        let b = (a + len).min(t);
        let mut letters = self.letters.clone();
        for l in &mut letters[a..b] {
            *l = sample_letter(&self.params, &mut self.rng);
        }
        let new_path = LatticePath::from_letters(self.params.d, 0.0, Site::ORIGIN, &letters);
        let ag = self.params.alpha * self.params.gamma;
        let u: f64 = self.rng.random();
        let accept = match &mut self.backend {
            Backend::Free => {
                self.letters = letters;
                self.path = new_path;
                true
            }
            Backend::Custom(f) => {
                let lw = f(&letters);
                let ok = u.ln() < lw - self.units[0];
                if ok {
                    self.units[0] = lw;
                    self.letters = letters;
                    self.path = new_path;
                }
                ok
            }
            Backend::Mc { eval, reach } => {
                let c = (b + *reach).min(t);
                let fresh = eval.unit_integrals_range(&new_path, a, c)?.values;
                let old: f64 = self.units[a..c].iter().sum();
                let delta = -ag * (fresh.iter().sum::<f64>() - old);
                let ok = u.ln() < delta;
                if ok {
                    self.units[a..c].copy_from_slice(&fresh);
                    self.letters = letters;
                    self.path = new_path;
                }
                ok
            }
            Backend::Density { eval, grid, checkpoints } => {
                let mut state = checkpoints[a].clone();
                let marks: Vec<f64> = (a + 1..=t).map(|i| i as f64).collect();
                let mut cps = Vec::with_capacity(marks.len());
                match eval.advance(grid, &new_path, &mut state, &marks, Some(&mut cps)) {
                    Ok(fresh) => {
                        let old: f64 = self.units[a..].iter().sum();
                        let delta = -ag * (fresh.iter().sum::<f64>() - old);
                        let ok = u.ln() < delta;
                        if ok {
                            self.units[a..].copy_from_slice(&fresh);
                            checkpoints.truncate(a + 1);
                            checkpoints.extend(cps);
                            self.letters = letters;
                            self.path = new_path;
                        }
                        ok
                    }
                    Err(Error::OutsideBox { .. }) => {
                        self.boundary_rejections += 1;
                        false
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        self.step += 1;
        if accept {
            self.accepted += 1;
            self.window.0 += 1;
        }
        self.window.1 += 1;
        if self.window.1 == self.cfg.diag_window {
            let rate = self.window.0 as f64 / self.window.1 as f64;
            if rate < self.cfg.min_acceptance {
                self.warnings.push(format!(
                    "acceptance {:.2}% over steps {}..{}; consider max_window = {}",
                    100.0 * rate,
                    self.step - self.window.1,
                    self.step,
                    (self.cfg.max_window / 2).max(1)
                ));
            }
            self.window = (0, 0);
        }
        if self.step % self.cfg.recheck_every == 0 {
            self.recheck()?;
        }
        Ok(accept)
    }

    /// Recompute the weight from scratch; returns the absolute drift of the
    /// incrementally maintained log-weight.
    pub fn recheck(&mut self) -> Result<f64> {
        let before = self.log_weight();
        self.units = self.full_units()?;
        let drift = (self.log_weight() - before).abs();
        self.max_drift = self.max_drift.max(drift);
        Ok(drift)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McmcSummary {
    pub t: usize,
    pub steps: usize,
    pub thin: usize,
    pub iat_warmup: f64,
    pub acceptance_rate: f64,
    pub samples: usize,
    pub max_drift: f64,
    pub boundary_rejections: usize,
    pub warnings: Vec<String>,
}

/// Run warmup, choose the thinning, then emit `n_steps / thin` samples to
/// `sink` in order.
pub fn mcmc_gibbs_stream<F>(
    params: &ModelParams,
    t: usize,
    n_steps: usize,
    cfg: ProposalConfig,
    spec: &EvaluatorSpec,
    seed: u64,
    mut sink: F,
) -> Result<McmcSummary>
where
    F: FnMut(&GibbsChainState) -> Result<()>,
{
    let mut chain = GibbsChain::new(params, t, cfg, spec, seed)?;
    let mut trace_end = Vec::with_capacity(cfg.warmup);
    let mut trace_max = Vec::with_capacity(cfg.warmup);
    let mut trace_w = Vec::with_capacity(cfg.warmup);
    for _ in 0..cfg.warmup {
        chain.step()?;
        trace_end.push(chain.path().last().norm_sq() as f64);
        trace_max.push(chain.path().max_norm() as f64);
        trace_w.push(chain.log_weight());
    }
    let half = cfg.warmup / 2;
    let iat = [&trace_end, &trace_max, &trace_w]
        .iter()
        .map(|tr| integrated_autocorr_time(&tr[half..]))
        .fold(1.0, f64::max);
    let thin = cfg.thin.unwrap_or((5.0 * iat).ceil() as usize).max(1);
    let mut samples = 0;
    for i in 1..=n_steps {
        chain.step()?;
        if i % thin == 0 {
            sink(&chain.state())?;
            samples += 1;
        }
    }
    chain.recheck()?;
    Ok(McmcSummary {
        t,
        steps: n_steps,
        thin,
        iat_warmup: iat,
        acceptance_rate: chain.acceptance_rate(),
        samples,
        max_drift: chain.max_drift,
        boundary_rejections: chain.boundary_rejections,
        warnings: chain.warnings.clone(),
    })
}

pub fn mcmc_gibbs(
    params: &ModelParams,
    t: usize,
    n_steps: usize,
    cfg: ProposalConfig,
    spec: &EvaluatorSpec,
    seed: u64,
) -> Result<(Vec<GibbsChainState>, McmcSummary)> {
    let mut out = Vec::new();
    let summary = mcmc_gibbs_stream(params, t, n_steps, cfg, spec, seed, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok((out, summary))
}
