//! Survival weights in the mobile trap field.
//!
//! Integrating out the Poisson field leaves the annealed weight
//! `log Z_{t,X} = -alpha gamma int_0^t v(s, X) ds`, where `v(s, X)` is the
//! probability-like Feynman-Kac functional of one time-reversed trap started
//! at `X_s`. Two evaluators are provided: nested Monte Carlo over trap
//! excursions ([`mc::NestedMc`]), a deterministic lattice ODE for low
//! dimensions ([`density::DensityEval`]) and a renewal equation along the
//! walker path ([`renewal::RenewalEval`]).

pub mod cache;
pub mod coincidence;
pub mod density;
pub mod field;
pub mod mc;
pub mod renewal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{decode_word, LatticePath, ModelParams, Word};

pub use coincidence::{coincidence_time, reversed_overlap, Excursion};
pub use density::{DensityEval, DensityGrid, DensityState};
pub use field::{field_survival_weight, recommended_box, simulate_trap_field, TrapField};
pub use mc::{v_hat, NestedMc, SUBPOINTS};
pub use renewal::{RenewalEval, RenewalSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogWeight {
    pub value: f64,
    pub stderr: f64,
}

/// How far into the past the time-reversed trap is followed, and with how
/// many samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub horizon: f64,
    pub n_inner: usize,
    pub tail_tol: f64,
}

impl TruncationPolicy {
    pub fn new(horizon: f64, n_inner: usize, tail_tol: f64) -> Result<TruncationPolicy> {
        let p = TruncationPolicy { horizon, n_inner, tail_tol };
        p.validate()?;
        Ok(p)
    }

    /// Horizon chosen so that [`Self::tail_bound`] equals `tail_tol`; infinite
    /// in `d <= 2` where the tail is not summable.
    pub fn calibrated(params: &ModelParams, n_inner: usize, tail_tol: f64) -> TruncationPolicy {
        let horizon = match tail_constant(params) {
            Some(c) if c > 0.0 => {
                let e = params.d as f64 / 2.0 - 1.0;
                (c / tail_tol).powf(1.0 / e).max(1.0)
            }
            Some(_) => 1.0,
            None => f64::INFINITY,
        };
        TruncationPolicy { horizon, n_inner, tail_tol }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inner == 0 || !(self.horizon > 0.0) || !(self.tail_tol > 0.0) {
            return Err(Error::invalid(format!("bad truncation policy {self:?}")));
        }
        Ok(())
    }

    /// Estimated bias of `v` from cutting the trap excursion at the horizon.
    pub fn tail_bound(&self, params: &ModelParams) -> f64 {
        match tail_constant(params) {
            Some(c) if self.horizon.is_finite() => c * self.horizon.powf(1.0 - params.d as f64 / 2.0),
            Some(_) => 0.0,
            None if self.horizon.is_finite() => f64::INFINITY,
            None => 0.0,
        }
    }
}

/// `C` in `bias(v) <= C H^{1 - d/2}`: `gamma` times the local limit estimate
/// of the expected coincidence time after `H` for a relative walk of rate
/// `rho + kappa`. `None` when the tail is not summable.
pub fn tail_constant(params: &ModelParams) -> Option<f64> {
    if params.d <= 2 {
        return None;
    }
    let d = params.d as f64;
    let rate = params.rho + params.kappa;
    Some(params.gamma * (d / (2.0 * std::f64::consts::PI * rate)).powf(d / 2.0) / (d / 2.0 - 1.0))
}

#[derive(Clone, Debug)]
pub enum VEvaluator {
    NestedMc(NestedMc),
    Density(DensityEval),
    Renewal(RenewalEval),
}

/// Integrals of `v(s, X)` over consecutive unit intervals of a path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnitIntegrals {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

impl UnitIntegrals {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// Quadrature node for `int v ds`: composite midpoint rule with
/// [`SUBPOINTS`] points on every inter-jump segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub s: f64,
    pub weight: f64,
    pub sub: usize,
}

pub fn quadrature_nodes(path: &LatticePath, a: f64, b: f64, out: &mut Vec<Node>) {
    out.clear();
    let a = a.max(path.defined_from());
    let b = b.min(path.end());
    if b <= a {
        return;
    }
    let times = path.times();
    let mut k = path.segment_index(a);
    let mut u = a;
    loop {
        let v = times.get(k).copied().unwrap_or(f64::INFINITY).min(b);
        if v > u {
            let h = (v - u) / SUBPOINTS as f64;
            for j in 0..SUBPOINTS {
                out.push(Node { s: u + (j as f64 + 0.5) * h, weight: h, sub: j });
            }
        }
        if v >= b {
            break;
        }
        u = v;
        k += 1;
    }
}

impl VEvaluator {
    pub fn params(&self) -> &ModelParams {
        match self {
            VEvaluator::NestedMc(m) => m.params(),
            VEvaluator::Density(d) => d.params(),
            VEvaluator::Renewal(r) => r.params(),
        }
    }

    pub fn unit_count(path: &LatticePath) -> usize {
        (path.duration() - 1e-9).ceil().max(0.0) as usize
    }

    /// Unit integrals `int_{start+i}^{start+i+1} v ds` for all units.
    pub fn unit_integrals(&self, path: &LatticePath) -> Result<UnitIntegrals> {
        self.unit_integrals_range(path, 0, Self::unit_count(path))
    }

    /// Unit integrals for units `from..to`. The deterministic evaluators
    /// still integrate from the start of the defined past.
    pub fn unit_integrals_range(&self, path: &LatticePath, from: usize, to: usize) -> Result<UnitIntegrals> {
        let start = path.start();
        let unit_end = |i: usize| (start + (i + 1) as f64).min(path.end());
        match self {
            VEvaluator::NestedMc(mc) => {
                let gamma = mc.params().gamma;
                let mut nodes = Vec::new();
                let mut out = UnitIntegrals::default();
                for i in from..to {
                    quadrature_nodes(path, start + i as f64, unit_end(i), &mut nodes);
                    let (mut val, mut var) = (0.0, 0.0);
                    for nd in &nodes {
                        let (m, v) = mc.v_node(path, nd.s, nd.sub, gamma);
                        val += nd.weight * m;
                        var += nd.weight * nd.weight * v;
                    }
                    out.values.push(val);
                    out.variances.push(var);
                }
                Ok(out)
            }
            VEvaluator::Density(de) => {
                let grid = de.grid_for(path);
                let t0 = path.defined_from();
                let mut state = DensityState::fresh(&grid, t0);
                let mut marks = Vec::new();
                let mut slots = Vec::new();
                for i in 0..to {
                    let e = unit_end(i);
                    if e > t0 {
                        marks.push(e);
                        slots.push(i);
                    }
                }
                let vals = de.advance(&grid, path, &mut state, &marks, None)?;
                let mut values = vec![0.0; to - from];
                for (i, v) in slots.into_iter().zip(vals) {
                    if i >= from {
                        values[i - from] = v;
                    }
                }
                Ok(UnitIntegrals { variances: vec![0.0; values.len()], values })
            }
            VEvaluator::Renewal(re) => {
                let sol = re.solve(path)?;
                let values: Vec<f64> = (from..to).map(|i| sol.integral(start + i as f64, unit_end(i))).collect();
                Ok(UnitIntegrals { variances: vec![0.0; values.len()], values })
            }
        }
    }
}

/// `log Z_{t,X} = -alpha gamma int_0^t v(s, X) ds` for a path on `[0, t]`.
pub fn gibbs_weight(path: &LatticePath, eval: &VEvaluator) -> Result<LogWeight> {
    let p = eval.params();
    if p.gamma == 0.0 {
        return Ok(LogWeight { value: 0.0, stderr: 0.0 });
    }
    let u = eval.unit_integrals(path)?;
    let ag = p.alpha * p.gamma;
    let value = -ag * u.total();
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "gibbs weight".into() });
    }
    Ok(LogWeight { value, stderr: ag * u.total_variance().sqrt() })
}

/// `phi(word) = -alpha gamma int_{-1}^0 v(s, X) ds` for the decoded word.
pub fn potential_phi(word: &Word, eval: &VEvaluator) -> Result<f64> {
    let n = word.len();
    if n == 0 {
        return Err(Error::invalid("potential needs a non-empty word"));
    }
    let p = eval.params();
    if p.gamma == 0.0 {
        return Ok(0.0);
    }
    let path = decode_word(word, p.d);
    let u = eval.unit_integrals_range(&path, n - 1, n)?;
    Ok(-p.alpha * p.gamma * u.values[0])
}

/// `phi` for several `gamma` values with a shared excursion pool.
pub fn potential_phi_multi(path: &LatticePath, mc: &NestedMc, gammas: &[f64], nodes: &mut Vec<Node>) -> Vec<f64> {
    let alpha = mc.params().alpha;
    quadrature_nodes(path, path.end() - 1.0, path.end(), nodes);
    let mut acc = vec![0.0; gammas.len()];
    let mut buf = vec![0.0; gammas.len()];
    for nd in nodes.iter() {
        mc.v_node_multi(path, nd.s, nd.sub, gammas, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += nd.weight * b;
        }
    }
    acc.iter().zip(gammas).map(|(a, g)| -alpha * g * a).collect()
}
