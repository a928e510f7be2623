//! Experiment configuration: TOML with one section per concern.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gibbs::{EvaluatorSpec, ProposalConfig, SurvivalMethod, VMethod};
use crate::lattice::ModelParams;
use crate::transfer::{SeriesConfig, Symmetry, DEFAULT_MAX_TRUNCATED_MASS};
use crate::trap::TruncationPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Survival,
    Gibbs,
    Rpf,
    #[serde(alias = "sigma-curve")]
    SigmaCurve,
    #[serde(alias = "var-scan")]
    VarScan,
    #[serde(alias = "lyapunov-compare")]
    LyapunovCompare,
    Selftest,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Survival,
        ExperimentKind::Gibbs,
        ExperimentKind::Rpf,
        ExperimentKind::SigmaCurve,
        ExperimentKind::VarScan,
        ExperimentKind::LyapunovCompare,
        ExperimentKind::Selftest,
    ];

    /// Name on the command line.
    pub fn command(self) -> &'static str {
        match self {
            ExperimentKind::Survival => "survival",
            ExperimentKind::Gibbs => "gibbs",
            ExperimentKind::Rpf => "rpf",
            ExperimentKind::SigmaCurve => "sigma-curve",
            ExperimentKind::VarScan => "var-scan",
            ExperimentKind::LyapunovCompare => "lyapunov-compare",
            ExperimentKind::Selftest => "selftest",
        }
    }

    pub fn from_command(name: &str) -> Result<ExperimentKind> {
        Self::ALL
            .into_iter()
            .find(|k| k.command() == name || k.snake() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment id '{name}'")))
    }

    fn snake(self) -> &'static str {
        match self {
            ExperimentKind::SigmaCurve => "sigma_curve",
            ExperimentKind::VarScan => "var_scan",
            ExperimentKind::LyapunovCompare => "lyapunov_compare",
            k => k.command(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub model: ModelParams,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub alphabet: AlphabetSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub samples: SampleSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub method: VMethod,
    /// Step of the deterministic evaluators.
    pub dt: f64,
    pub n_inner: usize,
    pub tail_tol: f64,
    /// Fixed truncation horizon; calibrated from `tail_tol` when absent.
    pub horizon: Option<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection { method: VMethod::Auto, dt: 0.1, n_inner: 8, tail_tol: 0.01, horizon: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphabetSection {
    pub max_jumps: usize,
    pub bins: usize,
    pub memory: usize,
    pub symmetry: Symmetry,
    pub max_truncated_mass: f64,
}

impl Default for AlphabetSection {
    fn default() -> Self {
        AlphabetSection {
            max_jumps: 2,
            bins: 1,
            memory: 3,
            symmetry: Symmetry::Hyperoctahedral,
            max_truncated_mass: DEFAULT_MAX_TRUNCATED_MASS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub n_paths: usize,
    pub importance: bool,
    pub n_steps: usize,
    pub warmup: usize,
    pub thin: Option<usize>,
    pub max_window: usize,
    pub n_pairs: usize,
    /// Random centred test functions for the contraction check.
    pub n_functions: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            n_paths: 400,
            importance: false,
            n_steps: 20000,
            warmup: 2000,
            thin: None,
            max_window: 4,
            n_pairs: 100,
            n_functions: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub k_max: usize,
    pub series_tol: f64,
    /// Suffix length of the kernel check; 0 skips it.
    pub kernel_k: usize,
    pub renewal_step: f64,
    pub write_triplets: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: 1e-12,
            max_iter: 100_000,
            k_max: 10_000,
            series_tol: 1e-10,
            kernel_k: 1,
            renewal_step: 0.1,
            write_triplets: false,
        }
    }
}

/// Pass/fail thresholds reported alongside the numbers. These are
/// calibration choices, not derived constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Relative gap between `-log lambda` and the Monte Carlo slope.
    pub lyapunov_rel: f64,
    pub slope_abs: f64,
    /// `sigma^2` at the smallest positive `gamma` against `gamma = 0`.
    pub sigma_rel: f64,
    /// Endpoint variance per unit time between `t` and `2t`.
    pub variance_ratio: f64,
    pub sqrt_rel: f64,
    pub r2_linear: f64,
    pub r2_sqrt: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            lyapunov_rel: 0.2,
            slope_abs: 0.4,
            sigma_rel: 0.1,
            variance_ratio: 0.15,
            sqrt_rel: 0.15,
            r2_linear: 0.99,
            r2_sqrt: 0.98,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Small built-in instance of each experiment.
    pub fn preset(kind: ExperimentKind) -> ExperimentConfig {
        let model = |d| ModelParams { d, kappa: 1.0, rho: 1.0, gamma: 1.0, alpha: 1.0 };
        let mut cfg = ExperimentConfig {
            experiment: kind,
            seed: 1,
            model: model(3),
            policy: PolicySection::default(),
            alphabet: AlphabetSection::default(),
            grids: GridSection::default(),
            samples: SampleSection::default(),
            solver: SolverSection::default(),
            thresholds: Thresholds::default(),
        };
        match kind {
            ExperimentKind::Survival => {
                cfg.grids.t = vec![2.0, 4.0, 6.0, 8.0];
                cfg.samples.n_paths = 200;
            }
            ExperimentKind::Gibbs => {
                cfg.model = model(1);
                cfg.grids.t = vec![4.0, 8.0];
                cfg.samples.n_steps = 3000;
                cfg.samples.warmup = 500;
                cfg.samples.thin = Some(10);
            }
            ExperimentKind::Rpf | ExperimentKind::SigmaCurve => {
                cfg.model = model(5);
                cfg.alphabet.max_jumps = 1;
                cfg.alphabet.memory = 2;
                cfg.alphabet.max_truncated_mass = 1.0;
                cfg.grids.gamma = vec![0.0, 0.05, 0.2];
            }
            ExperimentKind::VarScan => {
                cfg.grids.n = vec![2, 4, 8, 16];
                cfg.solver.renewal_step = 0.25;
            }
            ExperimentKind::LyapunovCompare => {
                cfg.model = model(5);
                cfg.alphabet.max_jumps = 1;
                cfg.alphabet.memory = 2;
                cfg.alphabet.max_truncated_mass = 1.0;
                cfg.grids.t = vec![4.0, 6.0, 8.0, 10.0];
                cfg.grids.gamma = vec![0.5, 1.0];
                cfg.samples.n_paths = 100;
                cfg.thresholds.lyapunov_rel = 0.5;
            }
            ExperimentKind::Selftest => {}
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Err(e) = self.model.validate() {
            return bad(e.to_string());
        }
        let p = &self.policy;
        if !(p.dt > 0.0) || p.n_inner == 0 || !(p.tail_tol > 0.0) || p.horizon.is_some_and(|h| !(h > 0.0)) {
            return bad(format!("bad [policy] {p:?}"));
        }
        let a = &self.alphabet;
        if a.bins == 0 || a.memory == 0 || !(a.max_truncated_mass > 0.0) {
            return bad(format!("bad [alphabet] {a:?}"));
        }
        let g = &self.grids;
        if g.t.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return bad("t grid must be positive".into());
        }
        if g.gamma.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return bad("gamma grid must be non-negative".into());
        }
        if g.n.contains(&0) {
            return bad("n grid must be positive".into());
        }
        let s = &self.samples;
        if s.n_paths < 2 || s.n_pairs < 100 || s.max_window == 0 || s.thin == Some(0) {
            return bad(format!("bad [samples] {s:?}"));
        }
        let v = &self.solver;
        if !(v.tol > 0.0) || v.max_iter == 0 || v.k_max == 0 || !(v.series_tol > 0.0) || !(v.renewal_step > 0.0) {
            return bad(format!("bad [solver] {v:?}"));
        }
        let need = |grid: bool, name: &str| if grid { Ok(()) } else { bad(format!("{} needs a non-empty {name} grid", self.experiment.command())) };
        match self.experiment {
            ExperimentKind::Survival | ExperimentKind::LyapunovCompare => need(!g.t.is_empty(), "t")?,
            ExperimentKind::Gibbs => {
                need(!g.t.is_empty(), "t")?;
                if g.t.iter().any(|t| t.fract() != 0.0) {
                    return bad("gibbs needs integer times".into());
                }
            }
            ExperimentKind::SigmaCurve => {
                need(!g.gamma.is_empty(), "gamma")?;
                if !g.gamma.contains(&0.0) {
                    return bad("sigma-curve needs gamma = 0 in its grid".into());
                }
            }
            ExperimentKind::VarScan => need(!g.n.is_empty(), "n")?,
            ExperimentKind::Rpf | ExperimentKind::Selftest => {}
        }
        if self.experiment == ExperimentKind::LyapunovCompare {
            if self.model.d < 3 {
                return bad("lyapunov-compare needs d >= 3".into());
            }
            if g.t.len() < 4 {
                return bad("lyapunov-compare needs at least 4 times for the slope".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn policy(&self) -> TruncationPolicy {
        let p = &self.policy;
        match p.horizon {
            Some(h) => TruncationPolicy { horizon: h, n_inner: p.n_inner, tail_tol: p.tail_tol },
            None => TruncationPolicy::calibrated(&self.model, p.n_inner, p.tail_tol),
        }
    }

    pub fn evaluator(&self) -> EvaluatorSpec {
        EvaluatorSpec { method: self.policy.method, dt: self.policy.dt, policy: self.policy() }
    }

    pub fn survival_method(&self) -> SurvivalMethod {
        if self.samples.importance {
            SurvivalMethod::Importance { theta: None }
        } else {
            SurvivalMethod::Plain
        }
    }

    pub fn proposal(&self) -> ProposalConfig {
        ProposalConfig {
            max_window: self.samples.max_window,
            warmup: self.samples.warmup,
            thin: self.samples.thin,
            ..ProposalConfig::default()
        }
    }

    pub fn series(&self) -> SeriesConfig {
        SeriesConfig { k_max: self.solver.k_max, tail_tol: self.solver.series_tol }
    }
}
