//! Survival estimates, path-space sampling of the conditioned walk and the
//! fits used to read exponents off both.

mod fit;
mod mcmc;
mod observables;
mod survival;

pub use fit::{exponent_fit, FitModel, FitResult};
pub use mcmc::{mcmc_gibbs, mcmc_gibbs_stream, GibbsChain, GibbsChainState, McmcSummary, ProposalConfig};
pub use observables::{
    find, observe, path_observables, summarize_observables, ObservableSummary, PathObservables, AUTOCOV_LAGS,
};
pub use survival::{
    annealed_survival, annealed_survival_grid, simulate_tilted, EvaluatorSpec, SurvivalEstimate, SurvivalMethod,
    VMethod,
};
