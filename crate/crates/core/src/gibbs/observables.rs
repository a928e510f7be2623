use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticePath;
use crate::stats::{integrated_autocorr_time, mean_se};

pub const AUTOCOV_LAGS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableSummary {
    pub name: String,
    pub mean: f64,
    /// Standard error inflated by the integrated autocorrelation time.
    pub stderr: f64,
    pub iat: f64,
}

/// Per-sample scalar observables of a path on `[0, t]` with integer `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathObservables {
    pub endpoint: Vec<i32>,
    pub max_norm: i32,
    /// `(1/t) sum_k <dX_k, dX_{k+lag}> / d` over unit increments.
    pub autocov: [f64; AUTOCOV_LAGS],
    /// `|X_t|^2 / (d t)`.
    pub rescaled_endpoint_var: f64,
}

pub fn observe(path: &LatticePath) -> PathObservables {
    let d = path.dim();
    let t = path.duration().round() as usize;
    let x_t = path.last().sub(path.initial());
    let mut pts = Vec::with_capacity(t + 1);
    for k in 0..=t {
        let s = (path.start() + k as f64).min(path.end());
        pts.push(path.position(s).unwrap_or(path.initial()));
    }
    let inc: Vec<_> = pts.windows(2).map(|w| w[1].sub(w[0])).collect();
    let mut autocov = [0.0; AUTOCOV_LAGS];
    for (lag, c) in autocov.iter_mut().enumerate() {
        if inc.len() > lag {
            let s: i64 = (0..inc.len() - lag)
                .map(|k| (0..d).map(|a| (inc[k].coord(a) * inc[k + lag].coord(a)) as i64).sum::<i64>())
                .sum();
            *c = s as f64 / ((inc.len() - lag) * d) as f64;
        }
    }
    PathObservables {
        endpoint: (0..d).map(|a| x_t.coord(a)).collect(),
        max_norm: path.max_norm(),
        autocov,
        rescaled_endpoint_var: x_t.norm_sq() as f64 / (d as f64 * path.duration().max(f64::MIN_POSITIVE)),
    }
}

/// Mean, IAT-corrected standard error and IAT for every observable, in a
/// fixed order: `endpoint[a]`, `max_norm`, `autocov[lag]`,
/// `rescaled_endpoint_var`.
pub fn path_observables(samples: &[LatticePath]) -> Result<Vec<ObservableSummary>> {
    let obs: Vec<PathObservables> = samples.iter().map(observe).collect();
    summarize_observables(&obs)
}

/// [`path_observables`] from observables recorded on the fly.
pub fn summarize_observables(obs: &[PathObservables]) -> Result<Vec<ObservableSummary>> {
    if obs.len() < 30 {
        return Err(Error::invalid(format!("need at least 30 samples, got {}", obs.len())));
    }
    let d = obs[0].endpoint.len();
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for a in 0..d {
        series.push((format!("endpoint[{a}]"), obs.iter().map(|o| o.endpoint[a] as f64).collect()));
    }
    series.push(("max_norm".into(), obs.iter().map(|o| o.max_norm as f64).collect()));
    for lag in 0..AUTOCOV_LAGS {
        series.push((format!("autocov[{lag}]"), obs.iter().map(|o| o.autocov[lag]).collect()));
    }
    series.push(("rescaled_endpoint_var".into(), obs.iter().map(|o| o.rescaled_endpoint_var).collect()));
    Ok(series
        .into_iter()
        .map(|(name, xs)| {
            let iat = integrated_autocorr_time(&xs);
            let m = mean_se(&xs);
            ObservableSummary { name, mean: m.mean, stderr: m.stderr * iat.sqrt(), iat }
        })
        .collect())
}

pub fn find<'a>(table: &'a [ObservableSummary], name: &str) -> Option<&'a ObservableSummary> {
    table.iter().find(|o| o.name == name)
}
