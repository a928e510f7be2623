//! Small statistics helpers shared by the estimators.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return MeanSe { mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    MeanSe { mean, stderr: (var / n).sqrt() }
}

/// `log(mean(exp(x_i)))` with a delta-method standard error, computed
/// after shifting by the maximum so that nothing underflows to 0/0.
pub fn log_mean_exp(log_w: &[f64]) -> MeanSe {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return MeanSe { mean: m, stderr: f64::NAN };
    }
    let scaled: Vec<f64> = log_w.iter().map(|x| (x - m).exp()).collect();
    let s = mean_se(&scaled);
    MeanSe { mean: m + s.mean.ln(), stderr: s.stderr / s.mean }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Integrated autocorrelation time `1 + 2 sum_k rho_k`, with the sum cut by
/// Geyer's initial positive sequence rule.
pub fn integrated_autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let acf = |k: usize| -> f64 {
        (0..n - k).map(|i| (xs[i] - mean) * (xs[i + k] - mean)).sum::<f64>() / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = acf(2 * k) + acf(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    tau.max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit. Adjacent bins are pooled until each expected
/// count reaches `min_expected`; the residual probability mass outside the
/// listed bins is its own bin.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() {
        return Err(Error::invalid("observed and expected bins differ in length"));
    }
    let n: u64 = observed.iter().sum();
    let n_f = n as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        cur.0 += o as f64;
        cur.1 += p * n_f;
        if cur.1 >= min_expected {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    let rest = (1.0 - probs.iter().sum::<f64>()).max(0.0) * n_f;
    cur.1 += rest;
    if cur.1 > 0.0 || cur.0 > 0.0 {
        match bins.last_mut() {
            Some(last) if cur.1 < min_expected => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            _ => bins.push(cur),
        }
    }
    if bins.len() < 2 {
        return Err(Error::invalid("too few bins for a chi-square test"));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}
