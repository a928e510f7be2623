use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{exponent_fit, FitModel, FitResult};
use crate::lattice::{sample_word, ModelParams, Word};
use crate::rng::stream;
use crate::trap::{potential_phi, RenewalEval, VEvaluator};

const KEY_SCAN_PAIR: u64 = 0x7662;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationRow {
    pub n: usize,
    /// Largest `|phi(xz) - phi(yz)|` over the sampled pairs.
    pub max_diff: f64,
    pub mean_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationScan {
    pub rows: Vec<VariationRow>,
    /// Log-log fit of `max_diff` against `n`; `None` when some row is 0.
    pub fit: Option<FitResult>,
}

/// For each `n`, pairs of words `xz`, `yz` with a common random suffix `z` of
/// `n` letters and independent random pasts `x`, `y` of `n` letters each.
/// The potential comes from the renewal evaluator with time step `step`, so
/// differences carry no sampling noise.
pub fn variation_scan(
    params: &ModelParams,
    n_list: &[usize],
    n_pairs: usize,
    step: f64,
    seed: u64,
) -> Result<VariationScan> {
    params.validate()?;
    if n_pairs < 100 {
        return Err(Error::invalid(format!("variation_scan needs n_pairs >= 100, got {n_pairs}")));
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("n_list must be non-empty with n >= 1"));
    }
    let eval = VEvaluator::Renewal(RenewalEval::new(params, step)?);

    let rows = n_list
        .iter()
        .map(|&n| {
            let diffs = (0..n_pairs)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, &[KEY_SCAN_PAIR, n as u64, i as u64]);
                    let z = sample_word(params, n, &mut rng);
                    let x = sample_word(params, n, &mut rng);
                    let y = sample_word(params, n, &mut rng);
                    let phi = |past: &Word| {
                        let w = Word::new(past.letters.iter().chain(&z.letters).cloned().collect());
                        potential_phi(&w, &eval)
                    };
                    Ok((phi(&x)? - phi(&y)?).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(VariationRow {
                n,
                max_diff: diffs.iter().copied().fold(0.0, f64::max),
                mean_diff: diffs.iter().sum::<f64>() / n_pairs as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = if rows.len() >= 4 && rows.iter().all(|r| r.max_diff > 0.0) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.max_diff)).collect();
        Some(exponent_fit(&pts, FitModel::Power)?)
    } else {
        None
    };
    Ok(VariationScan { rows, fit })
}

/// Values smoothed by a centred window of 3 (shrinking at the ends) are
/// non-increasing.
pub fn smoothed_non_increasing(values: &[f64]) -> bool {
    let n = values.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    smooth.windows(2).all(|w| w[1] <= w[0])
}
