use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

use super::matrix::{apply_entries, TransferMatrix};
use super::symmetry::StateSpace;

/// Leading eigenvalue, eigenfunction and eigenmeasure of a transfer matrix,
/// with the h-transformed chain.
///
/// On a symmetry-reduced space `h` holds the (invariant) value per orbit and
/// `nu`, `nu_h` hold orbit masses. `pi_h` is stored per matrix entry.
#[derive(Clone, Debug)]
pub struct RpfData {
    pub lambda: f64,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    pub nu_h: Vec<f64>,
    pub pi_h: Vec<f64>,
    pub residual_h: f64,
    pub residual_nu: f64,
    pub iterations: usize,
    space: Arc<StateSpace>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RpfSummary {
    pub lambda: f64,
    pub minus_log_lambda: f64,
    pub residual_h: f64,
    pub residual_nu: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub iterations: usize,
    pub rows: usize,
}

pub fn rpf_solve(matrix: &TransferMatrix, tol: f64, max_iter: usize) -> Result<RpfData> {
    let n = matrix.dimension();
    let space = &matrix.space;
    let h0 = vec![1.0; n];
    let total = space.word_count();
    let nu0: Vec<f64> = (0..n).map(|r| space.orbit_size(r) / total).collect();
    rpf_solve_from(matrix, h0, nu0, tol, max_iter)
}

/// Power iteration on `L` and `L^T` from the given positive starts.
pub fn rpf_solve_from(
    matrix: &TransferMatrix,
    mut h: Vec<f64>,
    mut nu: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RpfData> {
    let n = matrix.dimension();
    if h.len() != n || nu.len() != n {
        return Err(Error::invalid("start vectors do not match the matrix"));
    }
    if h.iter().chain(&nu).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid("start vectors must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    normalize_sum(&mut nu);
    let mut lh = vec![0.0; n];
    let mut ltnu = vec![0.0; n];
    let mut lambda = 0.0;
    let mut residuals = (f64::INFINITY, f64::INFINITY);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        matrix.apply(&h, &mut lh);
        matrix.apply_transpose(&nu, &mut ltnu);
        lambda = dot(&nu, &lh) / dot(&nu, &h);
        let scale = dot(&nu, &h);
        residuals = (
            lh.iter().zip(&h).fold(0.0, |m: f64, (a, b)| m.max((a - lambda * b).abs())) / scale,
            ltnu.iter().zip(&nu).map(|(a, b)| (a - lambda * b).abs()).sum(),
        );
        if !lambda.is_finite() || !(lambda > 0.0) {
            return Err(Error::NonFinite { context: "eigenvalue estimate".into() });
        }
        if residuals.0 <= tol && residuals.1 <= tol {
            break;
        }
        let top = lh.iter().fold(0.0, |m: f64, x| m.max(*x));
        for (x, y) in h.iter_mut().zip(&lh) {
            *x = y / top;
        }
        nu.copy_from_slice(&ltnu);
        normalize_sum(&mut nu);
    }
    if residuals.0 > tol || residuals.1 > tol {
        return Err(Error::NoConvergence { iterations: it, residual: residuals.0.max(residuals.1), tol });
    }
    let scale = dot(&nu, &h);
    h.iter_mut().for_each(|x| *x /= scale);
    if h.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::BoundViolation("eigenfunction is not positive".into()));
    }
    let nu_h: Vec<f64> = nu.iter().zip(&h).map(|(a, b)| a * b).collect();
    let space = &matrix.space;
    let s = space.letters();
    let pi_h = matrix
        .values()
        .iter()
        .enumerate()
        .map(|(e, v)| v * h[space.target(e / s, e % s)] / (lambda * h[e / s]))
        .collect();
    Ok(RpfData {
        lambda,
        h,
        nu,
        nu_h,
        pi_h,
        residual_h: residuals.0,
        residual_nu: residuals.1,
        iterations: it,
        space: matrix.space.clone(),
    })
}

impl RpfData {
    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn rows(&self) -> usize {
        self.h.len()
    }

    /// `out = Pi_h f` for an invariant `f`.
    pub fn apply_pi(&self, f: &[f64], out: &mut [f64]) {
        apply_entries(&self.space, &self.pi_h, f, out);
    }

    /// `<f, nu_h>`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        dot(&self.nu_h, f)
    }

    /// `max_w |sum_w' Pi_h(w, w') - 1|`.
    pub fn row_sum_error(&self) -> f64 {
        let s = self.space.letters();
        self.pi_h.chunks(s).fold(0.0, |m: f64, row| m.max((row.iter().sum::<f64>() - 1.0).abs()))
    }

    /// `|nu_h Pi_h - nu_h|_1`.
    pub fn stationarity_error(&self) -> f64 {
        let space = &self.space;
        let s = space.letters();
        let mut out = vec![0.0; self.rows()];
        for (e, p) in self.pi_h.iter().enumerate() {
            out[space.target(e / s, e % s)] += self.nu_h[e / s] * p;
        }
        out.iter().zip(&self.nu_h).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn summary(&self) -> RpfSummary {
        RpfSummary {
            lambda: self.lambda,
            minus_log_lambda: -self.lambda.ln(),
            residual_h: self.residual_h,
            residual_nu: self.residual_nu,
            min_h: self.h.iter().copied().fold(f64::INFINITY, f64::min),
            max_h: self.h.iter().copied().fold(0.0, f64::max),
            iterations: self.iterations,
            rows: self.rows(),
        }
    }
}

/// `|lambda^{-n} L^n f - <nu, f> h|_inf` for `n = 1..=n_max`.
pub fn rpf_convergence_probe(matrix: &TransferMatrix, rpf: &RpfData, f: &[f64], n_max: usize) -> Result<Vec<f64>> {
    if f.len() != matrix.dimension() {
        return Err(Error::invalid("function does not match the matrix"));
    }
    let limit = dot(&rpf.nu, f);
    let mut cur = f.to_vec();
    let mut next = vec![0.0; cur.len()];
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        matrix.apply(&cur, &mut next);
        for (c, x) in cur.iter_mut().zip(&next) {
            *c = x / rpf.lambda;
        }
        out.push(cur.iter().zip(&rpf.h).fold(0.0, |m: f64, (c, h)| m.max((c - limit * h).abs())));
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_sum(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}
