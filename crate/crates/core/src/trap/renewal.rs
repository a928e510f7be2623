//! Deterministic `v(s, X)` from the renewal equation along the walker path.
//!
//! With the walker path fixed, `v` at time `s` is the Laplace functional of
//! the time one trap spends on the moving site `X_{s-r}`. Splitting at the
//! last coincidence gives a Volterra equation on the path itself:
//!
//! `G(s) = 1 - gamma int_{t0}^{s} p_{s-u}(X_u - X_s) G(u) du`,
//!
//! with `p` the trap's heat kernel and `t0` the start of the defined past.
//! `p` factorizes over the axes into one-dimensional kernels, which are
//! tabulated on the time grid by repeated convolution.

use crate::error::{Error, Result};
use crate::lattice::{LatticePath, ModelParams, Site};

#[derive(Clone, Debug)]
pub struct RenewalEval {
    params: ModelParams,
    h: f64,
}

/// `G` on the grid `t0 + i h`, `i = 0..=n`.
#[derive(Clone, Debug)]
pub struct RenewalSolution {
    pub t0: f64,
    pub h: f64,
    pub g: Vec<f64>,
    cells: Vec<Cell>,
}

#[derive(Clone, Debug)]
struct Piece {
    /// Offset from the cell start, as a fraction of `h`.
    from: f64,
    len: f64,
    site: Site,
}

#[derive(Clone, Debug)]
enum Cell {
    Flat(Site),
    Split(Vec<Piece>),
}

impl RenewalEval {
    /// `h` must divide the unit interval.
    pub fn new(params: &ModelParams, h: f64) -> Result<RenewalEval> {
        params.validate()?;
        let k = (1.0 / h).round();
        if !(h > 0.0) || k < 1.0 || (k * h - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("renewal step {h} must be 1/k")));
        }
        Ok(RenewalEval { params: *params, h: 1.0 / k })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn solve(&self, path: &LatticePath) -> Result<RenewalSolution> {
        let h = self.h;
        let t0 = path.defined_from();
        let span = (path.end() - t0) / h;
        let n = span.round();
        if (span - n).abs() > 1e-6 {
            return Err(Error::invalid(format!("past [{t0}, {}] is not a whole number of steps", path.end())));
        }
        let n = n as usize;
        let d = self.params.d;
        let cells = cells(path, t0, h, n);
        let grid_site = |i: usize| path.position((t0 + i as f64 * h).min(path.end())).expect("inside the past");
        let sites: Vec<Site> = (0..=n).map(grid_site).collect();
        let mut reach = 0;
        for a in 0..d {
            let lo = path.positions().iter().map(|s| s.coord(a)).min().unwrap_or(0);
            let hi = path.positions().iter().map(|s| s.coord(a)).max().unwrap_or(0);
            reach = reach.max((hi - lo) as usize);
        }
        let table = KernelTable::new(self.params.rho / d as f64, h, n, reach);
        let gamma = self.params.gamma;
        let mut g = vec![1.0; n + 1];
        if gamma > 0.0 {
            for i in 1..=n {
                let xi = sites[i];
                let mut rest = 0.0;
                let mut own = 0.0;
                for (j, cell) in cells[..i].iter().enumerate() {
                    let lag = i - j;
                    match cell {
                        Cell::Flat(x) => {
                            let dx = x.sub(xi);
                            let left = 0.5 * h * table.at(lag, &dx, d) * g[j];
                            let right = 0.5 * h * table.at(lag - 1, &dx, d);
                            rest += left;
                            if j + 1 == i {
                                own += right;
                            } else {
                                rest += right * g[j + 1];
                            }
                        }
                        Cell::Split(pieces) => {
                            let last = pieces.len() - 1;
                            for (p, pc) in pieces.iter().enumerate() {
                                let dx = pc.site.sub(xi);
                                let l1 = lag as f64 - pc.from;
                                let l2 = l1 - pc.len;
                                let k = 0.5 * pc.len * h * (table.at_frac(l1, &dx, d) + table.at_frac(l2, &dx, d));
                                match p {
                                    0 if last > 0 => rest += k * g[j],
                                    p if p == last && j + 1 == i => own += k,
                                    p if p == last => rest += k * g[j + 1],
                                    _ => rest += k * 0.5 * (g[j] + g[j + 1]),
                                }
                            }
                        }
                    }
                }
                g[i] = (1.0 - gamma * rest) / (1.0 + gamma * own);
            }
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "renewal solution".into() });
        }
        Ok(RenewalSolution { t0, h, g, cells })
    }
}

impl RenewalSolution {
    /// `int_a^b v ds` for grid-aligned `a < b`; the cemetery counts as 0.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let ia = (((a - self.t0) / self.h).round().max(0.0)) as usize;
        let ib = (((b - self.t0) / self.h).round().max(0.0) as usize).min(self.cells.len());
        let mut acc = 0.0;
        for j in ia..ib.max(ia) {
            acc += match &self.cells[j] {
                Cell::Flat(_) => 0.5 * self.h * (self.g[j] + self.g[j + 1]),
                Cell::Split(pieces) => {
                    let last = pieces.len() - 1;
                    pieces
                        .iter()
                        .enumerate()
                        .map(|(p, pc)| {
                            let gp = match p {
                                0 => self.g[j],
                                p if p == last => self.g[j + 1],
                                _ => 0.5 * (self.g[j] + self.g[j + 1]),
                            };
                            pc.len * self.h * gp
                        })
                        .sum()
                }
            };
        }
        acc
    }
}

fn cells(path: &LatticePath, t0: f64, h: f64, n: usize) -> Vec<Cell> {
    let times = path.times();
    let mut k = path.segment_index(t0);
    (0..n)
        .map(|j| {
            let a = t0 + j as f64 * h;
            let b = a + h;
            let first = path.positions()[k];
            let mut pieces = Vec::new();
            let mut u = a;
            let mut site = first;
            while k < times.len() && times[k] < b {
                if times[k] > u {
                    pieces.push(Piece { from: (u - a) / h, len: (times[k] - u) / h, site });
                    u = times[k];
                }
                k += 1;
                site = path.positions()[k];
            }
            if pieces.is_empty() {
                Cell::Flat(site)
            } else {
                pieces.push(Piece { from: (u - a) / h, len: (b - u) / h, site });
                Cell::Split(pieces)
            }
        })
        .collect()
}

/// One-axis kernel `e^{-a} I_k(a)` with `a = rate * j h`, for lags
/// `j = 0..=n` and `|k| <= reach`.
struct KernelTable {
    reach: usize,
    values: Vec<f64>,
}

impl KernelTable {
    fn new(rate: f64, h: f64, n: usize, reach: usize) -> KernelTable {
        let a_max = rate * h * n as f64;
        let width = reach + (10.0 * a_max.sqrt()) as usize + 20;
        let a1 = rate * h;
        // One step of the axis walk: e^{-a} I_k(a) by its power series.
        let step: Vec<f64> = (0..=12)
            .map(|k| {
                let mut term = (0..k).fold(1.0, |t, i| t * (a1 / 2.0) / (i + 1) as f64);
                let mut sum = 0.0;
                for m in 0..40 {
                    sum += term;
                    term *= (a1 / 2.0).powi(2) / ((m + 1) as f64 * (m + 1 + k) as f64);
                }
                sum * (-a1).exp()
            })
            .collect();
        let len = 2 * width + 1;
        let mut cur = vec![0.0; len];
        cur[width] = 1.0;
        let mut next = vec![0.0; len];
        let mut values = Vec::with_capacity((n + 1) * (reach + 1));
        for j in 0..=n {
            if j > 0 {
                for (x, out) in next.iter_mut().enumerate() {
                    let mut s = cur[x] * step[0];
                    for (k, w) in step.iter().enumerate().skip(1) {
                        let l = if x >= k { cur[x - k] } else { 0.0 };
                        let r = cur.get(x + k).copied().unwrap_or(0.0);
                        s += w * (l + r);
                    }
                    *out = s;
                }
                std::mem::swap(&mut cur, &mut next);
            }
            values.extend_from_slice(&cur[width..=width + reach]);
        }
        KernelTable { reach, values }
    }

    fn axis(&self, lag: usize, k: i32) -> f64 {
        self.values[lag * (self.reach + 1) + k.unsigned_abs() as usize]
    }

    fn at(&self, lag: usize, dx: &Site, d: usize) -> f64 {
        let mut p = 1.0;
        for a in 0..d {
            p *= self.axis(lag, dx.coord(a));
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// Linear interpolation between grid lags.
    fn at_frac(&self, lag: f64, dx: &Site, d: usize) -> f64 {
        let lag = lag.max(0.0);
        let lo = lag.floor() as usize;
        let w = lag - lo as f64;
        if w < 1e-12 {
            return self.at(lo, dx, d);
        }
        (1.0 - w) * self.at(lo, dx, d) + w * self.at(lo + 1, dx, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_table_matches_bessel_series() {
        // e^{-a} I_k(a) at a = 2 from the full series.
        let t = KernelTable::new(1.0, 0.05, 40, 4);
        for k in 0..=4 {
            let mut term = (0..k).fold(1.0, |t, i| t / (i + 1) as f64);
            let mut sum = 0.0;
            for m in 0..60 {
                sum += term;
                term *= 1.0 / ((m + 1) as f64 * (m + 1 + k) as f64);
            }
            let exact = sum * (-2.0f64).exp();
            assert!((t.axis(40, k as i32) - exact).abs() < 1e-13, "k = {k}");
        }
        let mass: f64 = t.axis(40, 0) + 2.0 * (1..=4).map(|k| t.axis(40, k)).sum::<f64>();
        assert!(mass < 1.0 && mass > 0.99);
    }
}
