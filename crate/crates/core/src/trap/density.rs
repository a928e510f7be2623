//! Deterministic evaluation of `v(s, X)` on a truncated box.
//!
//! With `q(s, y) = E_y[exp{-gamma int_0^s 1{Y_r = X_{s-r}} dr}]` we have
//! `v(s, X) = q(s, X_s)` and
//!
//! ```text
//! d/ds q = rho * Delta q - gamma * 1{y = X_s} q,    q = 1 when the past is empty,
//! ```
//!
//! where `Delta` is the generator of the simple random walk. `q` is pinned
//! to 1 outside the box. The ODE is integrated with RK4 on a grid aligned
//! to the jump times of `X`, together with `int q(s, X_s) ds`.

use crate::error::{Error, Result};
use crate::lattice::{LatticePath, ModelParams, Site, MAX_DIM};

#[derive(Clone, Debug)]
pub struct DensityEval {
    params: ModelParams,
    dt_max: f64,
    margin: Option<i32>,
}

#[derive(Clone, Debug)]
pub struct DensityGrid {
    dim: usize,
    lo: [i32; MAX_DIM],
    shape: [usize; MAX_DIM],
    n: usize,
    nbr: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    pub time: f64,
    q: Vec<f64>,
}

impl DensityGrid {
    pub fn new(dim: usize, lo: Site, hi: Site) -> DensityGrid {
        let mut shape = [1usize; MAX_DIM];
        for a in 0..dim {
            shape[a] = (hi.0[a] - lo.0[a] + 1).max(1) as usize;
        }
        let n: usize = shape[..dim].iter().product();
        let mut nbr = vec![n as u32; n * 2 * dim];
        let mut stride = 1usize;
        for a in 0..dim {
            for i in 0..n {
                let c = (i / stride) % shape[a];
                if c + 1 < shape[a] {
                    nbr[i * 2 * dim + 2 * a] = (i + stride) as u32;
                }
                if c > 0 {
                    nbr[i * 2 * dim + 2 * a + 1] = (i - stride) as u32;
                }
            }
            stride *= shape[a];
        }
        DensityGrid { dim, lo: lo.0, shape, n, nbr }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self, site: Site) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for a in 0..self.dim {
            let c = site.0[a] - self.lo[a];
            if c < 0 || c as usize >= self.shape[a] {
                return None;
            }
            idx += c as usize * stride;
            stride *= self.shape[a];
        }
        Some(idx)
    }
}

impl DensityState {
    pub fn fresh(grid: &DensityGrid, time: f64) -> DensityState {
        DensityState { time, q: vec![1.0; grid.n + 1] }
    }

    pub fn value(&self, grid: &DensityGrid, site: Site) -> f64 {
        grid.index(site).map_or(1.0, |i| self.q[i])
    }
}

impl DensityEval {
    pub fn new(params: &ModelParams, dt_max: f64) -> Result<DensityEval> {
        params.validate()?;
        if !(dt_max > 0.0) {
            return Err(Error::invalid("dt_max must be positive"));
        }
        Ok(DensityEval { params: *params, dt_max, margin: None })
    }

    pub fn with_margin(mut self, margin: i32) -> DensityEval {
        self.margin = Some(margin);
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn margin_for(&self, duration: f64) -> i32 {
        self.margin.unwrap_or_else(|| (6.0 * (self.params.rho * duration.max(0.0)).sqrt()).ceil() as i32 + 5)
    }

    /// Box around the range of `path`, padded by the margin for its duration.
    pub fn grid_for(&self, path: &LatticePath) -> DensityGrid {
        let m = self.margin_for(path.end() - path.defined_from());
        let d = self.params.d;
        let mut lo = path.initial();
        let mut hi = lo;
        for s in path.positions() {
            for a in 0..d {
                lo.0[a] = lo.0[a].min(s.0[a]);
                hi.0[a] = hi.0[a].max(s.0[a]);
            }
        }
        for a in 0..d {
            lo.0[a] -= m;
            hi.0[a] += m;
        }
        DensityGrid::new(d, lo, hi)
    }

    /// Integrate from `state.time` through each of the increasing `marks`;
    /// entry `i` of the result is `int q(s, X_s) ds` from the previous mark
    /// (or the initial time) to `marks[i]`. States at the marks are pushed
    /// to `checkpoints` when given.
    pub fn advance(
        &self,
        grid: &DensityGrid,
        path: &LatticePath,
        state: &mut DensityState,
        marks: &[f64],
        mut checkpoints: Option<&mut Vec<DensityState>>,
    ) -> Result<Vec<f64>> {
        let mut scratch = Scratch::new(grid.n + 1);
        let mut out = Vec::with_capacity(marks.len());
        let times = path.times();
        for &mark in marks {
            let mut acc = 0.0;
            while state.time < mark {
                let t = state.time;
                let k = path.segment_index(t);
                let next = times.get(k).copied().unwrap_or(f64::INFINITY).min(mark);
                let x = if t < path.defined_from() {
                    None
                } else {
                    Some(grid.index(path.positions()[k]).ok_or(Error::OutsideBox { time: t })?)
                };
                let steps = ((next - t) / self.dt_max).ceil().max(1.0) as usize;
                let dt = (next - t) / steps as f64;
                for _ in 0..steps {
                    acc += self.rk4(grid, &mut state.q, x, dt, &mut scratch);
                }
                state.time = next;
            }
            if !acc.is_finite() {
                return Err(Error::NonFinite { context: format!("density integration up to {mark}") });
            }
            out.push(acc);
            if let Some(cp) = checkpoints.as_deref_mut() {
                cp.push(state.clone());
            }
        }
        Ok(out)
    }

    /// `v(s, X)` by integrating from the start of the defined past.
    pub fn v_at(&self, path: &LatticePath, s: f64) -> Result<f64> {
        let Some(xs) = path.position(s) else { return Ok(0.0) };
        let grid = self.grid_for(path);
        let mut state = DensityState::fresh(&grid, path.defined_from());
        self.advance(&grid, path, &mut state, &[s], None)?;
        Ok(state.value(&grid, xs))
    }

    fn rk4(&self, grid: &DensityGrid, q: &mut [f64], x: Option<usize>, dt: f64, s: &mut Scratch) -> f64 {
        let g = if x.is_some() { self.params.gamma } else { 0.0 };
        let xi = x.unwrap_or(usize::MAX);
        let q_at = |v: &[f64]| if xi == usize::MAX { 0.0 } else { v[xi] };
        self.deriv(grid, q, xi, g, &mut s.k1);
        let i1 = q_at(q);
        axpy(&mut s.tmp, q, &s.k1, 0.5 * dt);
        self.deriv(grid, &s.tmp, xi, g, &mut s.k2);
        let i2 = q_at(&s.tmp);
        axpy(&mut s.tmp, q, &s.k2, 0.5 * dt);
        self.deriv(grid, &s.tmp, xi, g, &mut s.k3);
        let i3 = q_at(&s.tmp);
        axpy(&mut s.tmp, q, &s.k3, dt);
        self.deriv(grid, &s.tmp, xi, g, &mut s.k4);
        let i4 = q_at(&s.tmp);
        let n = grid.n;
        for i in 0..n {
            q[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
        dt / 6.0 * (i1 + 2.0 * i2 + 2.0 * i3 + i4)
    }

    fn deriv(&self, grid: &DensityGrid, q: &[f64], x: usize, gamma: f64, out: &mut [f64]) {
        let dd = 2 * grid.dim;
        let w = self.params.rho / dd as f64;
        for i in 0..grid.n {
            let nb = &grid.nbr[i * dd..(i + 1) * dd];
            let s: f64 = nb.iter().map(|&j| q[j as usize]).sum();
            out[i] = w * s - self.params.rho * q[i];
        }
        if x != usize::MAX {
            out[x] -= gamma * q[x];
        }
        out[grid.n] = 0.0;
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Scratch {
        Scratch { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![1.0; n] }
    }
}

fn axpy(out: &mut [f64], q: &[f64], k: &[f64], h: f64) {
    for ((o, &a), &b) in out.iter_mut().zip(q).zip(k) {
        *o = a + h * b;
    }
}
