//! Lattice paths on Z^d, the increment alphabet and the word/path codec.
//!
//! A letter records one unit of time of a nearest-neighbour walk: the jump
//! times inside `[0, 1]` and the unit vector used at each of them. A word is
//! a finite sequence of letters, most recent last. Decoding anchors the path
//! at `X_0 = 0` and reads the increments backwards, so a word of length `n`
//! lives on `[-n, 0]` with the cemetery before `-n`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn from_coords(coords: &[i32]) -> Site {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn step(self, dir: Direction) -> Site {
        let mut c = self.0;
        c[dir.axis()] += dir.sign();
        Site(c)
    }

    pub fn add(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a += b;
        }
        Site(c)
    }

    pub fn sub(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a -= b;
        }
        Site(c)
    }

    pub fn coord(&self, axis: usize) -> i32 {
        self.0[axis]
    }

    pub fn norm_inf(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }
}

/// One of the `2d` unit vectors. Index `k` is axis `k / 2`, positive when
/// `k` is even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction(u8);

impl Direction {
    pub fn new(axis: usize, positive: bool) -> Direction {
        debug_assert!(axis < MAX_DIM);
        Direction((2 * axis + usize::from(!positive)) as u8)
    }

    pub fn from_index(index: usize, dim: usize) -> Result<Direction> {
        if index >= 2 * dim {
            return Err(Error::invalid(format!("direction {index} out of range for d = {dim}")));
        }
        Ok(Direction(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn axis(self) -> usize {
        (self.0 / 2) as usize
    }

    pub fn is_positive(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn sign(self) -> i32 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }

    pub fn reversed(self) -> Direction {
        Direction(self.0 ^ 1)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.is_positive() { '+' } else { '-' };
        write!(f, "{s}{}", self.axis() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub dir: Direction,
}

/// Increment record of a walk over one unit of time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Letter {
    jumps: Vec<Jump>,
}

impl Letter {
    pub fn empty() -> Letter {
        Letter { jumps: Vec::new() }
    }

    pub fn new(jumps: Vec<Jump>) -> Result<Letter> {
        for (i, j) in jumps.iter().enumerate() {
            if !(0.0..=1.0).contains(&j.time) {
                return Err(Error::invalid(format!("jump time {} outside [0, 1]", j.time)));
            }
            if i > 0 && jumps[i - 1].time > j.time {
                return Err(Error::invalid("jump times must be non-decreasing"));
            }
        }
        Ok(Letter { jumps })
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn displacement(&self) -> Site {
        self.jumps.iter().fold(Site::ORIGIN, |s, j| s.step(j.dir))
    }

    /// Largest direction index used, if any.
    pub fn max_axis(&self) -> Option<usize> {
        self.jumps.iter().map(|j| j.dir.axis()).max()
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, j) in self.jumps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", j.time, j.dir)?;
        }
        Ok(())
    }
}

/// Finite word; index 0 is the oldest letter, the last entry is `x_{-1}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<Letter>,
}

impl Word {
    pub fn new(letters: Vec<Letter>) -> Word {
        Word { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Letter `x_{-i}` for `i >= 1`, or `None` past the start of the word.
    pub fn back(&self, i: usize) -> Option<&Letter> {
        if i == 0 || i > self.letters.len() {
            None
        } else {
            Some(&self.letters[self.letters.len() - i])
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.letters {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    /// Parse the one-letter-per-line format written by [`Word::to_text`].
    pub fn parse(text: &str, dim: usize) -> Result<Word> {
        let mut letters = Vec::new();
        for (lineno, line) in text.split_terminator('\n').enumerate() {
            let line = line.trim_end_matches('\r');
            if line.starts_with('#') {
                continue;
            }
            letters.push(parse_letter(line.trim(), dim).map_err(|msg| Error::Parse {
                line: lineno + 1,
                msg,
            })?);
        }
        Ok(Word { letters })
    }
}

fn parse_letter(line: &str, dim: usize) -> std::result::Result<Letter, String> {
    if line.is_empty() {
        return Ok(Letter::empty());
    }
    let mut jumps = Vec::new();
    for tok in line.split(',') {
        let (t, d) = tok.split_once(':').ok_or_else(|| format!("expected time:dir, got {tok:?}"))?;
        let time: f64 = t.trim().parse().map_err(|e| format!("bad time {t:?}: {e}"))?;
        let d = d.trim();
        let (positive, rest) = match d.as_bytes().first() {
            Some(b'+') => (true, &d[1..]),
            Some(b'-') => (false, &d[1..]),
            _ => return Err(format!("direction {d:?} must start with + or -")),
        };
        let axis: usize = rest.parse().map_err(|e| format!("bad direction {d:?}: {e}"))?;
        if axis == 0 || axis > dim {
            return Err(format!("direction {d:?} out of range for d = {dim}"));
        }
        jumps.push(Jump { time, dir: Direction::new(axis - 1, positive) });
    }
    Letter::new(jumps).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub kappa: f64,
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(d: usize, kappa: f64, rho: f64, gamma: f64, alpha: f64) -> Result<ModelParams> {
        let p = ModelParams { d, kappa, rho, gamma, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(Error::invalid(format!("d must lie in 1..={MAX_DIM}, got {}", self.d)));
        }
        let finite = [self.kappa, self.rho, self.gamma, self.alpha].iter().all(|x| x.is_finite());
        if !finite || self.kappa < 0.0 || self.rho <= 0.0 || self.gamma < 0.0 || self.alpha <= 0.0 {
            return Err(Error::invalid(format!(
                "need kappa >= 0, rho > 0, gamma >= 0, alpha > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_gamma(self, gamma: f64) -> ModelParams {
        ModelParams { gamma, ..self }
    }
}

/// Piecewise-constant right-continuous path on `[start, end]`.
///
/// `positions[0]` holds on `[start, times[0])`, `positions[i + 1]` from
/// `times[i]` on. Queries before `start` (or before `cemetery_before`) return
/// `None`, the cemetery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePath {
    dim: usize,
    start: f64,
    end: f64,
    times: Vec<f64>,
    positions: Vec<Site>,
    cemetery_before: Option<f64>,
}

impl LatticePath {
    pub fn constant(dim: usize, start: f64, end: f64, site: Site) -> LatticePath {
        LatticePath { dim, start, end, times: Vec::new(), positions: vec![site], cemetery_before: None }
    }

    /// Forward construction from consecutive letters, letter `k` covering
    /// `[start + k, start + k + 1]`. Jumps at the very start shift the
    /// starting site.
    pub fn from_letters(dim: usize, start: f64, origin: Site, letters: &[Letter]) -> LatticePath {
        let mut b = PathBuilder::new(dim, start, origin);
        for (k, l) in letters.iter().enumerate() {
            let base = start + k as f64;
            for j in l.jumps() {
                b.jump(base + j.time, j.dir);
            }
        }
        b.finish(start + letters.len() as f64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Site] {
        &self.positions
    }

    pub fn cemetery_before(&self) -> Option<f64> {
        self.cemetery_before
    }

    pub fn with_cemetery_before(mut self, t: Option<f64>) -> LatticePath {
        self.cemetery_before = t;
        self
    }

    /// First time at which the path is not the cemetery.
    pub fn defined_from(&self) -> f64 {
        self.cemetery_before.map_or(self.start, |c| c.max(self.start))
    }

    pub fn initial(&self) -> Site {
        self.positions[0]
    }

    pub fn last(&self) -> Site {
        *self.positions.last().expect("path has a starting site")
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    /// Index of the segment containing `t`, clamped to the path range.
    pub fn segment_index(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    pub fn position(&self, t: f64) -> Option<Site> {
        if t < self.defined_from() || t > self.end {
            return None;
        }
        Some(self.positions[self.segment_index(t)])
    }

    pub fn translate(&self, by: Site) -> LatticePath {
        LatticePath { positions: self.positions.iter().map(|p| p.add(by)).collect(), ..self.clone() }
    }

    pub fn shift_time(&self, by: f64) -> LatticePath {
        LatticePath {
            start: self.start + by,
            end: self.end + by,
            times: self.times.iter().map(|t| t + by).collect(),
            cemetery_before: self.cemetery_before.map(|c| c + by),
            ..self.clone()
        }
    }

    /// `sup_{s <= t} |X_s|_inf` over the whole path.
    pub fn max_norm(&self) -> i32 {
        self.positions.iter().map(Site::norm_inf).max().unwrap_or(0)
    }

    /// Split into unit-time letters starting at `start`. Requires an integer
    /// duration. Aggregated jumps come out as unit steps in axis order.
    pub fn encode(&self) -> Result<Word> {
        let n = self.duration().round();
        if (self.duration() - n).abs() > 1e-9 || n < 0.0 {
            return Err(Error::invalid(format!("cannot encode a path of duration {}", self.duration())));
        }
        let n = n as usize;
        let mut letters: Vec<Vec<Jump>> = vec![Vec::new(); n];
        for (i, &tau) in self.times.iter().enumerate() {
            let rel = tau - self.start;
            let mut k = rel.floor() as usize;
            let mut s = rel - k as f64;
            if s == 0.0 && k > 0 {
                k -= 1;
                s = 1.0;
            }
            let k = k.min(n.saturating_sub(1));
            let delta = self.positions[i + 1].sub(self.positions[i]);
            for axis in 0..self.dim {
                let c = delta.coord(axis);
                for _ in 0..c.unsigned_abs() {
                    letters[k].push(Jump { time: s, dir: Direction::new(axis, c > 0) });
                }
            }
        }
        let letters = letters.into_iter().map(Letter::new).collect::<Result<Vec<_>>>()?;
        Ok(Word { letters })
    }
}

/// Accumulates jumps in time order; simultaneous jumps merge into one
/// breakpoint, and merged jumps that cancel leave no breakpoint.
pub struct PathBuilder {
    dim: usize,
    start: f64,
    current: Site,
    times: Vec<f64>,
    positions: Vec<Site>,
}

impl PathBuilder {
    pub fn new(dim: usize, start: f64, origin: Site) -> PathBuilder {
        PathBuilder { dim, start, current: origin, times: Vec::new(), positions: vec![origin] }
    }

    pub fn jump(&mut self, time: f64, dir: Direction) {
        self.jump_to(time, self.current.step(dir));
    }

    pub fn jump_to(&mut self, time: f64, site: Site) {
        self.current = site;
        if time <= self.start {
            self.positions[0] = site;
            return;
        }
        if let Some(&last) = self.times.last() {
            debug_assert!(time >= last, "jumps must be added in time order");
            if time == last {
                let n = self.positions.len();
                if self.positions[n - 2] == site {
                    self.times.pop();
                    self.positions.pop();
                } else {
                    self.positions[n - 1] = site;
                }
                return;
            }
        }
        self.times.push(time);
        self.positions.push(site);
    }

    pub fn current(&self) -> Site {
        self.current
    }

    pub fn finish(self, end: f64) -> LatticePath {
        LatticePath {
            dim: self.dim,
            start: self.start,
            end,
            times: self.times,
            positions: self.positions,
            cemetery_before: None,
        }
    }
}

pub fn sample_letter<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Letter {
    let n = poisson_count(params.kappa, rng);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let jumps = times
        .into_iter()
        .map(|time| Jump { time, dir: Direction(rng.random_range(0..2 * params.d) as u8) })
        .collect();
    Letter { jumps }
}

pub fn sample_word<R: Rng + ?Sized>(params: &ModelParams, n: usize, rng: &mut R) -> Word {
    Word { letters: (0..n).map(|_| sample_letter(params, rng)).collect() }
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    let x: f64 = p.sample(rng);
    x as usize
}

/// Path on `[-n, 0]` with `X_0 = 0` and the cemetery before `-n`.
pub fn decode_word(word: &Word, dim: usize) -> LatticePath {
    let n = word.len() as f64;
    let forward = LatticePath::from_letters(dim, -n, Site::ORIGIN, &word.letters);
    let shift = Site::ORIGIN.sub(forward.last());
    forward.translate(shift).with_cemetery_before(Some(-n))
}

pub fn letter_distance(x: &Letter, y: &Letter) -> f64 {
    if x.len() != y.len() {
        return (x.len() as f64 - y.len() as f64).abs();
    }
    let s: f64 = x
        .jumps
        .iter()
        .zip(&y.jumps)
        .map(|(a, b)| (a.time - b.time).abs() + if a.dir != b.dir { 1.0 } else { 0.0 })
        .sum();
    s.min(1.0)
}

/// Product metric with cemetery padding; terms below `2^-60` are dropped.
pub fn word_distance(x: &Word, y: &Word) -> f64 {
    let n = x.len().max(y.len()).min(60);
    let mut total = 0.0;
    let mut w = 1.0;
    for i in 1..=n {
        w *= 0.5;
        let d = match (x.back(i), y.back(i)) {
            (Some(a), Some(b)) => letter_distance(a, b).min(1.0),
            (None, None) => 0.0,
            _ => 1.0,
        };
        total += w * d;
    }
    total
}

/// Continuous-time simple random walk on `[0, duration]` from `start`.
pub fn simulate_walk<R: Rng + ?Sized>(
    dim: usize,
    rate: f64,
    duration: f64,
    start: Site,
    rng: &mut R,
) -> LatticePath {
    simulate_walk_from(dim, rate, 0.0, duration, start, rng)
}

pub fn simulate_walk_from<R: Rng + ?Sized>(
    dim: usize,
    rate: f64,
    t0: f64,
    duration: f64,
    start: Site,
    rng: &mut R,
) -> LatticePath {
    let mut b = PathBuilder::new(dim, t0, start);
    if rate > 0.0 {
        let end = t0 + duration;
        let mut t = t0;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rate;
            if t > end {
                break;
            }
            b.jump(t, Direction(rng.random_range(0..2 * dim) as u8));
        }
    }
    b.finish(t0 + duration)
}
