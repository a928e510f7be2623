use crate::lattice::{LatticePath, Site};

/// Lebesgue measure of `{r in [t0, t1] : a(r) = b(r)}`. Times at which
/// either path is the cemetery contribute nothing.
pub fn coincidence_time(a: &LatticePath, b: &LatticePath, t0: f64, t1: f64) -> f64 {
    let lo = t0.max(a.defined_from()).max(b.defined_from());
    let hi = t1.min(a.end()).min(b.end());
    if hi <= lo {
        return 0.0;
    }
    let (at, ap) = (a.times(), a.positions());
    let (bt, bp) = (b.times(), b.positions());
    let mut i = a.segment_index(lo);
    let mut j = b.segment_index(lo);
    let mut r = lo;
    let mut total = 0.0;
    loop {
        let na = at.get(i).copied().unwrap_or(f64::INFINITY);
        let nb = bt.get(j).copied().unwrap_or(f64::INFINITY);
        let next = na.min(nb).min(hi);
        if ap[i] == bp[j] {
            total += next - r;
        }
        if next >= hi {
            break;
        }
        r = next;
        if na == next {
            i += 1;
        }
        if nb == next {
            j += 1;
        }
    }
    total
}

/// Trajectory of a walk started at the origin at relative time 0, used for
/// the time-reversed trap in the Feynman-Kac representation.
#[derive(Clone, Debug, Default)]
pub struct Excursion {
    pub times: Vec<f64>,
    pub positions: Vec<Site>,
}

impl Excursion {
    pub fn from_path(path: &LatticePath) -> Excursion {
        let start = path.start();
        let o = path.initial();
        Excursion {
            times: path.times().iter().map(|t| t - start).collect(),
            positions: path.positions().iter().map(|p| p.sub(o)).collect(),
        }
    }

    pub fn duration_hint(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// `int_0^{r_max} 1{ X_{s-r} - X_s = W_r } dr` for the excursion `W`,
/// stopping where the past of `X` becomes the cemetery.
pub fn reversed_overlap(x: &LatticePath, s: f64, w: &Excursion, r_max: f64) -> f64 {
    let r_end = r_max.min(s - x.defined_from());
    if r_end <= 0.0 {
        return 0.0;
    }
    let xt = x.times();
    let xp = x.positions();
    let mut i = x.segment_index(s);
    let base = xp[i];
    let mut rx = if i > 0 { s - xt[i - 1] } else { f64::INFINITY };
    let mut j = 0usize;
    let mut rw = w.times.first().copied().unwrap_or(f64::INFINITY);
    let mut r = 0.0;
    let mut total = 0.0;
    loop {
        let next = rx.min(rw).min(r_end);
        if xp[i] == base.add(w.positions[j]) {
            total += next - r;
        }
        if next >= r_end {
            break;
        }
        r = next;
        if rx == next {
            i -= 1;
            rx = if i > 0 { s - xt[i - 1] } else { f64::INFINITY };
        }
        if rw == next {
            j += 1;
            rw = w.times.get(j).copied().unwrap_or(f64::INFINITY);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{simulate_walk, Direction, PathBuilder};
    use crate::rng::stream;

    #[test]
    fn constant_paths() {
        let a = LatticePath::constant(1, 0.0, 2.0, Site::ORIGIN);
        let b = LatticePath::constant(1, 0.0, 2.0, Site::from_coords(&[1]));
        assert_eq!(coincidence_time(&a, &a, 0.0, 2.0), 2.0);
        assert_eq!(coincidence_time(&a, &b, 0.0, 2.0), 0.0);
        assert_eq!(coincidence_time(&a, &a, 0.5, 1.25), 0.75);
    }

    #[test]
    fn cemetery_contributes_nothing() {
        let a = LatticePath::constant(1, 0.0, 2.0, Site::ORIGIN).with_cemetery_before(Some(1.5));
        let b = LatticePath::constant(1, 0.0, 2.0, Site::ORIGIN);
        assert_eq!(coincidence_time(&a, &b, 0.0, 2.0), 0.5);
    }

    #[test]
    fn reversed_overlap_by_hand() {
        // X: 0 on [0,1), +1 on [1,3]; at s = 2.5 the reversed past is
        // +1 for r < 1.5 and 0 afterwards. W jumps to -1 at r = 1.
        let mut b = PathBuilder::new(1, 0.0, Site::ORIGIN);
        b.jump(1.0, Direction::new(0, true));
        let x = b.finish(3.0);
        let w = Excursion {
            times: vec![1.0],
            positions: vec![Site::ORIGIN, Site::from_coords(&[-1])],
        };
        let c = reversed_overlap(&x, 2.5, &w, 10.0);
        assert!((c - 2.0).abs() < 1e-12, "{c}");
        assert!((reversed_overlap(&x, 2.5, &w, 0.4) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn reversed_overlap_matches_forward_coincidence() {
        let mut rng = stream(3, &[]);
        for _ in 0..50 {
            let x = simulate_walk(1, 2.0, 6.0, Site::ORIGIN, &mut rng);
            let y = simulate_walk(1, 1.0, 4.0, Site::ORIGIN, &mut rng);
            let s = 5.0;
            let w = Excursion::from_path(&y);
            let direct = reversed_overlap(&x, s, &w, 4.0);
            // Reverse X in time and shift it so that it starts at the origin.
            let xs = x.position(s).unwrap();
            let mut b = PathBuilder::new(1, 0.0, Site::ORIGIN);
            let times = x.times();
            let pos = x.positions();
            let k = x.segment_index(s);
            for i in (0..k).rev() {
                b.jump_to(s - times[i], pos[i].sub(xs));
            }
            let rev = b.finish(s);
            let other = coincidence_time(&rev, &y, 0.0, 4.0);
            assert!((direct - other).abs() < 1e-12, "{direct} vs {other}");
        }
    }
}
