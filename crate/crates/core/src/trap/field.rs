use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{poisson_count, simulate_walk, LatticePath, ModelParams, Site};
use crate::trap::coincidence::coincidence_time;

/// Explicit realization of the mobile trap field on a finite box.
#[derive(Clone, Debug)]
pub struct TrapField {
    pub params: ModelParams,
    pub box_half: i32,
    pub duration: f64,
    pub trap_paths: Vec<LatticePath>,
}

/// Box half-width that keeps boundary effects negligible for a walker
/// confined to `walker_range` over `duration`.
pub fn recommended_box(params: &ModelParams, walker_range: i32, duration: f64) -> i32 {
    walker_range + (6.0 * (params.rho * duration).sqrt()).ceil() as i32
}

pub fn simulate_trap_field<R: Rng + ?Sized>(
    params: &ModelParams,
    box_half: i32,
    duration: f64,
    rng: &mut R,
) -> TrapField {
    let d = params.d;
    let side = (2 * box_half + 1) as usize;
    let n_sites = side.pow(d as u32);
    let mut trap_paths = Vec::new();
    for idx in 0..n_sites {
        let count = poisson_count(params.alpha, rng);
        if count == 0 {
            continue;
        }
        let mut coords = [0i32; 8];
        let mut rem = idx;
        for c in coords.iter_mut().take(d) {
            *c = (rem % side) as i32 - box_half;
            rem /= side;
        }
        for _ in 0..count {
            trap_paths.push(simulate_walk(d, params.rho, duration, Site(coords), rng));
        }
    }
    TrapField { params: *params, box_half, duration, trap_paths }
}

impl TrapField {
    pub fn occupation(&self, site: Site, t: f64) -> usize {
        self.trap_paths.iter().filter(|p| p.position(t) == Some(site)).count()
    }

    /// `int_0^t xi(s, X_s) ds` for the walker path.
    pub fn occupation_integral(&self, path: &LatticePath) -> Result<f64> {
        if path.max_norm() > self.box_half {
            return Err(Error::OutsideBox { time: path.start() });
        }
        if path.end() > self.duration + 1e-12 {
            return Err(Error::invalid("walker path outlasts the trap field"));
        }
        let (lo, hi) = bounding_box(path);
        let mut total = 0.0;
        for trap in &self.trap_paths {
            let (tlo, thi) = bounding_box(trap);
            if (0..self.params.d).any(|a| thi.0[a] < lo.0[a] || tlo.0[a] > hi.0[a]) {
                continue;
            }
            total += coincidence_time(trap, path, path.start(), path.end());
        }
        Ok(total)
    }
}

/// `exp{-gamma int xi(s, X_s) ds}` with `xi` read off the realized field.
pub fn field_survival_weight(path: &LatticePath, field: &TrapField) -> Result<f64> {
    Ok((-field.params.gamma * field.occupation_integral(path)?).exp())
}

fn bounding_box(p: &LatticePath) -> (Site, Site) {
    let mut lo = p.initial();
    let mut hi = lo;
    for s in p.positions() {
        for a in 0..p.dim() {
            lo.0[a] = lo.0[a].min(s.0[a]);
            hi.0[a] = hi.0[a].max(s.0[a]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn empty_field_and_zero_gamma() {
        let p = ModelParams::new(1, 1.0, 1.0, 1.0, 1.0).unwrap();
        let field = TrapField { params: p, box_half: 5, duration: 2.0, trap_paths: vec![] };
        let mut rng = stream(1, &[]);
        let x = simulate_walk(1, 1.0, 2.0, Site::ORIGIN, &mut rng);
        assert_eq!(field_survival_weight(&x, &field).unwrap(), 1.0);
        let f = simulate_trap_field(&p.with_gamma(0.0), 5, 2.0, &mut rng);
        assert_eq!(field_survival_weight(&x, &f).unwrap(), 1.0);
    }

    #[test]
    fn walker_outside_box_is_an_error() {
        let p = ModelParams::new(1, 1.0, 1.0, 1.0, 1.0).unwrap();
        let field = TrapField { params: p, box_half: 1, duration: 2.0, trap_paths: vec![] };
        let x = LatticePath::constant(1, 0.0, 1.0, Site::from_coords(&[3]));
        assert!(matches!(field_survival_weight(&x, &field), Err(Error::OutsideBox { .. })));
    }
}
