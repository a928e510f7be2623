use trapwalk_core::lattice::{sample_word, simulate_walk, LatticePath, ModelParams, PathBuilder, Site};
use trapwalk_core::rng::stream;
use trapwalk_core::trap::{
    coincidence_time, field_survival_weight, gibbs_weight, potential_phi, simulate_trap_field, v_hat, DensityEval,
    NestedMc, TruncationPolicy, VEvaluator,
};

fn params(d: usize, gamma: f64) -> ModelParams {
    ModelParams::new(d, 1.0, 1.0, gamma, 1.0).unwrap()
}

/// Discrete-time Feynman-Kac recursion for a lazy walk with step `dt`.
fn transfer_matrix_v(x: &LatticePath, s: f64, rho: f64, gamma: f64, dt: f64, half: i32) -> f64 {
    let n = (2 * half + 1) as usize;
    let steps = (s / dt).round() as usize;
    let mut u = vec![1.0; n];
    let mut next = vec![0.0; n];
    // u_k(y) = E_y[prod over the first k steps]; the j-th step of the
    // reversed trap looks at X_{s - j dt}.
    for k in 0..steps {
        let r = (steps - 1 - k) as f64 * dt;
        let xs = x.position(s).unwrap().coord(0);
        let target = x.position(s - r - 0.5 * dt).unwrap().coord(0) - xs;
        for i in 0..n {
            let y = i as i32 - half;
            let left = if i > 0 { u[i - 1] } else { 1.0 };
            let right = if i + 1 < n { u[i + 1] } else { 1.0 };
            let moved = (1.0 - rho * dt) * u[i] + 0.5 * rho * dt * (left + right);
            let kill = if y == target { (-gamma * dt).exp() } else { 1.0 };
            next[i] = kill * moved;
        }
        std::mem::swap(&mut u, &mut next);
    }
    u[half as usize]
}

#[test]
fn v_matches_discrete_transfer_oracle() {
    let p = params(1, 1.0);
    let s = 6.0;
    let x = LatticePath::constant(1, 0.0, s, Site::ORIGIN);
    let oracle_coarse = transfer_matrix_v(&x, s, 1.0, 1.0, 2e-3, 30);
    let oracle = transfer_matrix_v(&x, s, 1.0, 1.0, 1e-3, 30);
    // Richardson step for the O(dt) bias of the lazy-walk scheme.
    let oracle = 2.0 * oracle - oracle_coarse;

    let density = DensityEval::new(&p, 0.01).unwrap().v_at(&x, s).unwrap();
    assert!((density - oracle).abs() < 2e-4, "density {density} vs oracle {oracle}");

    let mut rng = stream(11, &[]);
    let pol = TruncationPolicy::new(f64::INFINITY, 40_000, 1e-3).unwrap();
    let mc = v_hat(&x, s, &p, &pol, &mut rng).unwrap();
    assert!((mc.estimate - oracle).abs() < 3.0 * mc.stderr + 1e-3, "{mc:?} vs {oracle}");
}

#[test]
fn v_on_moving_path_agrees_between_evaluators() {
    let p = params(1, 2.0);
    let mut rng = stream(12, &[]);
    let x = simulate_walk(1, 1.0, 5.0, Site::ORIGIN, &mut rng);
    let density = DensityEval::new(&p, 0.01).unwrap().v_at(&x, 4.3).unwrap();
    let pol = TruncationPolicy::new(f64::INFINITY, 40_000, 1e-3).unwrap();
    let mc = v_hat(&x, 4.3, &p, &pol, &mut rng).unwrap();
    assert!((mc.estimate - density).abs() < 3.0 * mc.stderr + 1e-4, "{mc:?} vs {density}");
}

#[test]
fn v_hat_edge_cases() {
    let mut rng = stream(13, &[]);
    let pol = TruncationPolicy::new(5.0, 10, 1e-3).unwrap();
    let x = simulate_walk(2, 1.0, 3.0, Site::ORIGIN, &mut rng);
    let v0 = v_hat(&x, 2.0, &params(2, 0.0), &pol, &mut rng).unwrap();
    assert_eq!((v0.estimate, v0.stderr), (1.0, 0.0));
    let cem = x.clone().with_cemetery_before(Some(1.0));
    assert_eq!(v_hat(&cem, 0.5, &params(2, 1.0), &pol, &mut rng).unwrap().estimate, 0.0);
}

#[test]
fn coincidence_matches_fine_grid() {
    let mut rng = stream(14, &[]);
    for _ in 0..5 {
        let a = simulate_walk(1, 5.0 / 3.0, 3.0, Site::ORIGIN, &mut rng);
        let b = simulate_walk(1, 5.0 / 3.0, 3.0, Site::from_coords(&[1]), &mut rng);
        let exact = coincidence_time(&a, &b, 0.0, 3.0);
        let h = 1e-6;
        let n = (3.0 / h) as usize;
        let grid = (0..n).filter(|&i| {
            let t = (i as f64 + 0.5) * h;
            a.position(t) == b.position(t)
        });
        let approx = grid.count() as f64 * h;
        assert!((exact - approx).abs() < 1e-5, "{exact} vs {approx}");
        assert!((0.0..=3.0).contains(&exact));
    }
}

#[test]
fn potential_bounds_and_monotonicity() {
    let mut rng = stream(15, &[]);
    let pol = TruncationPolicy::new(f64::INFINITY, 64, 1e-3).unwrap();
    let base = params(3, 1.0);
    let pools: Vec<VEvaluator> = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&g| VEvaluator::NestedMc(NestedMc::new(&base.with_gamma(g), &pol, 5.0, &mut stream(1, &[])).unwrap()))
        .collect();
    for _ in 0..20 {
        let w = sample_word(&base, 5, &mut rng);
        let phis: Vec<f64> = pools.iter().map(|e| potential_phi(&w, e).unwrap()).collect();
        assert_eq!(phis[0], 0.0);
        for (e, phi) in pools.iter().zip(&phis) {
            let ag = e.params().alpha * e.params().gamma;
            assert!(*phi <= 0.0 && *phi >= -ag, "{phi}");
        }
        // Same pool for every gamma: v is non-increasing in gamma, but
        // phi = -alpha gamma int v need only be non-increasing as well.
        assert!(phis.windows(2).all(|p| p[1] <= p[0] + 1e-15));
    }
}

#[test]
fn gibbs_weight_range_and_monotone_in_time() {
    let p = params(1, 1.5);
    let mut rng = stream(16, &[]);
    let eval = VEvaluator::Density(DensityEval::new(&p, 0.05).unwrap());
    for _ in 0..5 {
        let x = simulate_walk(1, 1.0, 6.0, Site::ORIGIN, &mut rng);
        let u = eval.unit_integrals(&x).unwrap();
        let lw = gibbs_weight(&x, &eval).unwrap().value;
        assert!(lw <= 0.0 && lw >= -1.5 * 6.0);
        assert!(u.values.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12));
    }
}

#[test]
fn density_and_nested_mc_agree_on_gibbs_weight() {
    let p = params(1, 1.0);
    let mut rng = stream(17, &[]);
    let x = simulate_walk(1, 1.0, 4.0, Site::ORIGIN, &mut rng);
    let de = VEvaluator::Density(DensityEval::new(&p, 0.02).unwrap());
    let pol = TruncationPolicy::new(f64::INFINITY, 4000, 1e-3).unwrap();
    let mc = VEvaluator::NestedMc(NestedMc::new(&p, &pol, 4.0, &mut rng).unwrap());
    let a = gibbs_weight(&x, &de).unwrap();
    let b = gibbs_weight(&x, &mc).unwrap();
    // Pool errors are correlated across nodes; allow a generous multiple.
    assert!((a.value - b.value).abs() < 6.0 * b.stderr * 8f64.sqrt() + 1e-3, "{a:?} vs {b:?}");
}

#[test]
fn poissonization_small_instance() {
    let p = params(1, 1.0);
    let t = 2.0;
    let mut rng = stream(18, &[]);
    let eval = VEvaluator::Density(DensityEval::new(&p, 0.01).unwrap());
    let paths: Vec<LatticePath> = (0..4).map(|_| simulate_walk(1, 1.0, t, Site::ORIGIN, &mut rng)).collect();
    let n_fields = 3000;
    let mut sums = vec![(0.0, 0.0); paths.len()];
    for _ in 0..n_fields {
        let f = simulate_trap_field(&p, 25, t, &mut rng);
        for (acc, x) in sums.iter_mut().zip(&paths) {
            let w = field_survival_weight(x, &f).unwrap();
            acc.0 += w;
            acc.1 += w * w;
        }
    }
    for ((s, s2), x) in sums.into_iter().zip(&paths) {
        let n = n_fields as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / (n - 1.0)).sqrt();
        let exact = gibbs_weight(x, &eval).unwrap().value.exp();
        assert!((mean - exact).abs() < 3.5 * se, "field {mean} +- {se} vs annealed {exact}");
    }
}

#[test]
fn field_occupation_is_stationary() {
    let p = params(1, 1.0);
    let mut rng = stream(19, &[]);
    let mut total = 0usize;
    let reps = 400;
    for _ in 0..reps {
        let f = simulate_trap_field(&p, 20, 3.0, &mut rng);
        total += f.occupation(Site::ORIGIN, 3.0);
    }
    let mean = total as f64 / reps as f64;
    let se = (1.0 / reps as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean}");
}

#[test]
fn builder_paths_have_expected_coincidence() {
    let mut b = PathBuilder::new(1, 0.0, Site::ORIGIN);
    b.jump(1.0, trapwalk_core::lattice::Direction::new(0, true));
    let a = b.finish(2.0);
    let c = LatticePath::constant(1, 0.0, 2.0, Site::from_coords(&[1]));
    assert!((coincidence_time(&a, &c, 0.0, 2.0) - 1.0).abs() < 1e-15);
}
