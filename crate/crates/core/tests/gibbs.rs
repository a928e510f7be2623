use proptest::prelude::*;
use rand::Rng;
use trapwalk_core::gibbs::{
    annealed_survival, annealed_survival_grid, exponent_fit, find, mcmc_gibbs, path_observables, EvaluatorSpec,
    FitModel, GibbsChain, ProposalConfig, SurvivalMethod,
};
use trapwalk_core::lattice::{LatticePath, ModelParams};
use trapwalk_core::rng::stream;
use trapwalk_core::stats::chi_square_gof;

/// Law of `X_t` for a rate-`rate` walk in one dimension, indexed by
/// `k + offset`, computed by convolving the jump chain.
fn srw_law_1d(rate: f64, t: f64) -> (Vec<f64>, usize) {
    let lt = rate * t;
    let n_max = (lt + 12.0 * lt.sqrt() + 20.0) as usize;
    let off = n_max;
    let mut step = vec![0.0; 2 * n_max + 1];
    step[off] = 1.0;
    let mut law = vec![0.0; 2 * n_max + 1];
    let mut pois = (-lt).exp();
    for n in 0..=n_max {
        for (l, s) in law.iter_mut().zip(&step) {
            *l += pois * s;
        }
        let mut next = vec![0.0; step.len()];
        for i in 1..step.len() - 1 {
            next[i] = 0.5 * (step[i - 1] + step[i + 1]);
        }
        step = next;
        pois *= lt / (n + 1) as f64;
    }
    (law, off)
}

#[test]
fn stationary_walker_matches_expected_trap_range() {
    // With kappa = 0 and hard killing, -log Z / alpha is the mean number of
    // sites visited by one trap; for a skip-free walk P(max >= k) =
    // P(Y >= k) + P(Y > k).
    let t = 20.0;
    let (law, off) = srw_law_1d(1.0, t);
    let tail = |k: usize| law[off + k..].iter().sum::<f64>();
    let range: f64 = 1.0 + 2.0 * (1..=off).map(|k| tail(k) + tail(k + 1)).sum::<f64>();

    let p = ModelParams::new(1, 0.0, 1.0, 2000.0, 0.7).unwrap();
    let mut spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    spec.dt = 1e-3;
    let e = annealed_survival(&p, t, 2, &spec, SurvivalMethod::Plain, 1).unwrap();
    let got = -e.log_z / p.alpha;
    // Soft killing misses a visit with probability about rho / gamma.
    assert!((got - range).abs() / range < 2e-3, "{got} vs {range}");
    assert_eq!(e.stderr, 0.0);
}

#[test]
fn importance_and_plain_agree() {
    let p = ModelParams::new(1, 1.0, 1.0, 1.0, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let a = annealed_survival(&p, 12.0, 1500, &spec, SurvivalMethod::Plain, 3).unwrap();
    let b = annealed_survival(&p, 12.0, 1500, &spec, SurvivalMethod::Importance { theta: Some(0.4) }, 4).unwrap();
    let se = a.stderr.hypot(b.stderr);
    assert!((a.log_z - b.log_z).abs() < 3.0 * se, "{a:?} {b:?}");
    assert!(a.log_z <= 0.0 && b.log_z <= 0.0);
}

#[test]
fn doubling_paths_is_consistent() {
    let p = ModelParams::new(3, 1.0, 1.0, 1.0, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let a = annealed_survival(&p, 10.0, 300, &spec, SurvivalMethod::Plain, 5).unwrap();
    let b = annealed_survival(&p, 10.0, 600, &spec, SurvivalMethod::Plain, 6).unwrap();
    assert!((a.log_z - b.log_z).abs() < 3.0 * a.stderr.hypot(b.stderr), "{a:?} {b:?}");
}

#[test]
fn grid_prefix_estimates_match_single_runs() {
    let p = ModelParams::new(3, 1.0, 1.0, 0.5, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let grid = annealed_survival_grid(&p, &[4.0, 8.0], 400, &spec, SurvivalMethod::Plain, 7).unwrap();
    let single = annealed_survival(&p, 8.0, 400, &spec, SurvivalMethod::Plain, 8).unwrap();
    assert!(grid[0].log_z > grid[1].log_z);
    assert!((grid[1].log_z - single.log_z).abs() < 3.0 * grid[1].stderr.hypot(single.stderr));
}

#[test]
fn linear_growth_in_three_dimensions() {
    let p = ModelParams::new(3, 1.0, 1.0, 1.0, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let ts = [5.0, 10.0, 15.0, 20.0, 25.0];
    let es = annealed_survival_grid(&p, &ts, 150, &spec, SurvivalMethod::Plain, 9).unwrap();
    let pts: Vec<(f64, f64)> = es.iter().map(|e| (e.t, -e.log_z)).collect();
    assert!(exponent_fit(&pts, FitModel::Linear).unwrap().r2 > 0.99);
}

#[test]
fn free_chain_reproduces_walk_endpoint_law() {
    let p = ModelParams::new(1, 1.0, 1.0, 0.0, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let cfg = ProposalConfig { max_window: 3, warmup: 1000, ..Default::default() };
    let (samples, summary) = mcmc_gibbs(&p, 10, 40_000, cfg, &spec, 10).unwrap();
    assert_eq!(summary.acceptance_rate, 1.0);
    let (law, off) = srw_law_1d(1.0, 10.0);
    let k = 12;
    let mut counts = vec![0u64; 2 * k + 1];
    for s in &samples {
        let x = s.path.last().coord(0).clamp(-(k as i32), k as i32);
        counts[(x + k as i32) as usize] += 1;
    }
    let mut probs: Vec<f64> = (0..=2 * k).map(|i| law[off + i - k]).collect();
    probs[0] += law[..off - k].iter().sum::<f64>();
    probs[2 * k] += law[off + k + 1..].iter().sum::<f64>();
    let test = chi_square_gof(&counts, &probs, 5.0).unwrap();
    assert!(test.p_value > 0.01, "{test:?} from {} samples", samples.len());
}

#[test]
fn detailed_balance_on_two_state_weight() {
    // Weight 3 on the empty letter, 1 otherwise, for t = 1. The proposal
    // redraws the only letter, so the chain reduces to two states.
    let p = ModelParams::new(1, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cfg = ProposalConfig { max_window: 1, ..Default::default() };
    let mut chain = GibbsChain::with_log_weight(
        &p,
        1,
        cfg,
        11,
        Box::new(|l| if l[0].is_empty() { 3f64.ln() } else { 0.0 }),
    )
    .unwrap();
    let n = 200_000;
    let (mut n_a, mut n_ab, mut n_ba) = (0u64, 0u64, 0u64);
    let mut prev = chain.letters()[0].is_empty();
    for _ in 0..n {
        chain.step().unwrap();
        let cur = chain.letters()[0].is_empty();
        match (prev, cur) {
            (true, false) => n_ab += 1,
            (false, true) => n_ba += 1,
            _ => {}
        }
        n_a += prev as u64;
        prev = cur;
    }
    let mu_a = (-1f64).exp();
    let (w_a, w_b) = (3.0 * mu_a, 1.0 - mu_a);
    let pi_a = w_a / (w_a + w_b);
    let p_ab = (1.0 - mu_a) / 3.0;
    let p_ba = mu_a;
    let n_b = n as u64 - n_a;
    let check = |hits: u64, trials: u64, p: f64| {
        let phat = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "{phat} vs {p}");
    };
    check(n_ab, n_a, p_ab);
    check(n_ba, n_b, p_ba);
    // Balance of fluxes; the two counts differ by at most one on any path,
    // so the check that matters is against the exact stationary mass.
    let flux_ab = n_ab as f64 / n as f64;
    let exact_flux = pi_a * p_ab;
    let se = (exact_flux / n as f64).sqrt() * 3.0;
    assert!((flux_ab - exact_flux).abs() < 3.0 * se, "{flux_ab} vs {exact_flux}");
    assert!((pi_a * p_ab - (1.0 - pi_a) * p_ba).abs() < 1e-15);
}

#[test]
fn incremental_weight_does_not_drift() {
    for (d, gamma) in [(1usize, 2.0), (5, 1.0)] {
        let p = ModelParams::new(d, 1.0, 1.0, gamma, 1.0).unwrap();
        let spec = EvaluatorSpec::auto(&p, 4, 1e-2);
        let cfg = ProposalConfig { max_window: 3, warmup: 100, thin: Some(10), recheck_every: 100, ..Default::default() };
        let (_, summary) = mcmc_gibbs(&p, 12, 400, cfg, &spec, 12).unwrap();
        assert!(summary.max_drift < 1e-9, "d = {d}: {summary:?}");
        assert!(summary.acceptance_rate > 0.0);
    }
}

#[test]
fn free_chain_observables_match_walk_moments() {
    let p = ModelParams::new(2, 1.5, 1.0, 0.0, 1.0).unwrap();
    let spec = EvaluatorSpec::auto(&p, 8, 1e-3);
    let cfg = ProposalConfig { max_window: 4, warmup: 500, thin: Some(1), ..Default::default() };
    let t = 8;
    let (samples, _) = mcmc_gibbs(&p, t, 20_000, cfg, &spec, 13).unwrap();
    let paths: Vec<LatticePath> = samples.into_iter().map(|s| s.path).collect();
    let table = path_observables(&paths).unwrap();
    for a in 0..2 {
        let e = find(&table, &format!("endpoint[{a}]")).unwrap();
        assert!(e.mean.abs() < 3.0 * e.stderr, "{e:?}");
    }
    // E|X_t|^2 / (d t) = kappa / d.
    let v = find(&table, "rescaled_endpoint_var").unwrap();
    assert!((v.mean - 0.75).abs() < 3.0 * v.stderr, "{v:?}");
    let c1 = find(&table, "autocov[1]").unwrap();
    assert!(c1.mean.abs() < 3.0 * c1.stderr, "{c1:?}");
}

#[test]
fn observables_need_thirty_samples() {
    let paths = vec![LatticePath::constant(1, 0.0, 1.0, Default::default()); 29];
    assert!(path_observables(&paths).is_err());
}

#[test]
fn noisy_sqrt_fit_recovers_coefficient() {
    let mut rng = stream(14, &[]);
    let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
    let pts: Vec<(f64, f64)> =
        (1..=20).map(|i| (i as f64 * 10.0, 1.7 * (i as f64 * 10.0).sqrt() + rng.sample(normal))).collect();
    let f = exponent_fit(&pts, FitModel::Sqrt).unwrap();
    assert!((f.coefficient - 1.7).abs() < 2.0 * f.coefficient_stderr + 1e-12, "{f:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn survival_estimates_are_sub_probabilities(
        d in prop_oneof![Just(1usize), Just(3)],
        gamma in 0.0f64..3.0,
        t in 1u32..6,
        seed in any::<u64>(),
    ) {
        let p = ModelParams::new(d, 1.0, 1.0, gamma, 0.8).unwrap();
        let spec = EvaluatorSpec::auto(&p, 4, 1e-2);
        let e = annealed_survival(&p, t as f64, 8, &spec, SurvivalMethod::Plain, seed).unwrap();
        prop_assert!(e.log_z <= 0.0);
        prop_assert!(e.stderr >= 0.0);
        prop_assert!(e.log_z >= -p.alpha * gamma * t as f64 - 1e-12);
    }
}
