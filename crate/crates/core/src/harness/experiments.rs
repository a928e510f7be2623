use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{
    annealed_survival, annealed_survival_grid, exponent_fit, mcmc_gibbs_stream, observe, summarize_observables,
    EvaluatorSpec, FitModel, McmcSummary, PathObservables, SurvivalEstimate, SurvivalMethod, VMethod,
};
use crate::lattice::{simulate_walk, ModelParams, Site};
use crate::rng::stream;
use crate::stats::median;
use crate::transfer::{
    build_transfer, contraction_check, contraction_constants, displacement_sigma_squared, project_potential,
    quantize_alphabet_with, rpf_convergence_probe, rpf_solve, rpf_solve_from, verify_kernel_bounds, MemoryPotential,
    PotentialConfig, RpfData, StateSpace, Symmetry,
};
use crate::trap::cache::PhiCache;
use crate::trap::{DensityEval, RenewalEval, VEvaluator};

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::{Cell, OutDir, ResultRecord, Scalar};
use super::variation::{smoothed_non_increasing, variation_scan};

const KEY_GIBBS: u64 = 0x6762;
const KEY_TEST_FN: u64 = 0x6674;
const KEY_SELFTEST: u64 = 0x7374;

#[derive(Debug)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub files: Vec<PathBuf>,
    pub wall_time: f64,
}

/// Run on a dedicated pool of `workers` threads (all cores when `None`).
/// Shards never share generators and merges keep a fixed order, so the
/// output does not depend on the worker count.
pub fn run_experiment_with_workers(cfg: &ExperimentConfig, out: &Path, workers: Option<usize>) -> Result<RunOutput> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_experiment(cfg, out))
}

/// Dispatch to the configured experiment. Writes its tables, `summary.json`
/// and the resolved `config.toml` under `out`; wall time goes to `run.log`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut dir = OutDir::create(out)?;
    let mut rec = ResultRecord::new(cfg);
    match cfg.experiment {
        ExperimentKind::Survival => survival(cfg, &mut dir, &mut rec)?,
        ExperimentKind::Gibbs => gibbs(cfg, &mut dir, &mut rec)?,
        ExperimentKind::Rpf => rpf(cfg, &mut dir, &mut rec)?,
        ExperimentKind::SigmaCurve => sigma_curve(cfg, &mut dir, &mut rec)?,
        ExperimentKind::VarScan => var_scan(cfg, &mut dir, &mut rec)?,
        ExperimentKind::LyapunovCompare => lyapunov_compare(cfg, &mut dir, &mut rec)?,
        ExperimentKind::Selftest => selftest(cfg, &mut dir, &mut rec)?,
    }
    {
        use std::io::Write;
        let mut w = dir.file("config.toml")?;
        w.write_all(cfg.to_toml().as_bytes())?;
        w.flush()?;
    }
    dir.json("summary.json", &rec)?;
    let wall_time = start.elapsed().as_secs_f64();
    {
        use std::io::Write;
        let mut log = std::fs::File::create(dir.path().join("run.log"))?;
        writeln!(log, "experiment {}", cfg.experiment.command())?;
        writeln!(log, "wall_time_s {wall_time:.3}")?;
        writeln!(log, "workers {}", rayon::current_num_threads())?;
    }
    Ok(RunOutput { record: rec, files: dir.written().to_vec(), wall_time })
}

fn survival_rows(ests: &[SurvivalEstimate]) -> Vec<Vec<Cell>> {
    ests.iter()
        .map(|e| {
            vec![e.t.into(), e.log_z.into(), e.stderr.into(), e.n_paths.into(), e.method.into(), e.theta.into()]
        })
        .collect()
}

const SURVIVAL_HEADER: [&str; 6] = ["t", "log_z", "stderr", "n_paths", "method", "theta"];

fn survival(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let p = &cfg.model;
    let ests = annealed_survival_grid(p, &cfg.grids.t, cfg.samples.n_paths, &cfg.evaluator(), cfg.survival_method(), cfg.seed)?;
    dir.csv("survival.csv", &SURVIVAL_HEADER, survival_rows(&ests))?;
    for e in &ests {
        rec.push(Scalar::estimate(format!("log_z[t={}]", e.t), e.log_z, e.stderr));
    }
    if ests.len() < 4 || p.gamma == 0.0 {
        return Ok(());
    }
    let pts: Vec<(f64, f64)> = ests.iter().map(|e| (e.t, -e.log_z)).collect();
    let th = &cfg.thresholds;
    if p.d <= 2 {
        let fit = exponent_fit(&pts, FitModel::Sqrt)?;
        rec.push(Scalar::estimate("sqrt_coefficient", fit.coefficient, fit.coefficient_stderr));
        rec.push(Scalar::exact("sqrt_r2", fit.r2));
        if p.d == 1 {
            let target = p.alpha * (8.0 * p.rho / std::f64::consts::PI).sqrt();
            let rel = (fit.coefficient - target).abs() / target;
            rec.push(Scalar::exact("sqrt_target", target));
            rec.check(
                "sqrt_coefficient",
                rel <= th.sqrt_rel && fit.r2 > th.r2_sqrt,
                format!("c = {:.4}, target {target:.4}, rel {rel:.3}, R2 {:.4}", fit.coefficient, fit.r2),
            );
        }
    } else {
        let fit = exponent_fit(&pts, FitModel::Linear)?;
        rec.push(Scalar::estimate("linear_slope", fit.coefficient, fit.coefficient_stderr));
        rec.push(Scalar::exact("linear_r2", fit.r2));
        rec.check("linear_decay", fit.r2 > th.r2_linear, format!("slope {:.4}, R2 {:.5}", fit.coefficient, fit.r2));
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleLine<'a> {
    t: usize,
    index: usize,
    step: usize,
    log_weight: f64,
    endpoint: &'a [i32],
    max_norm: i32,
}

fn gibbs(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let p = &cfg.model;
    let spec = cfg.evaluator();
    let runs: Vec<(usize, Vec<(usize, f64, PathObservables)>, McmcSummary)> = cfg
        .grids
        .t
        .par_iter()
        .map(|&t| {
            let t = t as usize;
            let seed = stream(cfg.seed, &[KEY_GIBBS, t as u64]).random();
            let mut samples = Vec::new();
            let summary = mcmc_gibbs_stream(p, t, cfg.samples.n_steps, cfg.proposal(), &spec, seed, |s| {
                samples.push((s.step, s.log_weight, observe(&s.path)));
                Ok(())
            })?;
            Ok((t, samples, summary))
        })
        .collect::<Result<_>>()?;

    {
        use std::io::Write;
        let mut w = dir.file("samples.jsonl")?;
        for (t, samples, _) in &runs {
            for (i, (step, lw, o)) in samples.iter().enumerate() {
                let line = SampleLine {
                    t: *t,
                    index: i,
                    step: *step,
                    log_weight: *lw,
                    endpoint: &o.endpoint,
                    max_norm: o.max_norm,
                };
                serde_json::to_writer(&mut w, &line).map_err(|e| Error::Io(e.into()))?;
                writeln!(w)?;
            }
        }
        w.flush()?;
    }

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut variances = Vec::new();
    for (t, samples, summary) in &runs {
        let obs: Vec<PathObservables> = samples.iter().map(|s| s.2.clone()).collect();
        let table = summarize_observables(&obs)?;
        for o in &table {
            rows.push(vec![(*t).into(), o.name.clone().into(), o.mean.into(), o.stderr.into(), o.iat.into()]);
        }
        let norms: Vec<f64> = obs.iter().map(|o| o.max_norm as f64).collect();
        let med = median(&norms);
        medians.push((*t as f64, med));
        let var = table.iter().find(|o| o.name == "rescaled_endpoint_var").expect("observable table");
        variances.push((*t, var.mean, var.stderr));
        rec.push(Scalar::exact(format!("acceptance[t={t}]"), summary.acceptance_rate));
        rec.push(Scalar::exact(format!("median_max_norm[t={t}]"), med));
        rec.push(Scalar::estimate(format!("rescaled_endpoint_var[t={t}]"), var.mean, var.stderr));
    }
    dir.csv("observables.csv", &["t", "name", "mean", "stderr", "iat"], rows)?;
    let summaries: Vec<&McmcSummary> = runs.iter().map(|r| &r.2).collect();
    dir.json("mcmc.json", &summaries)?;

    if medians.len() >= 4 && medians.iter().all(|m| m.1 > 0.0) {
        let fit = exponent_fit(&medians, FitModel::Power)?;
        rec.push(Scalar::estimate("max_norm_exponent", fit.exponent, fit.exponent_stderr));
        if p.d == 1 && p.gamma > 0.0 {
            rec.check(
                "subdiffusive_max_norm",
                fit.exponent > 0.3 && fit.exponent < 0.5,
                format!("exponent {:.3}", fit.exponent),
            );
        }
    }
    for &(t, v, se) in &variances {
        if let Some(&(_, v2, se2)) = variances.iter().find(|x| x.0 == 2 * t) {
            let ratio = v2 / v;
            let se_ratio = ratio * ((se / v).powi(2) + (se2 / v2).powi(2)).sqrt();
            rec.push(Scalar::estimate(format!("endpoint_var_ratio[t={t}]"), ratio, se_ratio));
            rec.check(
                format!("endpoint_var_stable[t={t}]"),
                (ratio - 1.0).abs() <= cfg.thresholds.variance_ratio,
                format!("ratio {ratio:.4} +- {se_ratio:.4}"),
            );
        }
    }
    Ok(())
}

fn state_space(cfg: &ExperimentConfig) -> Result<Arc<StateSpace>> {
    let a = &cfg.alphabet;
    let alphabet = quantize_alphabet_with(&cfg.model, a.max_jumps, a.bins, a.max_truncated_mass)?;
    Ok(Arc::new(StateSpace::new(alphabet, a.memory, a.symmetry)?))
}

fn potentials(cfg: &ExperimentConfig, space: &Arc<StateSpace>, gammas: &[f64]) -> Result<Vec<MemoryPotential>> {
    let pc = PotentialConfig { policy: cfg.policy(), seed: cfg.seed, pool_len: None };
    let mut cache = PhiCache::from_env("phi")?;
    project_potential(space, &cfg.model, gammas, &pc, cache.as_mut())
}

fn solve(cfg: &ExperimentConfig, pot: &MemoryPotential) -> Result<RpfData> {
    rpf_solve(&build_transfer(pot), cfg.solver.tol, cfg.solver.max_iter)
}

fn rpf(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let space = state_space(cfg)?;
    let pot = potentials(cfg, &space, &[cfg.model.gamma])?.remove(0);
    let matrix = build_transfer(&pot);
    let rpf = rpf_solve(&matrix, cfg.solver.tol, cfg.solver.max_iter)?;
    let sum = rpf.summary();
    for (name, v) in [
        ("lambda", sum.lambda),
        ("minus_log_lambda", sum.minus_log_lambda),
        ("residual_h", sum.residual_h),
        ("residual_nu", sum.residual_nu),
        ("min_h", sum.min_h),
        ("max_h", sum.max_h),
        ("rows", sum.rows as f64),
        ("row_sum_error", rpf.row_sum_error()),
        ("stationarity_error", rpf.stationarity_error()),
    ] {
        rec.push(Scalar::exact(name, v));
    }
    rec.check(
        "residuals",
        sum.residual_h <= cfg.solver.tol && sum.residual_nu <= cfg.solver.tol,
        format!("{:.2e} {:.2e}", sum.residual_h, sum.residual_nu),
    );
    let rows = (0..rpf.rows())
        .map(|r| vec![r.into(), space.orbit_size(r).into(), rpf.h[r].into(), rpf.nu[r].into(), rpf.nu_h[r].into()])
        .collect();
    dir.csv("rpf.csv", &["row", "orbit_size", "h", "nu", "nu_h"], rows)?;
    if cfg.solver.write_triplets {
        let mut w = dir.file("matrix.txt")?;
        matrix.write_triplets(&mut w)?;
    }

    let cc = match contraction_constants(&pot) {
        Ok(cc) => cc,
        Err(Error::SeriesDivergence { .. }) => {
            rec.check("summable_variation", false, "extrapolated tail of var_n diverges (d <= 4)");
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    for (i, v) in cc.var.iter().enumerate() {
        rec.push(Scalar::exact(format!("var[{i}]"), *v));
    }
    rec.push(Scalar::exact("variation_tail", cc.tail));
    rec.push(Scalar::exact("M", cc.m_total));
    rec.push(Scalar::exact("c", cc.c));
    let k = cfg.solver.kernel_k;
    if k == 0 || k >= space.m {
        return Ok(());
    }
    match verify_kernel_bounds(&rpf, k, cc.c) {
        Ok(kb) => {
            rec.push(Scalar::exact("kernel_min", kb.min));
            rec.push(Scalar::exact("kernel_max", kb.max));
            rec.push(Scalar::exact("kernel_column_error", kb.column_error));
            rec.check("kernel_bounds", true, format!("{:.4e} <= K <= {:.4e}, c = {:.4e}", kb.min, kb.max, cc.c));
        }
        Err(Error::BoundViolation(msg)) => rec.check("kernel_bounds", false, msg),
        Err(e) => return Err(e),
    }
    let checks = (0..cfg.samples.n_functions)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, &[KEY_TEST_FN, i as u64]);
            let f: Vec<f64> = (0..rpf.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
            contraction_check(&rpf, k, cc.c, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = checks.iter().enumerate().map(|(i, c)| vec![i.into(), c.lhs.into(), c.rhs.into()]).collect();
    dir.csv("contraction.csv", &["function", "lhs", "rhs"], rows)?;
    let worst = checks.iter().map(|c| c.lhs - c.rhs).fold(f64::NEG_INFINITY, f64::max);
    rec.check(
        "contraction",
        checks.iter().all(|c| c.holds(1e-10)),
        format!("{} functions, max lhs - rhs = {worst:.3e}", checks.len()),
    );
    Ok(())
}

fn sigma_curve(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let space = state_space(cfg)?;
    let gammas = &cfg.grids.gamma;
    let pots = potentials(cfg, &space, gammas)?;
    let letter_var = space.alphabet.displacement_variance();
    rec.push(Scalar::exact("letter_variance", letter_var));
    let d = cfg.model.d;
    let mut curve = Vec::new();
    let mut rows = Vec::new();
    for (g, pot) in gammas.iter().zip(&pots) {
        let rpf = solve(cfg, pot)?;
        let s2 = displacement_sigma_squared(&rpf, cfg.series())?;
        let mean = s2.sigma2.iter().sum::<f64>() / d as f64;
        let mut row: Vec<Cell> = vec![(*g).into()];
        row.extend(s2.sigma2.iter().map(|x| Cell::from(*x)));
        row.extend([s2.tail_bound.into(), s2.lags.into(), rpf.lambda.into(), (-rpf.lambda.ln()).into()]);
        rows.push(row);
        rec.push(Scalar::exact(format!("sigma2[gamma={g}]"), mean));
        rec.push(Scalar::exact(format!("tail_bound[gamma={g}]"), s2.tail_bound));
        rec.push(Scalar::exact(format!("minus_log_lambda[gamma={g}]"), -rpf.lambda.ln()));
        curve.push((*g, mean));
    }
    let mut header = vec!["gamma".to_string()];
    header.extend((0..d).map(|a| format!("sigma2_{a}")));
    header.extend(["tail_bound", "lags", "lambda", "minus_log_lambda"].map(String::from));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    dir.csv("sigma_curve.csv", &header, rows)?;

    let zero = curve.iter().find(|c| c.0 == 0.0).expect("validated grid has gamma = 0").1;
    let rel0 = (zero - letter_var).abs() / letter_var;
    rec.check("sigma2_at_zero", rel0 <= 1e-12, format!("{zero:.15e} vs letter variance {letter_var:.15e}"));
    if let Some(&(g, s)) = curve.iter().filter(|c| c.0 > 0.0).min_by(|a, b| a.0.total_cmp(&b.0)) {
        let rel = (s - zero).abs() / zero;
        rec.check("small_gamma_limit", rel <= cfg.thresholds.sigma_rel, format!("gamma {g}: rel {rel:.4}"));
    }
    rec.check("positive", curve.iter().all(|c| c.1 > 0.0), "sigma2 > 0 on the grid");
    Ok(())
}

fn var_scan(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let p = &cfg.model;
    let scan = variation_scan(p, &cfg.grids.n, cfg.samples.n_pairs, cfg.solver.renewal_step, cfg.seed)?;
    let rows = scan.rows.iter().map(|r| vec![r.n.into(), r.max_diff.into(), r.mean_diff.into()]).collect();
    dir.csv("variation.csv", &["n", "max_diff", "mean_diff"], rows)?;
    for r in &scan.rows {
        rec.push(Scalar::exact(format!("max_diff[n={}]", r.n), r.max_diff));
    }
    let maxes: Vec<f64> = scan.rows.iter().map(|r| r.max_diff).collect();
    rec.check("smoothed_non_increasing", smoothed_non_increasing(&maxes), "window 3");
    if let Some(fit) = scan.fit {
        rec.push(Scalar::estimate("slope", fit.exponent, fit.exponent_stderr));
        let target = 1.0 - p.d as f64 / 2.0;
        rec.push(Scalar::exact("slope_target", target));
        if p.d >= 5 {
            rec.check(
                "slope",
                (fit.exponent - target).abs() <= cfg.thresholds.slope_abs,
                format!("{:.3} vs {target}", fit.exponent),
            );
        }
    }
    Ok(())
}

fn lyapunov_compare(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let p = &cfg.model;
    let mut gammas = vec![p.gamma];
    for g in &cfg.grids.gamma {
        if !gammas.contains(g) {
            gammas.push(*g);
        }
    }
    let space = state_space(cfg)?;
    let pots = potentials(cfg, &space, &gammas)?;
    let mut exps = Vec::new();
    for (g, pot) in gammas.iter().zip(&pots) {
        let rpf = solve(cfg, pot)?;
        exps.push((*g, rpf.lambda, -rpf.lambda.ln()));
    }
    let operator = exps[0].2;
    rec.push(Scalar::exact("minus_log_lambda", operator));

    let ests = annealed_survival_grid(p, &cfg.grids.t, cfg.samples.n_paths, &cfg.evaluator(), cfg.survival_method(), cfg.seed)?;
    dir.csv("survival.csv", &SURVIVAL_HEADER, survival_rows(&ests))?;
    let (slope, se, r2) = if p.gamma == 0.0 {
        (0.0, 0.0, 1.0)
    } else {
        let pts: Vec<(f64, f64)> = ests.iter().map(|e| (e.t, -e.log_z)).collect();
        let fit = exponent_fit(&pts, FitModel::Linear)?;
        (fit.coefficient, fit.coefficient_stderr, fit.r2)
    };
    rec.push(Scalar::estimate("mc_slope", slope, se));
    rec.push(Scalar::exact("mc_r2", r2));
    let rel = if operator == 0.0 && slope == 0.0 { 0.0 } else { (slope - operator).abs() / operator.abs() };
    rec.push(Scalar::estimate("relative_gap", rel, se / operator.abs().max(f64::MIN_POSITIVE)));
    rec.check(
        "agreement",
        rel <= cfg.thresholds.lyapunov_rel,
        format!("operator {operator:.4}, Monte Carlo {slope:.4} +- {se:.4}, rel {rel:.3}"),
    );
    rec.check("linear_decay", r2 > cfg.thresholds.r2_linear, format!("R2 {r2:.5}"));

    let rows = exps.iter().map(|e| vec![e.0.into(), e.1.into(), e.2.into()]).collect();
    dir.csv("lyapunov_gamma.csv", &["gamma", "lambda", "minus_log_lambda"], rows)?;
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    rec.check(
        "monotone_in_gamma",
        sorted.windows(2).all(|w| w[1].2 >= w[0].2),
        format!("{} grid points", sorted.len()),
    );
    Ok(())
}

/// Fast internal consistency checks that need no external oracle.
fn selftest(cfg: &ExperimentConfig, dir: &mut OutDir, rec: &mut ResultRecord) -> Result<()> {
    let seed = cfg.seed;
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut note = |rec: &mut ResultRecord, name: &str, ok: bool, detail: String| {
        rows.push(vec![name.into(), (if ok { "pass" } else { "fail" }).into(), detail.clone().into()]);
        rec.check(name, ok, detail);
    };

    // Three letters, memory one, random potential.
    let p1 = ModelParams { d: 1, kappa: 1.0, rho: 1.0, gamma: 1.0, alpha: 1.0 };
    let alphabet = quantize_alphabet_with(&p1, 1, 1, 1.0)?;
    let space = Arc::new(StateSpace::new(alphabet, 1, Symmetry::Trivial)?);
    let mut rng = stream(seed, &[KEY_SELFTEST]);
    let values: Vec<f64> = (0..space.rows() * space.letters()).map(|_| rng.random_range(-1.0..0.0)).collect();
    let pot = MemoryPotential::from_values(space.clone(), values)?;
    let matrix = build_transfer(&pot);
    let rpf = rpf_solve(&matrix, 1e-13, 10_000)?;
    note(
        rec,
        "rpf_invariants",
        rpf.row_sum_error() < 1e-10 && rpf.stationarity_error() < 1e-10,
        format!("row sums {:.2e}, stationarity {:.2e}", rpf.row_sum_error(), rpf.stationarity_error()),
    );
    let n = rpf.rows();
    let h0: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let nu0: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let other = rpf_solve_from(&matrix, h0, nu0, 1e-13, 10_000)?;
    let gap = rpf.h.iter().zip(&other.h).fold((rpf.lambda - other.lambda).abs(), |m, (a, b)| m.max((a - b).abs()));
    note(rec, "rpf_restart", gap < 1e-8, format!("max gap {gap:.2e}"));
    let f: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let probe = rpf_convergence_probe(&matrix, &rpf, &f, 200)?;
    let last = *probe.last().expect("200 steps");
    note(rec, "rpf_convergence", last < 1e-8, format!("{last:.2e} at n = 200"));

    // Renewal equation against the lattice ODE on one path.
    let x = simulate_walk(1, 1.0, 4.0, Site::ORIGIN, &mut rng);
    let de = VEvaluator::Density(DensityEval::new(&p1, 0.005)?).unit_integrals(&x)?;
    let re = VEvaluator::Renewal(RenewalEval::new(&p1, 0.02)?).unit_integrals(&x)?;
    let gap = de.values.iter().zip(&re.values).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
    note(rec, "renewal_vs_density", gap < 1e-3, format!("max unit gap {gap:.2e}"));

    // No killing, no decay.
    let free = p1.with_gamma(0.0);
    let spec = EvaluatorSpec { method: VMethod::Density, dt: 0.1, policy: cfg.policy() };
    let z = annealed_survival(&free, 3.0, 10, &spec, SurvivalMethod::Plain, seed)?;
    note(rec, "free_survival", z.log_z == 0.0, format!("log Z = {}", z.log_z));
    let scan = variation_scan(&free, &[2], 100, 0.25, seed)?;
    note(rec, "free_variation", scan.rows[0].max_diff == 0.0, format!("max diff {}", scan.rows[0].max_diff));

    dir.csv("selftest.csv", &["check", "result", "detail"], rows)?;
    if !rec.passed() {
        let failed: Vec<&str> = rec.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Error::BoundViolation(format!("selftest failed: {}", failed.join(", "))));
    }
    Ok(())
}
