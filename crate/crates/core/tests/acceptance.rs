//! One PASS/FAIL line per acceptance criterion. The Monte Carlo criteria run
//! in `f32`: the solvers are memory-bound and the tolerances are far above
//! single-precision rounding.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssvd::estimators::{per_table_svds, theta_from_projection, theta_from_top_singular_value};
use ssvd::linalg::{truncated_svd_with, SvdOptions};
use ssvd::model::{Family, MethodTag, ProblemSpec, WeightVector, Weighting};
use ssvd::simulate::{
    generate_tables, run_experiment, ExperimentPlan, ExperimentResult, Grid, NoiseFamily, NoiseSpec,
};
use ssvd::theory::*;

type Mc = f32;

const STACK_UNWEIGHTED: MethodTag = MethodTag { family: Family::StackSvd, weighting: Weighting::Unweighted };
const STACK_BINARY: MethodTag = MethodTag { family: Family::StackSvd, weighting: Weighting::Binary };
const STACK_WEIGHTED: MethodTag = MethodTag { family: Family::StackSvd, weighting: Weighting::Weighted };
const SVD_UNWEIGHTED: MethodTag = MethodTag { family: Family::SvdStack, weighting: Weighting::Unweighted };
const SVD_BINARY: MethodTag = MethodTag { family: Family::SvdStack, weighting: Weighting::Binary };
const SVD_WEIGHTED: MethodTag = MethodTag { family: Family::SvdStack, weighting: Weighting::Weighted };
const FOUR_METHODS: [MethodTag; 4] = [STACK_UNWEIGHTED, STACK_WEIGHTED, SVD_UNWEIGHTED, SVD_WEIGHTED];

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if !ok {
            self.pass = false;
            self.details.push(format!("[fail] {detail}"));
        } else {
            self.details.push(detail);
        }
    }
}

fn mc_svd() -> SvdOptions {
    SvdOptions { tol: 1e-5, ..SvdOptions::default() }
}

fn mc_plan(theta: &[f64], c: &[f64], d: usize, replicates: usize, seed: u64) -> ExperimentPlan<Mc> {
    let theta: Vec<Mc> = theta.iter().map(|&x| x as Mc).collect();
    let c: Vec<Mc> = c.iter().map(|&x| x as Mc).collect();
    let mut plan = ExperimentPlan::new(ProblemSpec::rank_one(&theta, &c).unwrap(), d);
    plan.replicates = replicates;
    plan.seed = seed;
    plan.svd = mc_svd();
    plan
}

fn mean_of(result: &ExperimentResult, grid: usize, method: MethodTag) -> (f64, f64) {
    let row = result.row(grid, method).expect("row present");
    (row.mean_overlap, row.theory.unwrap_or(f64::NAN))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn spec(theta: &[f64], c: &[f64]) -> ProblemSpec<f64> {
    ProblemSpec::rank_one(theta, c).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, theta_max: f64, c_range: (f64, f64)) -> ProblemSpec<f64> {
    let m = rng.random_range(1..=8);
    let theta: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..theta_max)).collect();
    let c: Vec<f64> = (0..m).map(|_| rng.random_range(c_range.0..=c_range.1)).collect();
    spec(&theta, &c)
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    let exact_beta = |t: f64, c: f64| (t.powi(4) - c) / (t.powi(4) + t * t);
    for (t, c, paper) in [(2.0, 1.0, 0.75), (5f64.sqrt(), 1.0, 0.8), (4.0, 38.4, 0.8)] {
        let b = beta_squared(t, c);
        out.check(
            close(b, paper, 1e-3) && close(b, exact_beta(t, c), 1e-9),
            format!("beta^2({t:.4}, {c}) = {b:.10}"),
        );
    }
    let svd = predict_unweighted_svdstack(&spec(&[2.0, 2.0], &[1.0, 1.0])).unwrap().overlap;
    out.check(close(svd, 0.8571, 1e-3) && close(svd, 6.0 / 7.0, 1e-9), format!("svd-stack 6/7: {svd:.10}"));
    let weighted = predict_weighted_svdstack(&spec(&[5f64.sqrt(), 4.0, 0.0], &[1.0, 38.4, 1.0]))
        .unwrap()
        .overlap;
    out.check(
        close(weighted, 0.8889, 1e-3) && close(weighted, 8.0 / 9.0, 1e-9),
        format!("weighted svd-stack 8/9: {weighted:.10}"),
    );
    let binary = predict_binary_stacksvd(&spec(&[5f64.sqrt(), 4.0], &[1.0, 38.4]), &SubsetRule::Auto)
        .unwrap()
        .overlap;
    let binary_exact = (21.0f64.powi(2) - 39.4) / (21.0 * 22.0);
    out.check(
        close(binary, 0.869, 1e-3) && close(binary, binary_exact, 1e-9),
        format!("binary stack-svd: {binary:.10}"),
    );
    let gamma = predict_weighted_stacksvd(&spec(&[0.95, 0.95, 0.0], &[1.0, 1.0, 2.0])).unwrap().overlap;
    // Two equal informative tables: (1 − x) Σθ⁴/c = 1 + θ² x.
    let a = 2.0 * 0.95f64.powi(4);
    let gamma_exact = (a - 1.0) / (a + 0.95f64.powi(2));
    out.check(
        close(gamma, 0.2485, 1e-3) && close(gamma, gamma_exact, 1e-9),
        format!("weighted stack-svd: {gamma:.10}"),
    );
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 10_000;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let s = random_spec(&mut rng, 6.0, (0.2, 5.0));
        let best = predict_weighted_stacksvd(&s).unwrap().overlap;
        let plain = predict_unweighted_stacksvd(&s).unwrap().overlap;
        let svd = predict_weighted_svdstack(&s).unwrap().overlap;
        let slack = best - plain.max(svd);
        worst = worst.min(slack);
        if slack < -1e-9 {
            violations += 1;
        }
    }
    out.check(
        violations == 0,
        format!("weighted stack-svd dominance: {violations}/{trials} violations, min slack {worst:.3e}"),
    );
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let s = random_spec(&mut rng, 3.0, (0.05, 1.0));
        let binary = predict_binary_stacksvd(&s, &SubsetRule::Auto).unwrap().overlap;
        let svd = predict_weighted_svdstack(&s).unwrap().overlap;
        worst = worst.min(binary - svd);
        if binary < svd - 1e-9 {
            violations += 1;
        }
    }
    out.check(
        violations == 0,
        format!("binary over weighted svd-stack (c <= 1): {violations}/{trials} violations, min slack {worst:.3e}"),
    );
    out
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 1000;
    let (mut e_opt, mut e_ones, mut e_subset) = (0.0f64, 0.0f64, 0.0f64);
    let general = |s: &ProblemSpec<f64>, w: &WeightVector<f64>| match eval_general_weighted_stacksvd(s, w) {
        Ok(spectrum) => spectrum.performance,
        Err(ssvd::Error::NoSecularRoot) => 0.0,
        Err(e) => panic!("{e}"),
    };
    for _ in 0..trials {
        let s = random_spec(&mut rng, 4.0, (0.2, 4.0));
        let m = s.m();
        let w_star = optimal_weights_stacksvd(&s).unwrap();
        e_opt = e_opt.max((general(&s, &w_star) - predict_weighted_stacksvd(&s).unwrap().overlap).abs());
        e_ones = e_ones.max((general(&s, &WeightVector::ones(m)) - predict_unweighted_stacksvd(&s).unwrap().overlap).abs());
        let mut subset: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        if subset.is_empty() {
            subset.push(rng.random_range(0..m));
        }
        let indicator = WeightVector::indicator(m, &subset).unwrap();
        let cor2 = predict_binary_stacksvd(&s, &SubsetRule::Explicit(subset)).unwrap().overlap;
        e_subset = e_subset.max((general(&s, &indicator) - cor2).abs());
    }
    out.check(e_opt <= 1e-9, format!("L(w*) vs root: max error {e_opt:.3e}"));
    out.check(e_ones <= 1e-9, format!("L(1) vs closed form: max error {e_ones:.3e}"));
    out.check(e_subset <= 1e-9, format!("L(1_S) vs binary formula: max error {e_subset:.3e}"));
    out
}

fn check_methods(out: &mut Outcome, label: &str, result: &ExperimentResult, grid: usize, methods: &[MethodTag], tol: f64) {
    for &m in methods {
        let (mean, theory) = mean_of(result, grid, m);
        out.check(close(mean, theory, tol), format!("{label} {m}: {mean:.4} vs {theory:.4}"));
    }
}

fn criterion_4() -> Outcome {
    let mut out = Outcome::new();
    for (k, theta) in [[1.2, 1.05], [2.0, 1.3]].iter().enumerate() {
        let mut plan = mc_plan(theta, &[1.0, 1.0], 2000, 100, 40 + k as u64);
        plan.methods = FOUR_METHODS.to_vec();
        let result = run_experiment(&plan).unwrap();
        check_methods(&mut out, &format!("theta {theta:?}"), &result, 2000, &FOUR_METHODS, 0.04);
    }
    let mut plan = mc_plan(&[0.98, 0.76], &[1.0, 1.0], 500, 100, 42);
    plan.grid = Grid::Dimension(vec![500, 4000]);
    plan.methods = vec![SVD_UNWEIGHTED, SVD_WEIGHTED];
    let result = run_experiment(&plan).unwrap();
    for m in [SVD_UNWEIGHTED, SVD_WEIGHTED] {
        let (small, theory) = mean_of(&result, 500, m);
        let (large, _) = mean_of(&result, 4000, m);
        out.check(
            small > theory && large > theory && large < small,
            format!("theta [0.98, 0.76] {m}: d=500 {small:.4}, d=4000 {large:.4}, theory {theory}"),
        );
    }
    out
}

fn criterion_5() -> Outcome {
    let mut out = Outcome::new();
    let mut plan = mc_plan(&[0.7; 10], &[1.0; 10], 2000, 50, 51);
    let below = [1, 2, 3, 4];
    let above = [7, 8, 9, 10];
    plan.grid = Grid::TableCount(below.iter().chain(&above).copied().collect());
    plan.methods = vec![STACK_UNWEIGHTED];
    let result = run_experiment(&plan).unwrap();
    for m in below {
        let (mean, _) = mean_of(&result, m, STACK_UNWEIGHTED);
        out.check(mean < 0.1, format!("(a) M={m}: {mean:.4} < 0.1"));
    }
    for m in above {
        let (mean, _) = mean_of(&result, m, STACK_UNWEIGHTED);
        out.check(mean > 0.3, format!("(a) M={m}: {mean:.4} > 0.3"));
    }

    let mut theta = vec![0.0; 12];
    theta[0] = 1.2;
    theta[1] = 1.2;
    let mut plan = mc_plan(&theta, &[1.0; 12], 2000, 50, 52);
    plan.grid = Grid::TableCount(vec![2, 12]);
    plan.methods = vec![STACK_UNWEIGHTED, STACK_WEIGHTED];
    let result = run_experiment(&plan).unwrap();
    let (plain12, _) = mean_of(&result, 12, STACK_UNWEIGHTED);
    let (weighted2, _) = mean_of(&result, 2, STACK_WEIGHTED);
    let (weighted12, _) = mean_of(&result, 12, STACK_WEIGHTED);
    out.check(plain12 < 0.1, format!("(b) unweighted M=12: {plain12:.4} < 0.1"));
    out.check(
        close(weighted12, weighted2, 0.05),
        format!("(b) weighted M=12 {weighted12:.4} vs M=2 {weighted2:.4}"),
    );

    let mut plan = mc_plan(&[0.95, 0.95, 0.0], &[1.0, 1.0, 2.0], 4000, 50, 53);
    plan.methods = vec![STACK_UNWEIGHTED, STACK_BINARY, STACK_WEIGHTED, SVD_UNWEIGHTED, SVD_BINARY, SVD_WEIGHTED];
    let result = run_experiment(&plan).unwrap();
    let (weighted, _) = mean_of(&result, 4000, STACK_WEIGHTED);
    out.check(close(weighted, 0.2485, 0.07), format!("(c) weighted stack-svd: {weighted:.4} vs 0.2485"));
    for m in [STACK_UNWEIGHTED, STACK_BINARY, SVD_UNWEIGHTED, SVD_BINARY, SVD_WEIGHTED] {
        let (mean, _) = mean_of(&result, 4000, m);
        out.check(mean < 0.1, format!("(c) {m}: {mean:.4} < 0.1"));
    }
    out
}

fn criterion_6() -> Outcome {
    let mut out = Outcome::new();
    let exact: f64 = theta_from_top_singular_value(6.25, 1.0, 1e-6).unwrap();
    out.check(close(exact, 2.0, 1e-12), format!("inversion of sigma^2 = 6.25, c = 1: {exact:.15}"));

    let targets = 9;
    let theta_t: Vec<f64> = (0..targets).map(|i| 0.2 + 0.8 * i as f64 / (targets - 1) as f64).collect();
    let c_t: Vec<f64> = (0..targets).map(|i| 1.0 + 0.5 * i as f64 / (targets - 1) as f64).collect();
    let theta: Vec<Mc> = std::iter::once(3.0).chain(theta_t.iter().copied()).map(|x| x as Mc).collect();
    let c: Vec<Mc> = std::iter::once(2.0).chain(c_t.iter().copied()).map(|x| x as Mc).collect();
    let s = ProblemSpec::rank_one(&theta, &c).unwrap();
    let d = 4000;
    let mut errors = Vec::new();
    for rep in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + rep);
        let (tables, _) = generate_tables(&s, d, &NoiseSpec::default(), &mut rng).unwrap();
        let c_hat = tables.aspect_ratios();
        let reference = truncated_svd_with(tables.table(0), 1, &mc_svd()).unwrap();
        let sigma = reference.values[0];
        let theta_ref = theta_from_top_singular_value(sigma * sigma, c_hat[0], 1e-6).unwrap();
        let beta_ref = beta_squared(theta_ref, c_hat[0]).sqrt();
        let v = reference.right.column(0).into_owned();
        for i in 1..tables.m() {
            let projection = (tables.table(i) * &v).norm_squared();
            let estimate = theta_from_projection(projection, c_hat[i], beta_ref).unwrap();
            errors.push((estimate as f64 - theta_t[i - 1]).abs());
        }
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errors[errors.len() / 2];
    out.check(median <= 0.15, format!("median |theta_hat - theta| over {} estimates: {median:.4}", errors.len()));
    out
}

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();
    let s = inadmissibility_instance::<f64>(0.5).unwrap();
    let m = s.m();
    let c_ok = (0..m).all(|i| s.c()[i] == (2 * i + 1) as f64 && s.theta()[(i, 0)] == 1.0);
    out.check(m == 31 && c_ok, format!("instance: M = {m}, theta = 1, c_i = 2i - 1: {c_ok}"));
    let gamma = predict_weighted_stacksvd(&s).unwrap().overlap;
    out.check(gamma >= 0.5, format!("weighted stack-svd: {gamma:.6} >= 0.5"));
    let mut nonzero = 0;
    for k in 1..=m {
        let report = predict_binary_stacksvd(&s, &SubsetRule::Explicit((0..k).collect())).unwrap();
        if report.diagnostics["margin"] != 0.0 {
            nonzero += 1;
        }
    }
    out.check(nonzero == 0, format!("prefix margins exactly zero: {} of {m}", m - nonzero));
    let t = detection_thresholds(&s).unwrap();
    let others = [t.svdstack.detectable, t.svdstack_weighted.detectable, t.stacksvd.detectable, t.stacksvd_binary_auto.detectable];
    out.check(
        t.stacksvd_weighted.detectable && others.iter().all(|&f| !f),
        format!("flags: weighted stack-svd {}, others {others:?}", t.stacksvd_weighted.detectable),
    );
    out
}

fn criterion_8() -> Outcome {
    let mut out = Outcome::new();
    let s = ProblemSpec::<Mc>::rank_one(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
    let reps = 100;
    let mut total = 0.0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + rep);
        let (tables, _) = generate_tables(&s, 2000, &NoiseSpec::default(), &mut rng).unwrap();
        let svds = per_table_svds(&tables, 1, &mc_svd()).unwrap();
        let inner = svds[0].right.column(0).dot(&svds[1].right.column(0)) as f64;
        total += inner * inner;
    }
    let mean = total / reps as f64;
    out.check(close(mean, 0.5625, 0.05), format!("mean |<v1, v2>|^2 = {mean:.4} vs 0.5625"));
    out
}

fn criterion_9() -> Outcome {
    let mut out = Outcome::new();
    let mut plan = mc_plan(&[1.7, 1.6, 1.5], &[1.0, 1.0, 1.0], 2000, 100, 90);
    plan.methods = FOUR_METHODS.to_vec();
    plan.noise = NoiseSpec::new(NoiseFamily::CenteredExponential);
    let result = run_experiment(&plan).unwrap();
    check_methods(&mut out, "exponential noise", &result, 2000, &FOUR_METHODS, 0.04);
    out
}

fn criterion_10() -> Outcome {
    let mut out = Outcome::new();
    let s = ProblemSpec::<Mc>::from_rows(&[vec![2.0, 1.5], vec![2.0, 1.5]], &[1.0, 1.0]).unwrap();
    let mut plan = ExperimentPlan::new(s, 2000);
    plan.replicates = 50;
    plan.seed = 100;
    plan.svd = mc_svd();
    let result = run_experiment(&plan).unwrap();
    check_methods(&mut out, "rank 2", &result, 2000, &[STACK_WEIGHTED, SVD_WEIGHTED], 0.1);
    out
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<Vec<usize>> = std::env::var("SSVD_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {status} ({:.1}s) {}", start.elapsed().as_secs_f64(), outcome.details.join("; "));
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
