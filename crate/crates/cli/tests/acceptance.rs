//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlattice::analysis::{self, ConvergenceConfig, TestFunction};
use rlattice::approx::{
    alias_expansion, estimate_coeffs, exact_expected_sq_error_given_rule, exact_sq_error_fixed, mean_and_std_error,
    sample_function,
};
use rlattice::cbc::{candidate_scores_with, criterion_direct, criterion_formula, ScoreMethod};
use rlattice::indexset::DEFAULT_CAP;
use rlattice::lattice::{is_prime, sieve};
use rlattice::testfns::fooling_function;
use rlattice::{
    build_index_set, randomized_cbc, Alpha, CbcConfig, FourierPolynomial, LatticeRule, ShiftedLatticeRule, Weights,
};

type Outcome = Result<String, String>;

fn alpha(v: f64) -> Alpha {
    Alpha::new(v).unwrap()
}

fn weights(v: &[f64]) -> Weights {
    Weights::new(v.to_vec()).unwrap()
}

fn random_gen(rng: &mut ChaCha8Rng, n: u64, d: usize) -> Vec<u64> {
    (0..d).map(|_| rng.gen_range(1..n)).collect()
}

fn random_poly(rng: &mut ChaCha8Rng, d: usize, terms: usize, radius: i64) -> FourierPolynomial {
    let mut f = FourierPolynomial::zero(d);
    for _ in 0..terms {
        let h: Vec<i64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
        f.insert(h, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    f
}

fn random_shifted_rule(rng: &mut ChaCha8Rng, n: u64, d: usize) -> ShiftedLatticeRule {
    let rule = LatticeRule::new(n, random_gen(rng, n, d)).unwrap();
    ShiftedLatticeRule::new(rule, (0..d).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn character_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=101u64);
        let d = rng.gen_range(1..=4usize);
        let rule = LatticeRule::new(n, random_gen(&mut rng, n, d)).unwrap();
        let h: Vec<i64> = (0..d).map(|_| rng.gen_range(-2 * n as i64..=2 * n as i64)).collect();
        let ind = if rule.dual_contains(&h).unwrap() { 1.0 } else { 0.0 };
        let s = rule.character_sum(&h).unwrap();
        worst = worst.max((s - Complex64::new(ind, 0.0)).norm());
    }
    let msg = format!("max |character sum - indicator| = {worst:.3e} (tol 1e-9)");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut cases = 0;
    let mut failures = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for n in sieve(31) {
        for d in 1..=3 {
            for a in [1.0, 2.0] {
                for _ in 0..20 {
                    let gamma = Weights::new((0..d).map(|_| rng.gen_range(0.05..=1.0)).collect()).unwrap();
                    let rule = LatticeRule::new(n, random_gen(&mut rng, n, d)).unwrap();
                    let formula = criterion_formula(&rule, alpha(a), &gamma).unwrap().powi(2);
                    let direct = criterion_direct(&rule, alpha(a), &gamma, 1000).unwrap();
                    let excess = (formula - direct.value_sq).abs() - (1e-6 + direct.tail_bound);
                    worst_excess = worst_excess.max(excess);
                    cases += 1;
                    if excess > 0.0 {
                        failures += 1;
                    }
                }
            }
        }
    }
    let msg = format!("{cases} cases, {failures} outside 1e-6 + tail; max (|diff| - tol) = {worst_excess:.3e}");
    if failures == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fast_cbc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut nonzero = 0;
    for n in [7u64, 31, 127, 1009] {
        for a in [1.0, 2.0, 3.0] {
            for s in 1..=3usize {
                let gamma = Weights::new((0..=s).map(|_| rng.gen_range(0.1..=1.0)).collect()).unwrap();
                let mut prefix = vec![1u64];
                prefix.extend(random_gen(&mut rng, n, s - 1));
                let fast = candidate_scores_with(n, &prefix, alpha(a), &gamma, ScoreMethod::Fast).unwrap();
                let naive = candidate_scores_with(n, &prefix, alpha(a), &gamma, ScoreMethod::Naive).unwrap();
                for (x, y) in fast.iter().zip(&naive) {
                    worst = worst.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
                    compared += 1;
                    nonzero += usize::from(*y > 0.0);
                }
            }
        }
    }
    let msg = format!("{compared} scores ({nonzero} nonzero), max relative difference {worst:.3e} (tol 1e-9)");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn theorem3() -> Outcome {
    let gammas = [vec![1.0, 1.0, 1.0, 1.0], vec![1.0, 0.5, 0.25, 0.125], vec![0.9, 0.7, 0.3, 0.05]];
    let grid = analysis::default_lambda_grid(alpha(1.0)).unwrap();
    let mut checked = 0;
    let mut violations = Vec::new();
    for seed in 0..100u64 {
        let m = [20, 50, 200][seed as usize % 3];
        let tau = [0.25, 0.5, 0.9][(seed as usize / 3) % 3];
        let d = 1 + (seed as usize / 9) % 4;
        let gamma = weights(&gammas[seed as usize % gammas.len()][..d]);
        let cfg = CbcConfig {
            m,
            d,
            alpha: alpha(1.0),
            gamma: gamma.clone(),
            tau,
            seed,
        };
        let r = randomized_cbc(&cfg).unwrap();
        let n = r.rule.n_points();
        for s in 1..=d {
            let prefix = LatticeRule::new(n, r.rule.gen()[..s].to_vec()).unwrap();
            let value = criterion_formula(&prefix, alpha(1.0), &gamma).unwrap();
            let bound = analysis::theorem3_bound(n, s, alpha(1.0), &gamma, tau, &grid).unwrap();
            checked += 1;
            if value > bound || r.per_step_scores[s - 1] > bound {
                violations.push((seed, s));
            }
        }
    }
    let msg = format!("{checked} (run, step) pairs, {} violations", violations.len());
    if violations.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}: {violations:?}"))
    }
}

fn aliasing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let d = rng.gen_range(1..=3usize);
        let terms = rng.gen_range(1..=20);
        let f = random_poly(&mut rng, d, terms, 15);
        let n = [5u64, 7, 11, 13, 16, 23, 31][rng.gen_range(0..7)];
        let rule = random_shifted_rule(&mut rng, n, d);
        let gamma = Weights::uniform(1.0, d).unwrap();
        let set = build_index_set(d, alpha(1.0), &gamma, 10.0, DEFAULT_CAP).unwrap();
        let est = estimate_coeffs(&sample_function(&f, &rule).unwrap(), &rule, &set).unwrap();
        for h in set.iter() {
            let diff = f.coeff(h) - est.coeff(h).unwrap();
            worst = worst.max((diff + alias_expansion(&f, &rule, h).unwrap()).norm());
        }
    }
    let msg = format!("max |(f^(h) - estimate) + alias sum| = {worst:.3e} (tol 1e-10)");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn exact_errors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst_quad = 0.0f64;
    for _ in 0..40 {
        let d = rng.gen_range(1..=2usize);
        let f = random_poly(&mut rng, d, 10, 5);
        let n = [7u64, 11, 13, 17][rng.gen_range(0..4)];
        let rule = random_shifted_rule(&mut rng, n, d);
        let gamma = Weights::uniform(1.0, d).unwrap();
        let set = build_index_set(d, alpha(1.0), &gamma, 6.0, DEFAULT_CAP).unwrap();
        let exact = exact_sq_error_fixed(&f, &rule, &set).unwrap();
        let approx = estimate_coeffs(&sample_function(&f, &rule).unwrap(), &rule, &set)
            .unwrap()
            .to_polynomial();
        // Degree stays below q, so the q-point rectangle rule is exact.
        let q = 16usize;
        let mut sum = 0.0;
        for idx in 0..q.pow(d as u32) {
            let x: Vec<f64> = (0..d).map(|j| ((idx / q.pow(j as u32)) % q) as f64 / q as f64).collect();
            sum += (f.eval(&x) - approx.eval(&x)).norm_sqr();
        }
        worst_quad = worst_quad.max((exact - sum / q.pow(d as u32) as f64).abs());
    }

    let mut outside = 0;
    let mut worst_sigma = 0.0f64;
    for case in 0..5 {
        let f = random_poly(&mut rng, 2, 12, 6);
        let rule = random_shifted_rule(&mut rng, [11u64, 13, 17, 19, 23][case], 2).rule;
        let set = build_index_set(2, alpha(1.0), &weights(&[1.0, 1.0]), 8.0, DEFAULT_CAP).unwrap();
        let expected = exact_expected_sq_error_given_rule(&f, &rule, &set).unwrap();
        let draws: Vec<f64> = (0..10_000)
            .map(|_| {
                let shifted = ShiftedLatticeRule::new(rule.clone(), vec![rng.gen(), rng.gen()]).unwrap();
                exact_sq_error_fixed(&f, &shifted, &set).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_std_error(&draws);
        // When aliasing misses A the error does not depend on the shift and
        // the sample spread is pure rounding; floor it at a relative 1e-11.
        let sigma = se.max(1e-11 * expected.abs().max(1.0));
        let sigmas = (mean - expected).abs() / sigma;
        worst_sigma = worst_sigma.max(sigmas);
        if sigmas > 3.0 {
            outside += 1;
        }
    }
    let msg = format!(
        "max |exact - quadrature| = {worst_quad:.3e} (tol 1e-8); shift Monte Carlo max deviation {worst_sigma:.2} sigma, {outside}/5 beyond 3 sigma"
    );
    if worst_quad <= 1e-8 && outside == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn omega_soundness() -> Outcome {
    let gamma = weights(&[1.0, 1.0]);
    let mut parts = Vec::new();
    let mut bad = 0;
    for m in [10u64, 20] {
        let t = analysis::omega_table(m, 0.5, alpha(1.0), &gamma, 30).unwrap();
        bad += t.counterexamples().len();
        parts.push(format!(
            "M={m}: {} entries, {} flagged, empirical c {:.4}",
            t.entries.len(),
            t.flagged_count(),
            t.fitted_c
        ));
    }
    let msg = format!("{}; {bad} counterexamples", parts.join("; "));
    if bad == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lower_bound() -> Outcome {
    let gamma = weights(&[1.0, 1.0]);
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for m in [4u64, 10, 20] {
        for a in [1.0, 2.0] {
            let p = fooling_function(m, 2, alpha(a), &gamma).unwrap();
            let bound = 2.0 / (9.0 * (m as f64).powf(a + 1.0));
            let ensemble = analysis::ensemble_d2(m, 0.5, alpha(a), &gamma).unwrap();
            let mf = m as f64;
            for t in [1.0, 2.0, mf.sqrt(), mf, mf.powf(a), mf.powf(a + 1.0), mf.powf(2.0 * a + 1.0), 1e6] {
                let set = build_index_set(2, alpha(a), &gamma, t, DEFAULT_CAP).unwrap();
                for member in &ensemble {
                    for &z in &member.second {
                        let rule = LatticeRule::new(member.n, vec![1, z]).unwrap();
                        let e = exact_expected_sq_error_given_rule(&p, &rule, &set).unwrap();
                        checked += 1;
                        min_ratio = min_ratio.min(e / bound);
                        if e < bound {
                            violations.push((m, a, t, member.n, z));
                        }
                    }
                }
                let mean = analysis::exhaustive_expected_sq_error(&p, m, 0.5, alpha(a), &gamma, &set).unwrap();
                let rmse_bound = analysis::rmse_lower_bound(m, alpha(a), &gamma).unwrap();
                if mean.sqrt() < rmse_bound {
                    violations.push((m, a, t, 0, 0));
                }
            }
        }
    }
    let msg = format!(
        "{checked} (N, z, T) cases, {} violations, min error/bound ratio {min_ratio:.4}",
        violations.len()
    );
    if violations.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}: {violations:?}"))
    }
}

fn fooling_lemma() -> Outcome {
    let primes: Vec<u64> = (2..=101).filter(|&n| is_prime(n)).collect();
    let failed: Vec<u64> = primes
        .iter()
        .copied()
        .filter(|&n| n >= 3 && !analysis::verify_fooling_lemma(n).unwrap())
        .collect();
    // N = 2 has only z = (1, 1), answered by h = (1, 1).
    let two = LatticeRule::new(2, vec![1, 1]).unwrap().dual_contains(&[1, 1]).unwrap();
    let msg = format!("{} primes checked, failures {failed:?}", primes.len());
    if failed.is_empty() && two {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn convergence() -> Outcome {
    let gamma = weights(&[1.0, 0.5]);
    let f = analysis::kernel_test_function(alpha(1.0), &gamma, 64).unwrap();
    let report = analysis::convergence_experiment(&ConvergenceConfig {
        m_list: vec![64, 128, 256, 512, 1024, 2048, 4096],
        alpha: alpha(1.0),
        gamma,
        tau: 0.5,
        seed: 2024,
        n_trials: 200,
        lambda: 0.9,
        beta: 0.05,
        function: TestFunction::Fixed(f),
    })
    .unwrap();
    println!("  convergence table:");
    for line in report.to_csv().lines() {
        println!("    {line}");
    }
    let slope = report.fit.slope;
    let msg = format!(
        "slope {slope:.4} (95% CI [{:.4}, {:.4}]), threshold -0.4; reference -a/2 - 1/8 = -0.625 (distance {:.4}); proven exponent {:.4}",
        report.fit.ci_low,
        report.fit.ci_high,
        (slope + 0.625).abs(),
        report.rate_exponent
    );
    if slope <= -0.5 + 0.1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_cli(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_rlattice"))
        .args(args)
        .env("RLATTICE_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("rlattice-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let fn_path = dir.join("f.json");
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    std::fs::write(&fn_path, random_poly(&mut rng, 3, 30, 6).to_json()).unwrap();
    let fn_arg = fn_path.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["construct", "--M", "500", "--alpha", "2", "--gamma", "1,0.5,0.25,0.125", "--tau", "0.5", "--seed", "42"],
        vec![
            "approximate", "--fn", fn_arg, "--M", "400", "--alpha", "1", "--gamma", "1,0.5,0.25", "--seed", "9", "--T",
            "40", "--exact-error",
        ],
        vec![
            "approximate", "--kernel", "--kernel-radius", "16", "--M", "300", "--alpha", "1", "--gamma", "1,0.5", "--seed",
            "3", "--lambda", "0.9", "--beta", "0.05", "--exact-error",
        ],
    ];
    let mut runs = 0;
    for args in &commands {
        let reference = run_cli(args, "1");
        for threads in ["1", "1", "1", "4", "4", "4"] {
            runs += 1;
            if run_cli(args, threads) != reference {
                return Err(format!("output of {:?} differs with {threads} threads", args[0]));
            }
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(format!("{} commands, {runs} repeated runs byte-identical across thread counts 1 and 4", commands.len()))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "character property", limit: Some(Duration::from_secs(5)), run: character_property },
        Criterion { id: 2, name: "criterion equivalence", limit: Some(Duration::from_secs(60)), run: criterion_equivalence },
        Criterion { id: 3, name: "fast CBC correctness", limit: Some(Duration::from_secs(30)), run: fast_cbc },
        Criterion { id: 4, name: "criterion bound", limit: None, run: theorem3 },
        Criterion { id: 5, name: "aliasing identity", limit: None, run: aliasing },
        Criterion { id: 6, name: "exact error accounting", limit: None, run: exact_errors },
        Criterion { id: 7, name: "vanishing-frequency soundness", limit: Some(Duration::from_secs(600)), run: omega_soundness },
        Criterion { id: 8, name: "RMSE lower bound", limit: None, run: lower_bound },
        Criterion { id: 9, name: "fooling lemma", limit: Some(Duration::from_secs(120)), run: fooling_lemma },
        Criterion { id: 10, name: "convergence sanity", limit: Some(Duration::from_secs(900)), run: convergence },
        Criterion { id: 11, name: "determinism", limit: None, run: determinism },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || c.id.to_string() == *f) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(m), Some(limit)) if elapsed > limit => Err(format!("{m}; exceeded time limit {limit:?}")),
            (o, _) => o,
        };
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{tag} criterion {:>2} ({}) [{:.2}s]: {msg}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
