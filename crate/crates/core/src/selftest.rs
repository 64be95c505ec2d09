//! A quick oracle battery: each check compares a library routine against an
//! independent computation at small scale.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{self, default_lambda_grid};
use crate::approx::{alias_expansion, estimate_coeffs, exact_sq_error_fixed, sample_function};
use crate::cbc::{candidate_scores_with, criterion_direct, criterion_formula, randomized_cbc, CbcConfig, ScoreMethod};
use crate::error::Result;
use crate::indexset::{build_index_set, DEFAULT_CAP};
use crate::korobov::{self, Alpha, Weights};
use crate::lattice::{LatticeRule, ShiftedLatticeRule};
use crate::testfns::{fooling_function, FourierPolynomial};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn alpha(v: f64) -> Alpha {
    Alpha::new(v).expect("valid alpha")
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("zeta", zeta_values),
        check("character_property", character_property),
        check("criterion_formula_vs_direct", criterion_equivalence),
        check("fast_vs_naive_scores", fast_vs_naive),
        check("theorem3_bound", theorem3),
        check("aliasing_identity", aliasing),
        check("exact_error_vs_quadrature", exact_error),
        check("omega_vanishing_soundness", omega_soundness),
        check("fooling_lower_bound", fooling_bound),
        check("fooling_lemma", fooling_lemma),
    ]
}

fn zeta_values() -> Result<(bool, String)> {
    let pi = std::f64::consts::PI;
    let err = (korobov::zeta(2.0)? - pi * pi / 6.0)
        .abs()
        .max((korobov::zeta(4.0)? - pi.powi(4) / 90.0).abs());
    Ok((err <= 1e-13, format!("max error {err:.3e}")))
}

fn random_gen(rng: &mut ChaCha8Rng, n: u64, d: usize) -> Vec<u64> {
    (0..d).map(|_| rng.gen_range(1..n)).collect()
}

fn character_property() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=101u64);
        let d = rng.gen_range(1..=4usize);
        let rule = LatticeRule::new(n, random_gen(&mut rng, n, d))?;
        let h: Vec<i64> = (0..d).map(|_| rng.gen_range(-30..=30)).collect();
        let ind = if rule.dual_contains(&h)? { 1.0 } else { 0.0 };
        worst = worst.max((rule.character_sum(&h)? - Complex64::new(ind, 0.0)).norm());
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.3e}")))
}

fn criterion_equivalence() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ok = true;
    let mut worst = 0.0f64;
    for n in [5u64, 7, 11] {
        for d in 1..=2 {
            let gamma = Weights::new((0..d).map(|_| rng.gen_range(0.1..1.0)).collect())?;
            let rule = LatticeRule::new(n, random_gen(&mut rng, n, d))?;
            let f = criterion_formula(&rule, alpha(1.0), &gamma)?.powi(2);
            let direct = criterion_direct(&rule, alpha(1.0), &gamma, 1000)?;
            let diff = (f - direct.value_sq).abs();
            worst = worst.max(diff);
            ok &= diff <= 1e-6 + direct.tail_bound;
        }
    }
    Ok((ok, format!("max |difference| {worst:.3e}")))
}

fn fast_vs_naive() -> Result<(bool, String)> {
    let gamma = Weights::new(vec![1.0, 0.7, 0.4])?;
    let mut worst = 0.0f64;
    for (n, prefix) in [(7u64, vec![1u64]), (31, vec![1, 12]), (127, vec![1])] {
        let g = Weights::new(gamma.as_slice()[..=prefix.len()].to_vec())?;
        let fast = candidate_scores_with(n, &prefix, alpha(2.0), &g, ScoreMethod::Fast)?;
        let naive = candidate_scores_with(n, &prefix, alpha(2.0), &g, ScoreMethod::Naive)?;
        for (a, b) in fast.iter().zip(&naive) {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok((worst <= 1e-9, format!("max relative difference {worst:.3e}")))
}

fn theorem3() -> Result<(bool, String)> {
    let gamma = Weights::new(vec![1.0, 0.5, 0.3])?;
    let grid = default_lambda_grid(alpha(1.0))?;
    let mut violations = 0;
    for seed in 0..10 {
        let cfg = CbcConfig {
            m: 50,
            d: 3,
            alpha: alpha(1.0),
            gamma: gamma.clone(),
            tau: 0.5,
            seed,
        };
        let r = randomized_cbc(&cfg)?;
        for s in 1..=3 {
            let b = analysis::theorem3_bound(r.rule.n_points(), s, cfg.alpha, &gamma, cfg.tau, &grid)?;
            if r.per_step_scores[s - 1] > b {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations")))
}

fn random_poly(rng: &mut ChaCha8Rng, d: usize, terms: usize, radius: i64) -> FourierPolynomial {
    let mut f = FourierPolynomial::zero(d);
    for _ in 0..terms {
        let h: Vec<i64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
        f.insert(h, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    f
}

fn random_shifted_rule(rng: &mut ChaCha8Rng, n: u64, d: usize) -> Result<ShiftedLatticeRule> {
    let rule = LatticeRule::new(n, random_gen(rng, n, d))?;
    ShiftedLatticeRule::new(rule, (0..d).map(|_| rng.gen::<f64>()).collect())
}

fn aliasing() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gamma = Weights::new(vec![1.0, 1.0])?;
    let set = build_index_set(2, alpha(1.0), &gamma, 16.0, DEFAULT_CAP)?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = random_poly(&mut rng, 2, 12, 12);
        let rule = random_shifted_rule(&mut rng, 13, 2)?;
        let est = estimate_coeffs(&sample_function(&f, &rule)?, &rule, &set)?;
        for h in set.iter() {
            let lhs = f.coeff(h) - est.coeff(h).expect("member");
            worst = worst.max((lhs + alias_expansion(&f, &rule, h)?).norm());
        }
    }
    Ok((worst <= 1e-10, format!("max residual {worst:.3e}")))
}

fn exact_error() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gamma = Weights::new(vec![1.0, 1.0])?;
    let set = build_index_set(2, alpha(1.0), &gamma, 4.0, DEFAULT_CAP)?;
    let f = random_poly(&mut rng, 2, 8, 4);
    let rule = random_shifted_rule(&mut rng, 11, 2)?;
    let exact = exact_sq_error_fixed(&f, &rule, &set)?;
    let approx = estimate_coeffs(&sample_function(&f, &rule)?, &rule, &set)?.to_polynomial();
    // A q×q grid integrates trigonometric polynomials of degree < q exactly.
    let q = 24;
    let mut sum = 0.0;
    for i in 0..q {
        for j in 0..q {
            let x = [i as f64 / q as f64, j as f64 / q as f64];
            sum += (f.eval(&x) - approx.eval(&x)).norm_sqr();
        }
    }
    let quad = sum / (q * q) as f64;
    let diff = (exact - quad).abs();
    Ok((diff <= 1e-8, format!("|exact - quadrature| {diff:.3e}")))
}

fn omega_soundness() -> Result<(bool, String)> {
    let gamma = Weights::new(vec![1.0, 1.0])?;
    let table = analysis::omega_table(10, 0.5, alpha(1.0), &gamma, 10)?;
    let bad = table.counterexamples().len();
    Ok((
        bad == 0 && table.entries[&[7, 0]].omega == 1.0,
        format!("{bad} counterexamples, {} flagged", table.flagged_count()),
    ))
}

fn fooling_bound() -> Result<(bool, String)> {
    let gamma = Weights::new(vec![1.0, 1.0])?;
    let mut violations = 0;
    for m in [4u64, 10] {
        let p = fooling_function(m, 2, alpha(1.0), &gamma)?;
        let bound = 2.0 / (9.0 * (m as f64).powi(2));
        for t in [1.0, 8.0, 100.0] {
            let set = build_index_set(2, alpha(1.0), &gamma, t, DEFAULT_CAP)?;
            if analysis::exhaustive_expected_sq_error(&p, m, 0.5, alpha(1.0), &gamma, &set)? < bound {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations")))
}

fn fooling_lemma() -> Result<(bool, String)> {
    let primes = [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31];
    let mut failed = Vec::new();
    for n in primes {
        if !analysis::verify_fooling_lemma(n)? {
            failed.push(n);
        }
    }
    Ok((failed.is_empty(), format!("failed primes {failed:?}")))
}
