//! Theoretical bounds, brute-force ω tables, the fooling lemma, and
//! convergence experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::approx::{exact_expected_sq_error_given_rule, rmse_monte_carlo_on};
use crate::cbc::{candidate_scores, select_candidate_set, CbcConfig};
use crate::error::{Error, Result};
use crate::indexset::{build_index_set, IndexSet, DEFAULT_CAP};
use crate::korobov::{self, Alpha, Weights};
use crate::lattice::{self, LatticeRule};
use crate::testfns::{fooling_function, isqrt, FourierPolynomial, KernelFunction};

pub const DEFAULT_GRID_POINTS: usize = 64;
const GRID_MARGIN: f64 = 1e-3;

/// Largest `M` accepted by the exhaustive d = 2 enumerations.
pub const ENUMERATION_MAX_M: u64 = 20_000;

/// Radius of the truncated `h`-sum in [`omega_vanishing_check`].
pub const VANISHING_RADIUS: i64 = 1000;

/// `points` log-spaced values in `[1/2 + 10⁻³, α − 10⁻³]`.
pub fn lambda_grid(alpha: Alpha, points: usize) -> Result<Vec<f64>> {
    let lo = 0.5 + GRID_MARGIN;
    let hi = alpha.value() - GRID_MARGIN;
    if points == 0 || hi < lo {
        return Err(Error::EmptyGrid);
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

pub fn default_lambda_grid(alpha: Alpha) -> Result<Vec<f64>> {
    lambda_grid(alpha, DEFAULT_GRID_POINTS)
}

fn check_grid(alpha: Alpha, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|&&l| !(l > 0.5 && l < alpha.value())) {
        return Err(Error::InvalidParameter(format!("lambda = {bad} outside (1/2, alpha)")));
    }
    Ok(())
}

/// `ln ∏_{j<s} (1 + 2^{2α+2} γ_j^{1/λ} ζ(α/λ))²`.
fn ln_bracket_product(lambda: f64, alpha: Alpha, gamma: &Weights, s: usize) -> f64 {
    let a = alpha.value();
    let z = korobov::zeta(a / lambda).expect("lambda < alpha");
    let c = 2f64.powf(2.0 * a + 2.0) * z;
    gamma.as_slice()[..s]
        .iter()
        .map(|&g| 2.0 * (1.0 + c * g.powf(1.0 / lambda)).ln())
        .sum()
}

/// `min_λ [scale · ∏_{j<s}(…)²]^λ` over the grid, evaluated in log space.
fn grid_min(scale: f64, alpha: Alpha, gamma: &Weights, s: usize, grid: &[f64]) -> Result<f64> {
    check_grid(alpha, grid)?;
    gamma.check_dim(s)?;
    let ln_scale = scale.ln();
    let best = grid
        .iter()
        .map(|&l| l * (ln_scale + ln_bracket_product(l, alpha, gamma, s)))
        .fold(f64::INFINITY, f64::min);
    Ok(best.exp())
}

/// `H_M` minimised over the grid; an upper bound on the true infimum.
pub fn h_m(m: u64, alpha: Alpha, gamma: &Weights, tau: f64, grid: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    grid_min(2.0 / ((1.0 - tau) * m as f64), alpha, gamma, gamma.len(), grid)
}

/// Grid infimum of `(2/(1−τ)) ∏_j (1 + 2^{2α+2} γ_j^{1/λ} ζ(α/λ))²`;
/// `H_M ≤ 1` for every `M` at least this large.
pub fn min_required_m(alpha: Alpha, gamma: &Weights, tau: f64, d: usize, grid: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    check_grid(alpha, grid)?;
    gamma.check_dim(d)?;
    let ln_scale = (2.0 / (1.0 - tau)).ln();
    Ok(grid
        .iter()
        .map(|&l| (ln_scale + ln_bracket_product(l, alpha, gamma, d)).exp())
        .fold(f64::INFINITY, f64::min))
}

/// `min_λ [ (1/((1−τ)(N−1))) ∏_{j≤s}(1 + 2^{2α+2} γ_j^{1/λ} ζ(α/λ))² ]^λ`.
pub fn theorem3_bound(n: u64, s: usize, alpha: Alpha, gamma: &Weights, tau: f64, grid: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    if n < 3 {
        return Err(Error::InvalidParameter(format!("N = {n} must be at least 3")));
    }
    grid_min(1.0 / ((1.0 - tau) * (n - 1) as f64), alpha, gamma, s, grid)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau = {tau} outside (0, 1)")))
    }
}

/// `M^{λ − λβ/(2α) + 1/4}`.
pub fn corollary_t(m: u64, alpha: Alpha, lambda: f64, beta: f64) -> Result<f64> {
    let a = alpha.value();
    if !(lambda > 0.5 && lambda < a) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside (1/2, {a})")));
    }
    let beta_max = (a * (1.0 - 1.0 / (2.0 * lambda))).min(1.0);
    if !(beta > 0.0 && beta < beta_max) {
        return Err(Error::InvalidParameter(format!("beta = {beta} outside (0, {beta_max})")));
    }
    Ok((m as f64).powf(lambda - lambda * beta / (2.0 * a) + 0.25))
}

/// The proven RMSE decay exponent `−(λ/2 − λβ/(4α) + 1/8)`.
pub fn rate_exponent(alpha: Alpha, lambda: f64, beta: f64) -> f64 {
    -(lambda / 2.0 - lambda * beta / (4.0 * alpha.value()) + 0.125)
}

/// `√2 · min(γ_1, γ_2) / (3 M^{α/2 + 1/2})`.
pub fn rmse_lower_bound(m: u64, alpha: Alpha, gamma: &Weights) -> Result<f64> {
    if gamma.len() < 2 {
        return Err(Error::InvalidParameter("lower bound needs d >= 2".into()));
    }
    let g = gamma.get(0).min(gamma.get(1));
    Ok(2f64.sqrt() * g / (3.0 * (m as f64).powf(alpha.value() / 2.0 + 0.5)))
}

/// Collected bound values for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(rename = "M")]
    pub m: u64,
    pub d: usize,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub tau: f64,
    pub lambda_grid: Vec<f64>,
    #[serde(rename = "H_M")]
    pub h_m: f64,
    pub min_required_m: f64,
    /// Per-step criterion bound for `s = 1, …, d` at the smallest prime of `P_M`, which
    /// dominates the bound for every other `N ∈ P_M`.
    pub theorem3_bounds: Vec<f64>,
    pub rate_exponent: Option<f64>,
}

pub fn bound_report(
    m: u64,
    alpha: Alpha,
    gamma: &Weights,
    tau: f64,
    lambda_beta: Option<(f64, f64)>,
) -> Result<BoundReport> {
    let grid = default_lambda_grid(alpha)?;
    let d = gamma.len();
    let n_min = lattice::primes_in_range(m)?[0];
    let theorem3_bounds = (1..=d)
        .map(|s| theorem3_bound(n_min.max(3), s, alpha, gamma, tau, &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport {
        m,
        d,
        alpha: alpha.value(),
        gamma: gamma.as_slice().to_vec(),
        tau,
        h_m: h_m(m, alpha, gamma, tau, &grid)?,
        min_required_m: min_required_m(alpha, gamma, tau, d, &grid)?,
        lambda_grid: grid,
        theorem3_bounds,
        rate_exponent: lambda_beta.map(|(l, b)| rate_exponent(alpha, l, b)),
    })
}

/// One prime of `P_M` with its candidate set `Z_2` (so `Z_{N,2,τ} = {1} × Z_2`).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub n: u64,
    pub second: Vec<u64>,
}

/// Every `(N, Z_{N,2,τ})` the randomized construction can produce for `d = 2`.
pub fn ensemble_d2(m: u64, tau: f64, alpha: Alpha, gamma: &Weights) -> Result<Vec<EnsembleMember>> {
    check_tau(tau)?;
    gamma.check_dim(2)?;
    if m > ENUMERATION_MAX_M {
        return Err(Error::Infeasible(format!("exhaustive enumeration with M = {m}")));
    }
    let g2 = Weights::new(gamma.as_slice()[..2].to_vec())?;
    lattice::primes_in_range(m)?
        .into_par_iter()
        .map(|n| {
            let scores = candidate_scores(n, &[1], alpha, &g2)?;
            Ok(EnsembleMember {
                n,
                second: select_candidate_set(&scores, tau),
            })
        })
        .collect()
}

/// `ω(ℓ)` from an enumerated ensemble.
pub fn omega_from_ensemble(ensemble: &[EnsembleMember], ell: [i64; 2]) -> f64 {
    let per_prime: f64 = ensemble
        .iter()
        .map(|e| {
            let n = e.n as i128;
            let l1 = ell[0] as i128;
            let l2 = ell[1] as i128;
            let hits = e.second.iter().filter(|&&z| (l1 + l2 * z as i128).rem_euclid(n) == 0).count();
            hits as f64 / e.second.len() as f64
        })
        .sum();
    per_prime / ensemble.len() as f64
}

/// Probability over `N ∈ P_M` and `z ∈ Z_{N,2,τ}` that `ℓ ∈ P⊥_{N,z}`.
pub fn omega_bruteforce(m: u64, tau: f64, alpha: Alpha, gamma: &Weights, ell: [i64; 2]) -> Result<f64> {
    Ok(omega_from_ensemble(&ensemble_d2(m, tau, alpha, gamma)?, ell))
}

/// Outcome of [`omega_vanishing_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VanishingCheck {
    /// `Σ_{|h_j| ≤ K} 1/(r²(h) r²(h+ℓ))`, a lower bound on the full sum.
    pub truncated_sum: f64,
    /// Upper bound on the omitted part of the sum.
    pub tail_bound: f64,
    pub h_m_sq: f64,
    pub flagged: bool,
}

/// Sufficient condition for `ω(ℓ) = 0`: `Σ_h 1/(r²(h) r²(h+ℓ)) > H_M²`.
///
/// Only the truncated sum is compared, which never exceeds the full sum, and
/// the grid `H_M` is at least the true one, so a flag is always sound.
pub fn omega_vanishing_check(
    m: u64,
    tau: f64,
    alpha: Alpha,
    gamma: &Weights,
    ell: &[i64],
    grid: &[f64],
) -> Result<VanishingCheck> {
    gamma.check_dim(ell.len())?;
    let g = Weights::new(gamma.as_slice()[..ell.len()].to_vec())?;
    let hm = h_m(m, alpha, &g, tau, grid)?;
    let k = VANISHING_RADIUS;
    let mut truncated = 1.0;
    let mut full = 1.0;
    for (j, &l) in ell.iter().enumerate() {
        let gj = g.get(j);
        let s: f64 = (-k..=k)
            .rev()
            .map(|h| korobov::inv_r_sq_1d(h, alpha, gj) * korobov::inv_r_sq_1d(h + l, alpha, gj))
            .sum();
        truncated *= s;
        // Omitted terms: r^{-2}(h+ℓ) ≤ max(1, γ²) times γ² Σ_{|h|>K} |h|^{-2α}.
        let tail_1d = gj.max(1.0).powi(2) * gj * gj * korobov::series_tail_bound(alpha, k as u64);
        full *= s + tail_1d;
    }
    Ok(VanishingCheck {
        truncated_sum: truncated,
        tail_bound: (full - truncated).max(0.0),
        h_m_sq: hm * hm,
        flagged: truncated > hm * hm,
    })
}

/// `ω(ℓ)` over the box `|ℓ_j| ≤ radius`, with vanishing flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaTable {
    #[serde(rename = "M")]
    pub m: u64,
    pub tau: f64,
    pub entries: BTreeMap<[i64; 2], OmegaEntry>,
    /// `max_{ℓ ≠ 0, ω(ℓ) > 0} ω(ℓ) τ M / ln(1 + ‖ℓ‖_∞)`: an empirical constant,
    /// fitted from data, not a proven one.
    pub fitted_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaEntry {
    pub omega: f64,
    pub flagged_vanishing: bool,
}

impl OmegaTable {
    /// Flagged entries with nonzero brute-force `ω`; empty when the lemma holds.
    pub fn counterexamples(&self) -> Vec<[i64; 2]> {
        self.entries
            .iter()
            .filter(|(_, e)| e.flagged_vanishing && e.omega != 0.0)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.entries.values().filter(|e| e.flagged_vanishing).count()
    }

    /// CSV with columns `l1,l2,omega,flagged_vanishing`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l1,l2,omega,flagged_vanishing\n");
        for (l, e) in &self.entries {
            writeln!(out, "{},{},{:.15e},{}", l[0], l[1], e.omega, e.flagged_vanishing).unwrap();
        }
        out
    }
}

pub fn omega_table(m: u64, tau: f64, alpha: Alpha, gamma: &Weights, radius: i64) -> Result<OmegaTable> {
    let ensemble = ensemble_d2(m, tau, alpha, gamma)?;
    let grid = default_lambda_grid(alpha)?;
    let ells: Vec<[i64; 2]> = (-radius..=radius)
        .flat_map(|a| (-radius..=radius).map(move |b| [a, b]))
        .collect();
    let rows: Vec<([i64; 2], OmegaEntry)> = ells
        .par_iter()
        .map(|&l| {
            let check = omega_vanishing_check(m, tau, alpha, gamma, &l, &grid)?;
            Ok((
                l,
                OmegaEntry {
                    omega: omega_from_ensemble(&ensemble, l),
                    flagged_vanishing: check.flagged,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let fitted_c = rows
        .iter()
        .filter(|(l, e)| *l != [0, 0] && e.omega > 0.0)
        .map(|(l, e)| {
            let norm = l[0].abs().max(l[1].abs()) as f64;
            e.omega * tau * m as f64 / (1.0 + norm).ln()
        })
        .fold(0.0, f64::max);
    Ok(OmegaTable {
        m,
        tau,
        entries: rows.into_iter().collect(),
        fitted_c,
    })
}

/// Exact `E ‖f − A(f)‖²` over the full randomness of the d = 2 algorithm:
/// `N ∈ P_M`, `z ∈ Z_{N,2,τ}` and `Δ`, all enumerated or integrated exactly.
pub fn exhaustive_expected_sq_error(
    f: &FourierPolynomial,
    m: u64,
    tau: f64,
    alpha: Alpha,
    gamma: &Weights,
    a: &IndexSet,
) -> Result<f64> {
    let ensemble = ensemble_d2(m, tau, alpha, gamma)?;
    let per_prime = ensemble
        .par_iter()
        .map(|e| {
            let mut sum = 0.0;
            for &z in &e.second {
                let rule = LatticeRule::new(e.n, vec![1, z])?;
                sum += exact_expected_sq_error_given_rule(f, &rule, a)?;
            }
            Ok(sum / e.second.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_prime.iter().sum::<f64>() / per_prime.len() as f64)
}

/// A dual vector `(h_1, h_2)` with `|h_j| ≤ ⌊√N⌋` and both coordinates nonzero.
pub fn fooling_witness(n: u64, z1: u64, z2: u64) -> Option<[i64; 2]> {
    let s = isqrt(n);
    if !lattice::is_prime(n) || z1.is_multiple_of(n) || z2.is_multiple_of(n) {
        return None;
    }
    // h_1 z_1 + h_2 z_2 ≡ 0  ⇔  h_2 ≡ −h_1 z_1 z_2^{-1}.
    let ratio = (z1 as u128 * lattice::inv_mod_prime(z2 % n, n) as u128 % n as u128) as u64;
    for h1 in 1..=s {
        let t = (n - (h1 as u128 * ratio as u128 % n as u128) as u64) % n;
        if t != 0 && t <= s {
            return Some([h1 as i64, t as i64]);
        }
        if t != 0 && n - t <= s {
            return Some([h1 as i64, t as i64 - n as i64]);
        }
    }
    None
}

/// Whether every `z ∈ {1, …, N−1}²` admits a [`fooling_witness`].
pub fn verify_fooling_lemma(n: u64) -> Result<bool> {
    if !lattice::is_prime(n) {
        return Err(Error::NotPrime(n));
    }
    Ok((1..n)
        .into_par_iter()
        .all(|z1| (1..n).all(|z2| fooling_witness(n, z1, z2).is_some())))
}

/// Test functions for [`convergence_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// The same polynomial for every `M`.
    Fixed(FourierPolynomial),
    /// The fooling function `p_M`, rebuilt for each `M`.
    Fooling,
}

/// The kernel `Σ_h r^{-2}(h) e^{2πi h·x}` truncated to `|h_j| ≤ radius` and
/// scaled to unit Korobov norm.
pub fn kernel_test_function(alpha: Alpha, gamma: &Weights, radius: i64) -> Result<FourierPolynomial> {
    let k = KernelFunction::new(alpha, gamma.clone(), gamma.len())?;
    let mut p = k.truncated(radius);
    let norm_sq = korobov::korobov_norm_sq(&p, alpha, gamma)?.to_f64();
    p.scale(1.0 / norm_sq.sqrt());
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub m_list: Vec<u64>,
    pub alpha: Alpha,
    pub gamma: Weights,
    pub tau: f64,
    pub seed: u64,
    pub n_trials: usize,
    pub lambda: f64,
    pub beta: f64,
    pub function: TestFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "N_drawn_mean")]
    pub n_drawn_mean: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    /// RMSE lower bound `√2 min(γ_1, γ_2) / (3 M^{α/2+1/2})`.
    pub lower_bound: f64,
}

/// Least-squares fit of `ln RMSE = intercept + slope · ln M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// 95% Student-t interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub fit: SlopeFit,
    /// The proven exponent `−(λ/2 − λβ/(4α) + 1/8)`.
    pub rate_exponent: f64,
    /// `e^{intercept}`: fitted, not proven.
    pub fitted_constant: f64,
}

impl ConvergenceReport {
    /// CSV with columns `M,N_drawn_mean,T,mse_mean,mse_stderr,lower_bound`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("M,N_drawn_mean,T,mse_mean,mse_stderr,lower_bound\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                r.m, r.n_drawn_mean, r.t, r.mse_mean, r.mse_stderr, r.lower_bound
            )
            .unwrap();
        }
        out
    }
}

/// Ordinary least squares with a 95% t-interval on the slope.
pub fn fit_slope(x: &[f64], y: &[f64]) -> SlopeFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = x.len() as f64 - 2.0;
    let (slope_stderr, half) = if dof >= 1.0 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let se = (rss / dof / sxx).sqrt();
        let q = StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.975);
        (se, q * se)
    } else {
        (f64::NAN, f64::NAN)
    };
    SlopeFit {
        slope,
        intercept,
        slope_stderr,
        ci_low: slope - half,
        ci_high: slope + half,
    }
}

/// Per-`M` Monte Carlo of the exact squared error with `T` from
/// [`corollary_t`], plus a log-log slope fit of the RMSE.
pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    if cfg.m_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values of M".into()));
    }
    let d = cfg.gamma.len();
    let mut rows = Vec::with_capacity(cfg.m_list.len());
    for &m in &cfg.m_list {
        let t = corollary_t(m, cfg.alpha, cfg.lambda, cfg.beta)?;
        let a = build_index_set(d, cfg.alpha, &cfg.gamma, t, DEFAULT_CAP)?;
        let f = match &cfg.function {
            TestFunction::Fixed(p) => p.clone(),
            TestFunction::Fooling => fooling_function(m, d, cfg.alpha, &cfg.gamma)?,
        };
        let cbc = CbcConfig {
            m,
            d,
            alpha: cfg.alpha,
            gamma: cfg.gamma.clone(),
            tau: cfg.tau,
            seed: cfg.seed,
        };
        let est = rmse_monte_carlo_on(&f, &cbc, &a, cfg.n_trials)?;
        rows.push(ConvergenceRow {
            m,
            n_drawn_mean: est.n_mean,
            t,
            mse_mean: est.mean_sq_error,
            mse_stderr: est.std_error,
            lower_bound: rmse_lower_bound(m, cfg.alpha, &cfg.gamma)?,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| 0.5 * r.mse_mean.ln()).collect();
    let fit = fit_slope(&x, &y);
    Ok(ConvergenceReport {
        rows,
        rate_exponent: rate_exponent(cfg.alpha, cfg.lambda, cfg.beta),
        fitted_constant: fit.intercept.exp(),
        fit,
    })
}
