//! The quality criterion `R_{N,s,α,γ}` and the randomized
//! component-by-component (CBC) construction.
//!
//! Three evaluation routes for the criterion:
//!
//! * [`criterion_direct`] sums the defining double series over a truncated
//!   box of frequencies, using only dual-lattice membership.
//! * [`criterion_formula`] uses the closed form
//!   `R² = -∏_j (1 + 2ζ(4α)γ_j⁴) + (1/N) Σ_k ∏_j (1 + γ_j² φ_α({k z_j / N}))²`
//!   where `φ_α` is the one-dimensional kernel correction.
//! * [`candidate_scores`] evaluates the closed form for every candidate
//!   `z_s ∈ {1, …, N-1}` at once. For prime `N` the sum over `k` becomes a
//!   circular correlation of length `N - 1` after reindexing both `k` and
//!   `z_s` by powers of a primitive root, which an FFT evaluates in
//!   `O(N log N)`.
//!
//! `R²` is a difference of two quantities of order one and can be many orders
//! of magnitude smaller than either, so the kernel values, the running
//! products and the correlations are all carried in double-double.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dd::{self, CDd, Correlator, Dd, ONE, ZERO};
use crate::error::{Error, Result};
use crate::korobov::{self, Alpha, KernelTable, Weights};
use crate::lattice::{self, LatticeRule};

/// Negative `R²` down to `-NEGATIVE_CLAMP · max(1, ∏(1+2ζ(4α)γ⁴))` is rounding
/// noise and is clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-9;

/// Largest `N` accepted by the truncated direct evaluation.
const DIRECT_MAX_N: u64 = 20_000;

/// Parameters of one randomized CBC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbcConfig {
    #[serde(rename = "M")]
    pub m: u64,
    pub d: usize,
    pub alpha: Alpha,
    pub gamma: Weights,
    pub tau: f64,
    pub seed: u64,
}

impl CbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 4 {
            return Err(Error::InvalidParameter(format!("M = {} must be at least 4", self.m)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau = {} outside (0, 1)", self.tau)));
        }
        self.gamma.check_dim(self.d)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Output of [`randomized_cbc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CbcResultRepr", into = "CbcResultRepr")]
pub struct CbcResult {
    pub rule: LatticeRule,
    /// `R_{N,s}(z_1, …, z_s)` for `s = 1, …, d`.
    pub per_step_scores: Vec<f64>,
    /// `|Z_s|` for `s = 1, …, d`; the first entry is 1 since `z_1 = 1` is fixed.
    pub candidate_set_sizes: Vec<usize>,
    pub seed: u64,
    pub tau: f64,
}

#[derive(Serialize, Deserialize)]
struct CbcResultRepr {
    #[serde(rename = "N")]
    n: u64,
    z: Vec<u64>,
    scores: Vec<f64>,
    seed: u64,
    tau: f64,
}

impl From<CbcResult> for CbcResultRepr {
    fn from(r: CbcResult) -> Self {
        Self {
            n: r.rule.n_points(),
            z: r.rule.gen().to_vec(),
            scores: r.per_step_scores,
            seed: r.seed,
            tau: r.tau,
        }
    }
}

impl TryFrom<CbcResultRepr> for CbcResult {
    type Error = Error;
    fn try_from(r: CbcResultRepr) -> Result<Self> {
        let d = r.z.len();
        let size = candidate_set_size(r.n, r.tau);
        let mut sizes = vec![size; d];
        if d > 0 {
            sizes[0] = 1;
        }
        Ok(Self {
            rule: LatticeRule::new(r.n, r.z)?,
            per_step_scores: r.scores,
            candidate_set_sizes: sizes,
            seed: r.seed,
            tau: r.tau,
        })
    }
}

/// `∏_{j<d} (1 + 2ζ(4α)γ_j⁴)`, the `ℓ = 0` part of the double sum.
pub fn zero_dual_term(alpha: Alpha, gamma: &Weights, d: usize) -> f64 {
    zero_dual_term_dd(alpha, gamma, d).into()
}

fn zero_dual_term_dd(alpha: Alpha, gamma: &Weights, d: usize) -> Dd {
    dd::zero_dual_term(alpha, &gamma.as_slice()[..d])
}

/// `mean - c`, clamped.
fn criterion_sq(mean: Dd, c: Dd) -> Result<f64> {
    clamp_sq((mean - c).into(), c.into())
}

fn clamp_sq(r2: f64, scale: f64) -> Result<f64> {
    if r2 >= 0.0 {
        Ok(r2)
    } else if r2 >= -NEGATIVE_CLAMP * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeCriterion(r2))
    }
}

/// Truncated evaluation of the defining double sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectCriterion {
    /// `R²` restricted to pairs `(h, h + ℓ)` with every coordinate of both in `[-K, K]`.
    pub value_sq: f64,
    /// Rigorous bound on the omitted part of `R²`.
    pub tail_bound: f64,
}

impl DirectCriterion {
    pub fn value(&self) -> f64 {
        self.value_sq.max(0.0).sqrt()
    }
}

/// `R²_{N,d,α,γ}(z)` summed over `h, h + ℓ ∈ [-K, K]^d`, `ℓ ∈ P⊥ \ {0}`.
///
/// Grouping the frequencies by their residue `h · z mod N` turns the double sum
/// into `Σ_c W(c)² - Σ_h r^{-4}(h)`, where `W(c)` is the total weight
/// `Σ_{h·z ≡ c} r^{-2}(h)` over the box; `W` is a cyclic convolution of
/// one-dimensional residue histograms. Cost `O(dK + dN²)`.
pub fn criterion_direct(
    rule: &LatticeRule,
    alpha: Alpha,
    gamma: &Weights,
    trunc_radius: i64,
) -> Result<DirectCriterion> {
    let d = rule.dim();
    gamma.check_dim(d)?;
    let n = rule.n_points();
    if n > DIRECT_MAX_N || !(0..=100_000_000).contains(&trunc_radius) {
        return Err(Error::Infeasible(format!(
            "direct criterion with N = {n}, radius = {trunc_radius}"
        )));
    }
    let nn = n as usize;
    let mut total = vec![0.0f64; nn];
    total[0] = 1.0;
    let mut zero_part = 1.0;
    let mut truncated_mass = 1.0;
    let mut full_mass = 1.0;
    let z2 = korobov::zeta(2.0 * alpha.value()).expect("2α > 1");
    for (j, &zj) in rule.gen().iter().enumerate() {
        let g = gamma.get(j);
        let mut hist = vec![0.0f64; nn];
        let mut sq = 0.0;
        let mut mass = 0.0;
        // Smallest terms first.
        for h in (1..=trunc_radius).rev() {
            let w = korobov::inv_r_sq_1d(h, alpha, g);
            let c_pos = ((h as u128 * zj as u128) % n as u128) as usize;
            let c_neg = (nn - c_pos) % nn;
            hist[c_pos] += w;
            hist[c_neg] += w;
            sq += 2.0 * w * w;
            mass += 2.0 * w;
        }
        hist[0] += 1.0;
        zero_part *= 1.0 + sq;
        truncated_mass *= 1.0 + mass;
        full_mass *= 1.0 + 2.0 * g * g * z2;

        let mut next = vec![0.0f64; nn];
        for (a, &ta) in total.iter().enumerate() {
            if ta == 0.0 {
                continue;
            }
            for (b, &hb) in hist.iter().enumerate() {
                let c = (a + b) % nn;
                next[c] += ta * hb;
            }
        }
        total = next;
    }
    let sum_sq: f64 = total.iter().map(|w| w * w).sum();
    Ok(DirectCriterion {
        value_sq: (sum_sq - zero_part).max(0.0),
        tail_bound: 2.0 * (full_mass - truncated_mass).max(0.0) * full_mass,
    })
}

/// `(1/N) Σ_k ∏_j (1 + γ_j² φ({k z_j / N}))²`.
fn kernel_mean(rule: &LatticeRule, phi: &[Dd], gamma: &Weights) -> Dd {
    let n = rule.n_points();
    let mut sum = ZERO;
    for k in 0..n {
        let mut prod = ONE;
        for (j, &z) in rule.gen().iter().enumerate() {
            let m = ((k as u128 * z as u128) % n as u128) as usize;
            let g = gamma.get(j);
            let f = ONE + phi[m] * (g * g);
            prod = prod * f * f;
        }
        sum += prod;
    }
    sum / n as f64
}

/// `R²_{N,d,α,γ}(z)` from the closed form (negative rounding noise clamped).
pub fn criterion_formula_sq(rule: &LatticeRule, alpha: Alpha, gamma: &Weights) -> Result<f64> {
    gamma.check_dim(rule.dim())?;
    let n = rule.n_points();
    let phi = dd::kernel_values(alpha, n, &KernelTable::new(alpha, n));
    let c = zero_dual_term_dd(alpha, gamma, rule.dim());
    criterion_sq(kernel_mean(rule, &phi, gamma), c)
}

/// `R_{N,d,α,γ}(z)` from the closed form.
///
/// Exact for `α ∈ {1, 2, 3}`; other α go through the folded kernel series.
pub fn criterion_formula(rule: &LatticeRule, alpha: Alpha, gamma: &Weights) -> Result<f64> {
    Ok(criterion_formula_sq(rule, alpha, gamma)?.sqrt())
}

/// How [`candidate_scores`] evaluates the per-candidate sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    /// Direct `O(N²)` accumulation; any `N ≥ 2`.
    Naive,
    /// Primitive-root reindexing and FFT correlation; prime `N` only.
    Fast,
}

/// Incremental scoring state for one CBC run at fixed `N`.
///
/// Keeps `θ(k) = ∏_{j<s} (1 + γ_j² φ({k z_j / N}))²` for all `k`.
#[derive(Debug, Clone)]
pub struct CbcScorer {
    n: u64,
    alpha: Alpha,
    gamma: Weights,
    /// `φ(m/N)` for `m < N`.
    phi: Vec<Dd>,
    theta: Vec<Dd>,
    gen: Vec<u64>,
    fast: Option<FastIndex>,
}

#[derive(Debug, Clone)]
struct FastIndex {
    /// `g^i mod N` for `i = 0..N-1`.
    powers: Vec<u64>,
    correlator: Correlator,
    /// Prepared transforms of `φ(g^i)` and of `φ(g^i)²`.
    phi_hat: Vec<CDd>,
    phi_sq_hat: Vec<CDd>,
}

impl CbcScorer {
    pub fn new(n: u64, alpha: Alpha, gamma: &Weights) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("N = {n} must be at least 2")));
        }
        let phi = dd::kernel_values(alpha, n, &KernelTable::new(alpha, n));
        let fast = if lattice::is_prime(n) && n > 2 {
            Some(FastIndex::new(n, &phi)?)
        } else {
            None
        };
        Ok(Self {
            n,
            alpha,
            gamma: gamma.clone(),
            phi,
            theta: vec![ONE; n as usize],
            gen: Vec::new(),
            fast,
        })
    }

    /// Scorer with the prefix `z_1, …, z_{s-1}` already applied.
    pub fn with_prefix(n: u64, prefix: &[u64], alpha: Alpha, gamma: &Weights) -> Result<Self> {
        gamma.check_dim(prefix.len() + 1)?;
        let mut s = Self::new(n, alpha, gamma)?;
        for &z in prefix {
            s.push(z)?;
        }
        Ok(s)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn prefix(&self) -> &[u64] {
        &self.gen
    }

    /// Appends `z_s` and folds its factor into `θ`.
    pub fn push(&mut self, z: u64) -> Result<()> {
        if z == 0 || z >= self.n {
            return Err(Error::InvalidParameter(format!("component {z} outside 1..{}", self.n)));
        }
        let j = self.gen.len();
        self.gamma.check_dim(j + 1)?;
        let g2 = self.gamma.get(j).powi(2);
        let n = self.n as u128;
        for (k, t) in self.theta.iter_mut().enumerate() {
            let m = ((k as u128 * z as u128) % n) as usize;
            let f = ONE + self.phi[m] * g2;
            *t = *t * f * f;
        }
        self.gen.push(z);
        Ok(())
    }

    /// `R²` of the current prefix.
    pub fn current_sq(&self) -> Result<f64> {
        let c = zero_dual_term_dd(self.alpha, &self.gamma, self.gen.len());
        criterion_sq(dd::sum(self.theta.iter().copied()) / self.n as f64, c)
    }

    /// `R_{N,s}(prefix, z)` for `z = 1, …, N-1` (entry `z - 1`).
    pub fn scores(&self, method: ScoreMethod) -> Result<Vec<f64>> {
        Ok(self.scores_sq(method)?.into_iter().map(f64::sqrt).collect())
    }

    /// Squared scores, clamped at zero.
    pub fn scores_sq(&self, method: ScoreMethod) -> Result<Vec<f64>> {
        let s = self.gen.len();
        self.gamma.check_dim(s + 1)?;
        let g2 = self.gamma.get(s).powi(2);
        let c = zero_dual_term_dd(self.alpha, &self.gamma, s + 1);
        let nf = self.n as f64;
        let (lin, quad) = match method {
            ScoreMethod::Naive => self.correlations_naive(),
            ScoreMethod::Fast => self.correlations_fast()?,
        };
        // k = 0 contributes θ_0 (1 + γ² φ(0))² to every candidate.
        let f0 = ONE + self.phi[0] * g2;
        let base = self.theta[0] * f0 * f0 + dd::sum(self.theta[1..].iter().copied());
        lin.iter()
            .zip(&quad)
            .map(|(&a, &b)| {
                let mean = (base + a * (2.0 * g2) + b * g2 * g2) / nf;
                criterion_sq(mean, c)
            })
            .collect()
    }

    /// `A(z) = Σ_{k≥1} θ_k φ(kz)`, `B(z) = Σ_{k≥1} θ_k φ(kz)²` by direct loops.
    fn correlations_naive(&self) -> (Vec<Dd>, Vec<Dd>) {
        let n = self.n;
        let mut lin = Vec::with_capacity(n as usize - 1);
        let mut quad = Vec::with_capacity(n as usize - 1);
        for z in 1..n {
            let (mut a, mut b) = (ZERO, ZERO);
            for k in 1..n {
                let m = ((k as u128 * z as u128) % n as u128) as usize;
                let tp = self.theta[k as usize] * self.phi[m];
                a += tp;
                b += tp * self.phi[m];
            }
            lin.push(a);
            quad.push(b);
        }
        (lin, quad)
    }

    /// Same sums via `k = g^i`, `z = g^j`:
    /// `A(g^j) = Σ_i θ(g^i) φ(g^{i+j})`, a circular cross-correlation.
    fn correlations_fast(&self) -> Result<(Vec<Dd>, Vec<Dd>)> {
        let fast = self.fast.as_ref().ok_or(Error::NotPrime(self.n))?;
        let len = (self.n - 1) as usize;
        let x: Vec<Dd> = fast.powers.iter().map(|&k| self.theta[k as usize]).collect();
        let x_hat = fast.correlator.transform(&x);
        let lin_perm = fast.correlator.correlate(&x_hat, &fast.phi_hat);
        let quad_perm = fast.correlator.correlate(&x_hat, &fast.phi_sq_hat);
        let mut lin = vec![ZERO; len];
        let mut quad = vec![ZERO; len];
        for (j, &z) in fast.powers.iter().enumerate() {
            lin[(z - 1) as usize] = lin_perm[j];
            quad[(z - 1) as usize] = quad_perm[j];
        }
        Ok((lin, quad))
    }
}

impl FastIndex {
    fn new(n: u64, phi: &[Dd]) -> Result<Self> {
        let g = lattice::primitive_root(n)?;
        let len = (n - 1) as usize;
        let mut powers = Vec::with_capacity(len);
        let mut x = 1u64;
        for _ in 0..len {
            powers.push(x);
            x = ((x as u128 * g as u128) % n as u128) as u64;
        }
        let correlator = Correlator::new(len);
        let y: Vec<Dd> = powers.iter().map(|&m| phi[m as usize]).collect();
        let y_sq: Vec<Dd> = y.iter().map(|&v| v * v).collect();
        Ok(Self {
            phi_hat: correlator.prepare(&y),
            phi_sq_hat: correlator.prepare(&y_sq),
            powers,
            correlator,
        })
    }
}

/// `R_{N,s}(z_prefix, z_s)` for every `z_s ∈ {1, …, N-1}`; entry `z_s - 1`.
///
/// Uses the FFT path, which requires `N` prime.
pub fn candidate_scores(n: u64, z_prefix: &[u64], alpha: Alpha, gamma: &Weights) -> Result<Vec<f64>> {
    candidate_scores_with(n, z_prefix, alpha, gamma, ScoreMethod::Fast)
}

pub fn candidate_scores_with(
    n: u64,
    z_prefix: &[u64],
    alpha: Alpha,
    gamma: &Weights,
    method: ScoreMethod,
) -> Result<Vec<f64>> {
    if method == ScoreMethod::Fast && !lattice::is_prime(n) {
        return Err(Error::NotPrime(n));
    }
    CbcScorer::with_prefix(n, z_prefix, alpha, gamma)?.scores(method)
}

/// `⌈τ (N-1)⌉`, at least 1 and at most `N - 1`.
///
/// The product `τ (N-1)` is rounded down by `1e-9` first, so a `τ` whose
/// decimal value makes the product an integer is not pushed to the next one
/// by binary representation error.
pub fn candidate_set_size(n: u64, tau: f64) -> usize {
    let m = (n - 1) as f64;
    let raw = (tau * m - 1e-9).ceil();
    (raw.max(1.0) as usize).min((n - 1) as usize)
}

/// The `⌈τ(N-1)⌉` best candidates, ordered by ascending score and then by
/// ascending integer value. `scores[i]` belongs to candidate `i + 1`.
pub fn select_candidate_set(scores: &[f64], tau: f64) -> Vec<u64> {
    let n = scores.len() as u64 + 1;
    let size = candidate_set_size(n, tau);
    let mut order: Vec<u64> = (1..n).collect();
    order.sort_by(|&a, &b| {
        scores[(a - 1) as usize]
            .total_cmp(&scores[(b - 1) as usize])
            .then(a.cmp(&b))
    });
    order.truncate(size);
    order
}

/// One run of the randomized CBC construction.
///
/// Random draws come from a ChaCha8 stream seeded with `cfg.seed`, consumed in
/// this order: one `u64`-range draw selecting `N` from the sorted primes in
/// `(⌈M/2⌉, M]`, then one draw per step `s = 2, …, d` selecting an index into
/// the ordered candidate set `Z_s`.
pub fn randomized_cbc(cfg: &CbcConfig) -> Result<CbcResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    randomized_cbc_with_rng(cfg, &mut rng)
}

pub(crate) fn randomized_cbc_with_rng(cfg: &CbcConfig, rng: &mut ChaCha8Rng) -> Result<CbcResult> {
    cfg.validate()?;
    let primes = lattice::primes_in_range(cfg.m)?;
    let n = primes[rng.gen_range(0..primes.len() as u64) as usize];
    let mut scorer = CbcScorer::new(n, cfg.alpha, &cfg.gamma)?;
    scorer.push(1)?;
    let mut per_step = vec![scorer.current_sq()?.sqrt()];
    let mut sizes = vec![1usize];
    for _s in 2..=cfg.d {
        let scores = scorer.scores(ScoreMethod::Fast)?;
        let set = select_candidate_set(&scores, cfg.tau);
        let pick = set[rng.gen_range(0..set.len() as u64) as usize];
        per_step.push(scores[(pick - 1) as usize]);
        sizes.push(set.len());
        scorer.push(pick)?;
    }
    Ok(CbcResult {
        rule: LatticeRule::new(n, scorer.prefix().to_vec())?,
        per_step_scores: per_step,
        candidate_set_sizes: sizes,
        seed: cfg.seed,
        tau: cfg.tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn a(v: f64) -> Alpha {
        Alpha::new(v).unwrap()
    }

    fn w(v: &[f64]) -> Weights {
        Weights::new(v.to_vec()).unwrap()
    }

    fn rule(n: u64, z: &[u64]) -> LatticeRule {
        LatticeRule::new(n, z.to_vec()).unwrap()
    }

    /// Pairs `(h, ℓ)` with `|h_j|, |ℓ_j| ≤ K` enumerated literally (d = 1, 2).
    fn literal_double_sum(r: &LatticeRule, alpha: Alpha, gamma: &Weights, k: i64) -> f64 {
        let d = r.dim();
        let boxed: Vec<Vec<i64>> = match d {
            1 => (-k..=k).map(|h| vec![h]).collect(),
            2 => (-k..=k).flat_map(|a| (-k..=k).map(move |b| vec![a, b])).collect(),
            _ => unreachable!(),
        };
        let dual: Vec<&Vec<i64>> = boxed
            .iter()
            .filter(|l| l.iter().any(|&v| v != 0) && r.dual_contains(l).unwrap())
            .collect();
        let mut sum = 0.0;
        for h in &boxed {
            let wh = korobov::inv_r_squared(h, alpha, gamma).unwrap();
            for l in &dual {
                let hl: Vec<i64> = h.iter().zip(l.iter()).map(|(x, y)| x + y).collect();
                sum += wh * korobov::inv_r_squared(&hl, alpha, gamma).unwrap();
            }
        }
        sum
    }

    #[test]
    fn zero_weights_give_zero() {
        let g = w(&[0.0, 0.0, 0.0]);
        let r = rule(7, &[1, 3, 2]);
        assert_eq!(criterion_formula(&r, a(1.0), &g).unwrap(), 0.0);
        assert_eq!(criterion_direct(&r, a(1.0), &g, 50).unwrap().value(), 0.0);
        let s = candidate_scores(7, &[1, 3], a(2.0), &g).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direct_agrees_with_literal_sum() {
        // Residue grouping versus the literal (h, ℓ) enumeration: the two
        // truncations differ, but both converge to R² from below.
        let r = rule(7, &[1, 3]);
        let g = w(&[1.0, 0.5]);
        let alpha = a(2.0);
        let lit = literal_double_sum(&r, alpha, &g, 60);
        let direct = criterion_direct(&r, alpha, &g, 60).unwrap();
        let formula = criterion_formula_sq(&r, alpha, &g).unwrap();
        assert!((lit - formula).abs() <= direct.tail_bound + 1e-12);
        assert!((direct.value_sq - formula).abs() <= direct.tail_bound + 1e-12);
        assert!(lit <= formula + 1e-12 && direct.value_sq <= formula + 1e-12);
    }

    #[test]
    fn formula_matches_direct_1d() {
        let r = rule(5, &[1]);
        let g = w(&[1.0]);
        let direct = criterion_direct(&r, a(1.0), &g, 10_000).unwrap();
        let formula = criterion_formula(&r, a(1.0), &g).unwrap();
        let tol_sq = 1e-6 + direct.tail_bound;
        assert!((direct.value_sq - formula.powi(2)).abs() <= tol_sq);
    }

    #[test]
    fn formula_matches_direct_2d() {
        let r = rule(7, &[1, 3]);
        let g = w(&[1.0, 0.5]);
        let direct = criterion_direct(&r, a(1.0), &g, 2000).unwrap();
        let formula = criterion_formula_sq(&r, a(1.0), &g).unwrap();
        assert!((direct.value_sq - formula).abs() <= 1e-6 + direct.tail_bound);
    }

    #[test]
    fn direct_monotone_in_radius() {
        let r = rule(11, &[1, 4, 7]);
        let g = w(&[1.0, 0.7, 0.3]);
        let mut prev = 0.0;
        for k in [0, 1, 2, 5, 10, 40, 100] {
            let v = criterion_direct(&r, a(1.0), &g, k).unwrap().value_sq;
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn direct_rejects_infeasible() {
        let r = rule(40_009, &[1]);
        assert!(matches!(
            criterion_direct(&r, a(1.0), &w(&[1.0]), 10),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn non_integer_alpha_formula_matches_direct() {
        let r = rule(11, &[1, 5]);
        let g = w(&[0.9, 0.6]);
        let alpha = a(1.5);
        let direct = criterion_direct(&r, alpha, &g, 3000).unwrap();
        let formula = criterion_formula_sq(&r, alpha, &g).unwrap();
        // The series-backed kernel table carries its own truncation error.
        assert!((direct.value_sq - formula).abs() <= 1e-6 + direct.tail_bound);
    }

    #[test]
    fn fast_scores_match_naive() {
        for &(n, alpha) in &[(7u64, 1.0), (31, 1.0), (127, 2.0), (31, 3.0)] {
            let g = w(&[1.0, 0.6, 0.4]);
            let prefix = [1, (n / 3).max(1)];
            let fast = candidate_scores_with(n, &prefix, a(alpha), &g, ScoreMethod::Fast).unwrap();
            let naive = candidate_scores_with(n, &prefix, a(alpha), &g, ScoreMethod::Naive).unwrap();
            for (x, y) in fast.iter().zip(&naive) {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-300) + 1e-14, "N={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn scores_match_formula() {
        let g = w(&[1.0, 0.5, 0.25]);
        let scores = candidate_scores(13, &[1, 5], a(1.0), &g).unwrap();
        for z in 1..13u64 {
            let f = criterion_formula(&rule(13, &[1, 5, z]), a(1.0), &g).unwrap();
            assert_abs_diff_eq!(scores[(z - 1) as usize], f, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_component_scores_constant() {
        for n in [7u64, 31, 101] {
            let g = w(&[0.8]);
            let s = candidate_scores(n, &[], a(1.0), &g).unwrap();
            for v in &s {
                assert!((v - s[0]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn fast_requires_prime() {
        assert_eq!(candidate_scores(15, &[1], a(1.0), &w(&[1.0, 1.0])), Err(Error::NotPrime(15)));
        assert!(candidate_scores_with(15, &[1], a(1.0), &w(&[1.0, 1.0]), ScoreMethod::Naive).is_ok());
    }

    #[test]
    fn candidate_set_examples() {
        assert_eq!(candidate_set_size(7, 0.5), 3);
        assert_eq!(candidate_set_size(11, 0.9), 9);
        assert_eq!(candidate_set_size(11, 0.91), 10);
        assert_eq!(candidate_set_size(3, 0.01), 1);
        assert_eq!(select_candidate_set(&[1.0; 6], 0.5), vec![1, 2, 3]);
        assert_eq!(select_candidate_set(&[3.0, 1.0, 2.0, 1.0, 5.0, 0.5], 0.5), vec![6, 2, 4]);
    }

    proptest! {
        #[test]
        fn selection_matches_full_sort(scores in proptest::collection::vec(0u8..6, 2..60), tau in 0.01f64..0.99) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let set = select_candidate_set(&scores, tau);
            let mut pairs: Vec<(f64, u64)> = scores.iter().enumerate().map(|(i, &s)| (s, i as u64 + 1)).collect();
            pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let expected: Vec<u64> = pairs.iter().take(set.len()).map(|p| p.1).collect();
            prop_assert_eq!(&set, &expected);
            prop_assert_eq!(set.len(), ((tau * (scores.len() as f64)) - 1e-9).ceil().max(1.0) as usize);
            let worst_in = set.iter().map(|&z| scores[(z - 1) as usize]).fold(f64::MIN, f64::max);
            for z in 1..=scores.len() as u64 {
                if !set.contains(&z) {
                    prop_assert!(scores[(z - 1) as usize] >= worst_in);
                }
            }
        }

        #[test]
        fn unit_multiple_invariance(c in 1u64..31, z2 in 1u64..31, z3 in 1u64..31) {
            let n = 31;
            let g = w(&[1.0, 0.5, 0.3]);
            let base = criterion_formula(&rule(n, &[1, z2, z3]), a(1.0), &g).unwrap();
            let scaled = criterion_formula(&rule(n, &[c, c * z2 % n, c * z3 % n]), a(1.0), &g).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-10);
        }
    }

    #[test]
    fn cbc_basic_contract() {
        let cfg = CbcConfig {
            m: 10,
            d: 2,
            alpha: a(1.0),
            gamma: w(&[1.0, 0.5]),
            tau: 0.5,
            seed: 42,
        };
        let r1 = randomized_cbc(&cfg).unwrap();
        let r2 = randomized_cbc(&cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.rule.n_points(), 7);
        assert_eq!(r1.rule.gen()[0], 1);
        // Exhaustive scoring of the six candidates.
        let mut scored: Vec<(f64, u64)> = (1..7u64)
            .map(|z| (criterion_formula(&rule(7, &[1, z]), a(1.0), &cfg.gamma).unwrap(), z))
            .collect();
        scored.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let allowed: Vec<u64> = scored.iter().take(3).map(|p| p.1).collect();
        assert!(allowed.contains(&r1.rule.gen()[1]));
        assert_eq!(r1.candidate_set_sizes, vec![1, 3]);
    }

    #[test]
    fn cbc_result_json() {
        let cfg = CbcConfig {
            m: 50,
            d: 3,
            alpha: a(2.0),
            gamma: w(&[1.0, 0.5, 0.25]),
            tau: 0.25,
            seed: 9,
        };
        let r = randomized_cbc(&cfg).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.starts_with(r#"{"N":"#));
        for key in ["\"z\":", "\"scores\":", "\"seed\":9", "\"tau\":0.25"] {
            assert!(s.contains(key), "{s}");
        }
        let back: CbcResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn cbc_scores_are_formula_values() {
        let cfg = CbcConfig {
            m: 200,
            d: 4,
            alpha: a(1.0),
            gamma: w(&[1.0, 0.8, 0.5, 0.3]),
            tau: 0.5,
            seed: 1234,
        };
        let r = randomized_cbc(&cfg).unwrap();
        for s in 1..=4 {
            let prefix = LatticeRule::new(r.rule.n_points(), r.rule.gen()[..s].to_vec()).unwrap();
            let f = criterion_formula(&prefix, cfg.alpha, &cfg.gamma).unwrap();
            assert_abs_diff_eq!(r.per_step_scores[s - 1], f, epsilon = 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = CbcConfig {
            m: 10,
            d: 2,
            alpha: a(1.0),
            gamma: w(&[1.0, 0.5]),
            tau: 1.5,
            seed: 0,
        };
        assert!(randomized_cbc(&cfg).is_err());
        cfg.tau = 0.5;
        cfg.m = 3;
        assert!(randomized_cbc(&cfg).is_err());
        cfg.m = 10;
        cfg.d = 3;
        assert!(randomized_cbc(&cfg).is_err());
    }
}
