//! The randomized lattice approximation `A^rand_{N,z,Δ,A_d(T)}` and exact
//! error accounting for trigonometric polynomials.
//!
//! For a finite-support `f` every quantity is computed exactly through the
//! aliasing identity
//! `f̂_{N,z,Δ}(h) - f̂(h) = Σ_{ℓ ∈ P⊥ \ {0}} f̂(h + ℓ) e^{2πi ℓ·Δ}`:
//! support frequencies are bucketed by residue `m · z mod N`, and frequencies
//! in the same bucket are exactly the ones that alias onto each other.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cbc::{randomized_cbc, CbcConfig};
use crate::error::{Error, Result};
use crate::indexset::{build_index_set, IndexSet, DEFAULT_CAP};
use crate::lattice::{LatticeRule, ShiftedLatticeRule};
use crate::testfns::{phase, Evaluable, FourierPolynomial};

/// Where an [`Approximant`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(rename = "N")]
    pub n: u64,
    pub z: Vec<u64>,
    pub shift: Vec<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "T")]
    pub threshold: f64,
}

/// Estimated coefficients on an index set; `coeffs[i]` belongs to the `i`-th
/// member of `index_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ApproximantRepr", into = "ApproximantRepr")]
pub struct Approximant {
    pub index_set: IndexSet,
    pub coeffs: Vec<Complex64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    h: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct ApproximantRepr {
    dim: usize,
    provenance: Provenance,
    coeffs: Vec<CoeffEntry>,
}

impl From<Approximant> for ApproximantRepr {
    fn from(a: Approximant) -> Self {
        Self {
            dim: a.index_set.dim(),
            coeffs: a
                .index_set
                .iter()
                .zip(&a.coeffs)
                .map(|(h, c)| CoeffEntry {
                    h: h.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
            provenance: a.provenance,
        }
    }
}

impl TryFrom<ApproximantRepr> for Approximant {
    type Error = Error;
    fn try_from(r: ApproximantRepr) -> Result<Self> {
        let (members, coeffs) = r
            .coeffs
            .into_iter()
            .map(|e| (e.h, Complex64::new(e.re, e.im)))
            .unzip();
        Ok(Self {
            index_set: IndexSet::from_members(r.dim, r.provenance.threshold, members)?,
            coeffs,
            provenance: r.provenance,
        })
    }
}

impl Approximant {
    pub fn dim(&self) -> usize {
        self.index_set.dim()
    }

    pub fn coeff(&self, h: &[i64]) -> Option<Complex64> {
        let i = self
            .index_set
            .members()
            .binary_search_by(|m| m.as_slice().cmp(h))
            .ok()?;
        Some(self.coeffs[i])
    }

    /// `Σ_{h ∈ A} f̂_{N,z,Δ}(h) e^{2πi h·x}`.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.index_set
            .iter()
            .zip(&self.coeffs)
            .map(|(h, c)| c * phase(h, x))
            .sum()
    }

    pub fn to_polynomial(&self) -> FourierPolynomial {
        let mut p = FourierPolynomial::zero(self.dim());
        for (h, &c) in self.index_set.iter().zip(&self.coeffs) {
            p.insert(h.clone(), c);
        }
        p
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("approximant serializes")
    }
}

/// `f({k z / N + Δ})` for `k = 0, …, N-1`.
pub fn sample_function<F: Evaluable + ?Sized>(f: &F, rule: &ShiftedLatticeRule) -> Result<Vec<Complex64>> {
    if f.dim() != rule.rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.rule.dim(),
            got: f.dim(),
        });
    }
    Ok((0..rule.rule.n_points())
        .into_par_iter()
        .map(|k| f.eval(&rule.point(k)))
        .collect())
}

/// `f̂_{N,z,Δ}(h) = e^{-2πi h·Δ} · DFT(samples)[h·z mod N] / N` for every `h ∈ A`.
pub fn estimate_coeffs(samples: &[Complex64], rule: &ShiftedLatticeRule, a: &IndexSet) -> Result<Approximant> {
    let n = rule.rule.n_points();
    if samples.len() as u64 != n {
        return Err(Error::InvalidParameter(format!(
            "{} samples for a rule with N = {n}",
            samples.len()
        )));
    }
    if a.dim() != rule.rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.rule.dim(),
            got: a.dim(),
        });
    }
    let mut spectrum = samples.to_vec();
    FftPlanner::new().plan_fft_forward(n as usize).process(&mut spectrum);
    let inv_n = 1.0 / n as f64;
    let coeffs = a
        .members()
        .par_iter()
        .map(|h| {
            let bin = rule.rule.residue(h) as usize;
            spectrum[bin] * inv_n * phase(h, &rule.shift).conj()
        })
        .collect();
    Ok(Approximant {
        index_set: a.clone(),
        coeffs,
        provenance: Provenance {
            n,
            z: rule.rule.gen().to_vec(),
            shift: rule.shift.clone(),
            seed: None,
            threshold: a.threshold(),
        },
    })
}

/// `Σ_{ℓ ∈ P⊥ \ {0}} f̂(h + ℓ) e^{2πi ℓ·Δ}`, scanning the support of `f`.
///
/// This is the aliasing error `f̂_{N,z,Δ}(h) - f̂(h)` of the estimate.
pub fn alias_expansion(f: &FourierPolynomial, rule: &ShiftedLatticeRule, h: &[i64]) -> Result<Complex64> {
    if f.dim() != rule.rule.dim() || h.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.rule.dim(),
            got: if h.len() != f.dim() { h.len() } else { f.dim() },
        });
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let mut ell = vec![0i64; h.len()];
    for (m, c) in f.terms() {
        if m.as_slice() == h {
            continue;
        }
        for ((l, &mj), &hj) in ell.iter_mut().zip(m).zip(h) {
            *l = mj - hj;
        }
        if rule.rule.dual_contains(&ell)? {
            sum += c * phase(&ell, &rule.shift);
        }
    }
    Ok(sum)
}

/// The shift `Δ` paired with `seed`: `d` uniform draws from stream 1 of the
/// ChaCha8 generator seeded with `seed` (stream 0 drives the construction).
pub fn draw_shift(seed: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..d).map(|_| rng.gen::<f64>()).collect()
}

/// Runs the randomized construction, draws `Δ`, builds `A_d(T)`, samples `f`
/// and estimates its coefficients.
pub fn approximate<F: Evaluable + ?Sized>(f: &F, cfg: &CbcConfig, t: f64) -> Result<Approximant> {
    let a = build_index_set(cfg.d, cfg.alpha, &cfg.gamma, t, DEFAULT_CAP)?;
    approximate_on(f, cfg, &a)
}

/// As [`approximate`] with a prebuilt index set.
pub fn approximate_on<F: Evaluable + ?Sized>(f: &F, cfg: &CbcConfig, a: &IndexSet) -> Result<Approximant> {
    let rule = draw_shifted_rule(cfg)?;
    let samples = sample_function(f, &rule)?;
    let mut out = estimate_coeffs(&samples, &rule, a)?;
    out.provenance.seed = Some(cfg.seed);
    Ok(out)
}

/// The randomized rule and shift for `cfg.seed`.
pub fn draw_shifted_rule(cfg: &CbcConfig) -> Result<ShiftedLatticeRule> {
    let result = randomized_cbc(cfg)?;
    ShiftedLatticeRule::new(result.rule, draw_shift(cfg.seed, cfg.d))
}

/// Support of `f` grouped by residue `m · z mod N`.
fn residue_buckets<'a>(f: &'a FourierPolynomial, rule: &LatticeRule) -> HashMap<u64, Vec<(&'a Vec<i64>, Complex64)>> {
    let mut buckets: HashMap<u64, Vec<(&Vec<i64>, Complex64)>> = HashMap::new();
    for (m, &c) in f.terms() {
        buckets.entry(rule.residue(m)).or_default().push((m, c));
    }
    buckets
}

fn check_dims(f: &FourierPolynomial, rule: &LatticeRule, a: &IndexSet) -> Result<()> {
    for got in [f.dim(), a.dim()] {
        if got != rule.dim() {
            return Err(Error::DimensionMismatch {
                expected: rule.dim(),
                got,
            });
        }
    }
    Ok(())
}

/// `Σ_{h ∉ A} |f̂(h)|²` over the support.
fn out_of_set_mass(f: &FourierPolynomial, a: &IndexSet) -> f64 {
    f.terms()
        .filter(|(m, _)| !a.contains(m))
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// `‖f - A(f)‖²_{L2} = Σ_{h ∉ A} |f̂(h)|² + Σ_{h ∈ A} |f̂(h) - f̂_{N,z,Δ}(h)|²`.
pub fn exact_sq_error_fixed(f: &FourierPolynomial, rule: &ShiftedLatticeRule, a: &IndexSet) -> Result<f64> {
    check_dims(f, &rule.rule, a)?;
    // B(r) = Σ_{m·z ≡ r} f̂(m) e^{2πi m·Δ}; then |alias(h)| = |B(h·z) - f̂(h) e^{2πi h·Δ}|.
    let mut phased: HashMap<u64, Complex64> = HashMap::new();
    for (m, &c) in f.terms() {
        *phased.entry(rule.rule.residue(m)).or_default() += c * phase(m, &rule.shift);
    }
    let mut in_set = 0.0;
    for h in a.iter() {
        if let Some(&b) = phased.get(&rule.rule.residue(h)) {
            let own = f.coeff(h);
            let alias = if own == Complex64::new(0.0, 0.0) {
                b
            } else {
                b - own * phase(h, &rule.shift)
            };
            in_set += alias.norm_sqr();
        }
    }
    Ok(out_of_set_mass(f, a) + in_set)
}

/// `E_Δ ‖f - A(f)‖² = Σ_{h ∉ A} |f̂(h)|² + Σ_{h ∈ A} Σ_{ℓ ∈ P⊥ \ {0}} |f̂(h + ℓ)|²`.
pub fn exact_expected_sq_error_given_rule(f: &FourierPolynomial, rule: &LatticeRule, a: &IndexSet) -> Result<f64> {
    check_dims(f, rule, a)?;
    let buckets = residue_buckets(f, rule);
    let mut in_set = 0.0;
    for h in a.iter() {
        if let Some(bucket) = buckets.get(&rule.residue(h)) {
            in_set += bucket
                .iter()
                .filter(|(m, _)| m.as_slice() != h.as_slice())
                .map(|(_, c)| c.norm_sqr())
                .sum::<f64>();
        }
    }
    Ok(out_of_set_mass(f, a) + in_set)
}

/// Per-trial outcome of [`rmse_trials`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub sq_error: f64,
}

/// Summary of [`rmse_monte_carlo`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub n_mean: f64,
    pub trials: usize,
}

/// Seed of trial `t`: the `t`-th word of stream 2 of the generator seeded
/// with `seed`, so a longer run reproduces the trials of a shorter one.
pub fn trial_seeds(seed: u64, n_trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..n_trials).map(|_| rng.gen::<u64>()).collect()
}

/// Exact `‖f - A(f)‖²` for `n_trials` independent draws of `(N, z, Δ)`.
pub fn rmse_trials(f: &FourierPolynomial, cfg: &CbcConfig, a: &IndexSet, n_trials: usize) -> Result<Vec<Trial>> {
    trial_seeds(cfg.seed, n_trials)
        .into_par_iter()
        .map(|seed| {
            let rule = draw_shifted_rule(&cfg.with_seed(seed))?;
            Ok(Trial {
                seed,
                n: rule.rule.n_points(),
                sq_error: exact_sq_error_fixed(f, &rule, a)?,
            })
        })
        .collect()
}

/// Mean and standard error of the exact squared error over `n_trials` draws.
pub fn rmse_monte_carlo(f: &FourierPolynomial, cfg: &CbcConfig, t: f64, n_trials: usize) -> Result<MonteCarloEstimate> {
    let a = build_index_set(cfg.d, cfg.alpha, &cfg.gamma, t, DEFAULT_CAP)?;
    rmse_monte_carlo_on(f, cfg, &a, n_trials)
}

pub fn rmse_monte_carlo_on(
    f: &FourierPolynomial,
    cfg: &CbcConfig,
    a: &IndexSet,
    n_trials: usize,
) -> Result<MonteCarloEstimate> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be positive".into()));
    }
    let trials = rmse_trials(f, cfg, a, n_trials)?;
    let errors: Vec<f64> = trials.iter().map(|t| t.sq_error).collect();
    let (mean, std_error) = mean_and_std_error(&errors);
    Ok(MonteCarloEstimate {
        mean_sq_error: mean,
        std_error,
        n_mean: trials.iter().map(|t| t.n as f64).sum::<f64>() / n_trials as f64,
        trials: n_trials,
    })
}

/// Sample mean and its standard error (zero for a single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
