//! Test functions with exactly known Fourier coefficients.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::korobov::{self, Alpha, ExtendedReal, Weights};

/// A finite Fourier series `Σ_h f̂(h) e^{2πi h·x}` over `d`-dimensional
/// integer frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct FourierPolynomial {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    h: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    dim: usize,
    terms: Vec<TermRepr>,
}

impl TryFrom<PolyRepr> for FourierPolynomial {
    type Error = Error;

    fn try_from(r: PolyRepr) -> Result<Self> {
        if r.dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        let mut p = FourierPolynomial::zero(r.dim);
        for t in r.terms {
            if t.h.len() != r.dim {
                return Err(Error::DimensionMismatch {
                    expected: r.dim,
                    got: t.h.len(),
                });
            }
            p.add(t.h, Complex64::new(t.re, t.im));
        }
        Ok(p)
    }
}

impl From<FourierPolynomial> for PolyRepr {
    fn from(p: FourierPolynomial) -> Self {
        PolyRepr {
            dim: p.dim,
            terms: p
                .coeffs
                .into_iter()
                .map(|(h, c)| TermRepr { h, re: c.re, im: c.im })
                .collect(),
        }
    }
}

impl FourierPolynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Self::zero(dim);
        p.insert(vec![0; dim], c);
        p
    }

    /// The single mode `e^{2πi h·x}`.
    pub fn monomial(h: Vec<i64>) -> Self {
        let mut p = Self::zero(h.len());
        p.insert(h, Complex64::new(1.0, 0.0));
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sets `f̂(h) = c`, replacing any previous value.
    ///
    /// Panics if `h` has the wrong dimension.
    pub fn insert(&mut self, h: Vec<i64>, c: Complex64) {
        assert_eq!(h.len(), self.dim, "multi-index dimension");
        self.coeffs.insert(h, c);
    }

    /// Adds `c` to `f̂(h)`.
    pub fn add(&mut self, h: Vec<i64>, c: Complex64) {
        assert_eq!(h.len(), self.dim, "multi-index dimension");
        *self.coeffs.entry(h).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn coeff(&self, h: &[i64]) -> Complex64 {
        self.coeffs.get(h).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `Σ |f̂(h)|²`, the squared `L_2` norm.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.coeffs.values_mut() {
            *c *= s;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim, "point dimension");
        self.coeffs
            .iter()
            .map(|(h, c)| c * phase(h, x))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// `e^{2πi h·x}`.
pub fn phase(h: &[i64], x: &[f64]) -> Complex64 {
    let mut t = 0.0;
    for (&hj, &xj) in h.iter().zip(x) {
        t += hj as f64 * xj;
    }
    // Reduce before scaling by 2π to keep the argument small.
    let t = t - t.round();
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// Anything that can be sampled pointwise on `[0,1)^d`.
pub trait Evaluable: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Complex64;
}

impl Evaluable for FourierPolynomial {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Complex64 {
        FourierPolynomial::eval(self, x)
    }
}

/// Wraps a closure as an [`Evaluable`].
pub struct FnEvaluable<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Complex64 + Sync> FnEvaluable<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Complex64 + Sync> Evaluable for FnEvaluable<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Complex64 {
        (self.f)(x)
    }
}

/// `f̂(h) = 1/r²_{α,γ}(h)`, evaluated in closed form through Bernoulli
/// polynomials.
#[derive(Debug, Clone)]
pub struct KernelFunction {
    alpha: u32,
    gamma: Weights,
    dim: usize,
}

impl KernelFunction {
    /// Requires an integer α with a hard-coded Bernoulli polynomial.
    pub fn new(alpha: Alpha, gamma: Weights, dim: usize) -> Result<Self> {
        gamma.check_dim(dim)?;
        match alpha.integer() {
            Some(a) if a <= korobov::MAX_EXACT_ALPHA => Ok(Self { alpha: a, gamma, dim }),
            _ => Err(Error::UnsupportedAlpha(alpha.value())),
        }
    }

    pub fn alpha(&self) -> Alpha {
        Alpha::new(self.alpha as f64).expect("integer alpha >= 1")
    }

    pub fn gamma(&self) -> &Weights {
        &self.gamma
    }

    /// `∏_j (1 + γ_j² φ_α(x_j))`, which equals `K_{d,α,γ}(x, 0)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let scale = korobov::bernoulli_kernel_scale(self.alpha);
        x.iter()
            .zip(self.gamma.as_slice())
            .map(|(&xj, &g)| {
                let b = korobov::bernoulli_even(self.alpha, xj - xj.floor()).expect("supported");
                1.0 + g * g * scale * b
            })
            .product()
    }

    /// The coefficients `1/r²(h)` on the box `|h_j| ≤ radius`.
    pub fn truncated(&self, radius: i64) -> FourierPolynomial {
        let alpha = self.alpha();
        let per_coord: Vec<Vec<(i64, f64)>> = (0..self.dim)
            .map(|j| {
                (-radius..=radius)
                    .map(|h| (h, korobov::inv_r_sq_1d(h, alpha, self.gamma.get(j))))
                    .filter(|&(_, w)| w != 0.0)
                    .collect()
            })
            .collect();
        let mut out = FourierPolynomial::zero(self.dim);
        let mut idx = vec![0usize; self.dim];
        'outer: loop {
            let mut h = Vec::with_capacity(self.dim);
            let mut c = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                let (hj, wj) = per_coord[j][i];
                h.push(hj);
                c *= wj;
            }
            out.insert(h, Complex64::new(c, 0.0));
            for j in (0..self.dim).rev() {
                idx[j] += 1;
                if idx[j] < per_coord[j].len() {
                    continue 'outer;
                }
                idx[j] = 0;
            }
            break;
        }
        out
    }

    /// Bound on `sup_x |K(x) - truncated(radius)(x)|`, namely
    /// `∏_j (1 + 2γ_j² ζ(2α)) - ∏_j (1 + 2γ_j² Σ_{h≤radius} h^{-2α})`.
    pub fn truncation_bound(&self, radius: i64) -> f64 {
        let s = 2.0 * self.alpha as f64;
        let z = korobov::zeta(s).expect("s >= 2");
        let partial: f64 = (1..=radius).rev().map(|h| (h as f64).powf(-s)).sum();
        let full: f64 = self.gamma.as_slice()[..self.dim]
            .iter()
            .map(|g| 1.0 + 2.0 * g * g * z)
            .product();
        let trunc: f64 = self.gamma.as_slice()[..self.dim]
            .iter()
            .map(|g| 1.0 + 2.0 * g * g * partial)
            .product();
        (full - trunc).max(0.0)
    }
}

impl Evaluable for KernelFunction {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.value(x), 0.0)
    }
}

/// Random coefficients on `support`, normalised to unit Korobov norm.
pub fn random_unit_norm_poly(
    seed: u64,
    support: &[Vec<i64>],
    alpha: Alpha,
    gamma: &Weights,
) -> Result<FourierPolynomial> {
    let first = support
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty support".into()))?;
    let dim = first.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = FourierPolynomial::zero(dim);
    for h in support {
        if h.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.len(),
            });
        }
        if !korobov::r_squared(h, alpha, gamma)?.is_finite() {
            return Err(Error::InvalidParameter(format!("r({h:?}) is infinite")));
        }
        let (re, im): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        p.insert(h.clone(), Complex64::new(re, im));
    }
    let norm_sq = match korobov::korobov_norm_sq(&p, alpha, gamma)? {
        ExtendedReal::Finite(v) if v > 0.0 => v,
        _ => return Err(Error::InvalidParameter("degenerate random polynomial".into())),
    };
    p.scale(1.0 / norm_sq.sqrt());
    Ok(p)
}

/// The set `{(h_1, h_2, 0, …, 0) : |h_1|, |h_2| ≤ ⌊√M⌋}`.
pub fn fooling_support(m: u64, d: usize) -> Vec<Vec<i64>> {
    let s = isqrt(m) as i64;
    let mut out = Vec::with_capacity(((2 * s + 1) * (2 * s + 1)) as usize);
    for h1 in -s..=s {
        for h2 in -s..=s {
            let mut h = vec![0i64; d];
            h[0] = h1;
            h[1] = h2;
            out.push(h);
        }
    }
    out
}

/// Unit-norm polynomial with `p̂(h) = (r²(h) |P_d(M)|)^{-1/2}` on `P_d(M)`.
pub fn fooling_function(m: u64, d: usize, alpha: Alpha, gamma: &Weights) -> Result<FourierPolynomial> {
    if d < 2 {
        return Err(Error::InvalidParameter("fooling function needs d >= 2".into()));
    }
    if m < 4 {
        return Err(Error::InvalidParameter("fooling function needs M >= 4".into()));
    }
    gamma.check_dim(d)?;
    if gamma.get(0) == 0.0 || gamma.get(1) == 0.0 {
        return Err(Error::InvalidParameter("gamma_1 and gamma_2 must be positive".into()));
    }
    let support = fooling_support(m, d);
    let count = support.len() as f64;
    let mut p = FourierPolynomial::zero(d);
    for h in support {
        let r2 = korobov::r_squared(&h, alpha, gamma)?.to_f64();
        p.insert(h, Complex64::new(1.0 / (r2 * count).sqrt(), 0.0));
    }
    Ok(p)
}

/// `⌊√n⌋` in integer arithmetic.
pub fn isqrt(n: u64) -> u64 {
    let mut s = (n as f64).sqrt() as u64;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}
