//! Rank-1 lattice point sets and their dual lattices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testfns::phase;

/// A rank-1 lattice rule: `N` points `{k z / N}` for `k = 0, …, N-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeRule {
    n: u64,
    gen: Vec<u64>,
}

impl LatticeRule {
    pub fn new(n: u64, gen: Vec<u64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("N = {n} must be at least 2")));
        }
        if n > i64::MAX as u64 / 4 {
            return Err(Error::InvalidParameter(format!("N = {n} too large")));
        }
        if gen.is_empty() {
            return Err(Error::InvalidParameter("generating vector is empty".into()));
        }
        if let Some(&bad) = gen.iter().find(|&&z| z == 0 || z >= n) {
            return Err(Error::InvalidParameter(format!(
                "generator component {bad} outside 1..={}",
                n - 1
            )));
        }
        Ok(Self { n, gen })
    }

    pub fn n_points(&self) -> u64 {
        self.n
    }

    pub fn gen(&self) -> &[u64] {
        &self.gen
    }

    pub fn dim(&self) -> usize {
        self.gen.len()
    }

    /// Point `k`, i.e. `((k z_j mod N) / N)_j`.
    pub fn point(&self, k: u64) -> Vec<f64> {
        let n = self.n as u128;
        self.gen
            .iter()
            .map(|&z| ((k as u128 * z as u128) % n) as f64 / self.n as f64)
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// `ℓ · z mod N` in exact arithmetic, as a value in `0..N`.
    pub fn residue(&self, ell: &[i64]) -> u64 {
        debug_assert_eq!(ell.len(), self.gen.len());
        let n = self.n as i128;
        let mut acc: i128 = 0;
        for (&l, &z) in ell.iter().zip(&self.gen) {
            acc = (acc + (l as i128 % n) * z as i128) % n;
        }
        acc.rem_euclid(n) as u64
    }

    /// `ℓ · z ≡ 0 (mod N)`.
    pub fn dual_contains(&self, ell: &[i64]) -> Result<bool> {
        self.check_dim(ell.len())?;
        Ok(self.residue(ell) == 0)
    }

    /// `(1/N) Σ_k e^{2πi h·x_k}` by direct summation.
    pub fn character_sum(&self, h: &[i64]) -> Result<Complex64> {
        self.check_dim(h.len())?;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.n {
            acc += phase(h, &self.point(k));
        }
        Ok(acc / self.n as f64)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.gen.len() {
            return Err(Error::DimensionMismatch {
                expected: self.gen.len(),
                got: d,
            });
        }
        Ok(())
    }
}

/// A lattice rule with a shift `Δ ∈ [0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedLatticeRule {
    pub rule: LatticeRule,
    pub shift: Vec<f64>,
}

impl ShiftedLatticeRule {
    pub fn new(rule: LatticeRule, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != rule.dim() {
            return Err(Error::DimensionMismatch {
                expected: rule.dim(),
                got: shift.len(),
            });
        }
        if let Some(&bad) = shift.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::InvalidParameter(format!("shift component {bad} outside [0, 1)")));
        }
        Ok(Self { rule, shift })
    }

    pub fn unshifted(rule: LatticeRule) -> Self {
        let d = rule.dim();
        Self {
            rule,
            shift: vec![0.0; d],
        }
    }

    /// `{k z / N + Δ}`.
    pub fn point(&self, k: u64) -> Vec<f64> {
        let mut p = self.rule.point(k);
        for (x, &s) in p.iter_mut().zip(&self.shift) {
            *x += s;
            if *x >= 1.0 {
                *x -= 1.0;
            }
        }
        p
    }
}

/// All primes `≤ limit` by the sieve of Eratosthenes.
pub fn sieve(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut i = 2;
    while i * i <= n {
        if !composite[i] {
            for j in (i * i..=n).step_by(i) {
                composite[j] = true;
            }
        }
        i += 1;
    }
    (2..=n).filter(|&k| !composite[k]).map(|k| k as u64).collect()
}

/// Primes `N` with `⌈M/2⌉ < N ≤ M`.
pub fn primes_in_range(m: u64) -> Result<Vec<u64>> {
    if m < 4 {
        return Err(Error::InvalidParameter(format!("M = {m} must be at least 4")));
    }
    let lo = m.div_ceil(2);
    Ok(sieve(m).into_iter().filter(|&p| p > lo).collect())
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

pub(crate) fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    let m128 = m as u128;
    let mut acc: u128 = 1 % m128;
    let mut b = base as u128 % m128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

/// Multiplicative inverse modulo a prime.
pub fn inv_mod_prime(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// Smallest primitive root of the prime `p`.
pub fn primitive_root(p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if p == 2 {
        return Ok(1);
    }
    let phi = p - 1;
    let mut factors = Vec::new();
    let mut rest = phi;
    let mut f = 2;
    while f * f <= rest {
        if rest.is_multiple_of(f) {
            factors.push(f);
            while rest.is_multiple_of(f) {
                rest /= f;
            }
        }
        f += 1;
    }
    if rest > 1 {
        factors.push(rest);
    }
    (2..p)
        .find(|&g| factors.iter().all(|&q| pow_mod(g, phi / q, p) != 1))
        .ok_or(Error::NotPrime(p))
}
