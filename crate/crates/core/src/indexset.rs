//! The truncation index set `A_d(T) = {h ∈ Z^d : r²_{α,γ}(h) ≤ T}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::korobov::{coord_factor_sq, Alpha, ExtendedReal, Weights};

pub const DEFAULT_CAP: usize = 10_000_000;

/// Largest admissible `|h_j|` considered by the enumeration.
const MAX_COORD: i64 = 1 << 50;

/// Explicit list of the members of `A_d(T)`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    dim: usize,
    threshold: f64,
    members: Vec<Vec<i64>>,
}

impl IndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn members(&self) -> &[Vec<i64>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, h: &[i64]) -> bool {
        self.members.binary_search_by(|m| m.as_slice().cmp(h)).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.members.iter()
    }

    /// Rebuilds a set from an explicit member list, which must be strictly
    /// increasing in lexicographic order.
    pub fn from_members(dim: usize, threshold: f64, members: Vec<Vec<i64>>) -> Result<Self> {
        if let Some(bad) = members.iter().find(|m| m.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("index set members not strictly sorted".into()));
        }
        Ok(Self {
            dim,
            threshold,
            members,
        })
    }

    /// The members as a JSON list of integer vectors.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.members).expect("integer vectors serialize")
    }
}

fn factor(h: i64, alpha: Alpha, gamma: f64) -> f64 {
    match coord_factor_sq(h, alpha, gamma) {
        ExtendedReal::Finite(f) => f,
        ExtendedReal::Infinite => f64::INFINITY,
    }
}

/// Largest `m ≥ 0` with `prefix · factor(m) ≤ t`, given `prefix ≤ t`.
fn max_abs(prefix: f64, t: f64, alpha: Alpha, gamma: f64) -> i64 {
    if gamma == 0.0 {
        return 0;
    }
    let fits = |m: i64| m == 0 || prefix * factor(m, alpha, gamma) <= t;
    let guess = ((t / prefix) * gamma * gamma).powf(0.5 / alpha.value()).floor();
    let mut m = if guess.is_finite() {
        (guess as i64).clamp(0, MAX_COORD)
    } else {
        MAX_COORD
    };
    while !fits(m) {
        m -= 1;
    }
    while m < MAX_COORD && fits(m + 1) {
        m += 1;
    }
    m
}

fn validate(d: usize, gamma: &Weights, t: f64) -> Result<()> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!("threshold T = {t} must be positive")));
    }
    gamma.check_dim(d)
}

/// Enumerates `A_d(T)` coordinate by coordinate.
///
/// Coordinate `j` ranges over `|h_j| ≤ m` where `m` is the largest value whose
/// factor keeps the running product within `T`. The running product is
/// multiplied in the same order as [`crate::korobov::r_squared`], so
/// membership agrees with that function exactly.
pub fn build_index_set(d: usize, alpha: Alpha, gamma: &Weights, t: f64, cap: usize) -> Result<IndexSet> {
    validate(d, gamma, t)?;
    let mut members = Vec::new();
    if d > 0 && t >= 1.0 {
        let mut h = vec![0i64; d];
        enumerate(0, 1.0, &mut h, alpha, gamma, t, cap, &mut members)?;
    }
    Ok(IndexSet {
        dim: d,
        threshold: t,
        members,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    j: usize,
    prefix: f64,
    h: &mut Vec<i64>,
    alpha: Alpha,
    gamma: &Weights,
    t: f64,
    cap: usize,
    out: &mut Vec<Vec<i64>>,
) -> Result<()> {
    let g = gamma.get(j);
    let m = max_abs(prefix, t, alpha, g);
    for v in -m..=m {
        let p = prefix * factor(v, alpha, g);
        h[j] = v;
        if j + 1 == h.len() {
            if out.len() == cap {
                return Err(Error::CapExceeded { cap });
            }
            out.push(h.clone());
        } else {
            enumerate(j + 1, p, h, alpha, gamma, t, cap, out)?;
        }
    }
    h[j] = 0;
    Ok(())
}

/// `|A_d(T)|` without materialising the members.
pub fn cardinality(t: f64, d: usize, alpha: Alpha, gamma: &Weights) -> u128 {
    if validate(d, gamma, t).is_err() || d == 0 || t < 1.0 {
        return 0;
    }
    count(0, 1.0, d, alpha, gamma, t)
}

fn count(j: usize, prefix: f64, d: usize, alpha: Alpha, gamma: &Weights, t: f64) -> u128 {
    let g = gamma.get(j);
    let m = max_abs(prefix, t, alpha, g);
    if j + 1 == d {
        return 2 * m as u128 + 1;
    }
    let mut total = count(j + 1, prefix, d, alpha, gamma, t);
    for v in 1..=m {
        total += 2 * count(j + 1, prefix * factor(v, alpha, g), d, alpha, gamma, t);
    }
    total
}
