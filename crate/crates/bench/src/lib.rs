//! Fixtures shared by the benchmarks.

use rlattice::{Alpha, Weights};

pub fn alpha(v: f64) -> Alpha {
    Alpha::new(v).expect("valid alpha")
}

/// Product weights `γ_j = 0.9^j`.
pub fn decaying_weights(d: usize) -> Weights {
    Weights::new((0..d).map(|j| 0.9f64.powi(j as i32)).collect()).expect("valid weights")
}
