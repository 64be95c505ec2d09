//! Randomized rank-1 lattice rules for approximation in weighted Korobov spaces.
//!
//! A generating vector is built by a randomized component-by-component search
//! over a random prime `N`; a random shift of the resulting lattice then
//! samples a function, and one length-`N` DFT recovers its Fourier
//! coefficients on the index set `A_d(T) = {h : r²_{α,γ}(h) ≤ T}`.

pub mod analysis;
pub mod approx;
pub mod cbc;
mod dd;
pub mod error;
pub mod indexset;
pub mod korobov;
pub mod lattice;
pub mod selftest;
pub mod testfns;

pub use analysis::{BoundReport, ConvergenceReport, OmegaTable};
pub use approx::{approximate, Approximant};
pub use cbc::{randomized_cbc, CbcConfig, CbcResult};
pub use error::{Error, Result};
pub use indexset::{build_index_set, IndexSet};
pub use korobov::{Alpha, ExtendedReal, Weights};
pub use lattice::{LatticeRule, ShiftedLatticeRule};
pub use testfns::{Evaluable, FourierPolynomial, KernelFunction};
