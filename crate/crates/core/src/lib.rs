//! Exact state-vector and density-matrix numerics for η-pairing in 1D
//! Hubbard chains under spin dephasing and periodic driving.
//!
//! Energies are in units of the hopping `τ` and times in units of `1/τ`
//! (`ħ = 1`).

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops
// over small fixed ranges read better than zipped iterators here.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evolve;
pub mod exec;
pub mod fock;
pub mod gce;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod rng;
pub mod spectra;
pub mod symmetry;

pub use error::{Charge, Error, Result};
pub use fock::{
    apply, enumerate_sector, Basis, DensityMatrix, Expectation, FockState, SectorBasis,
    SparseOperator, Spin, StateVector, C64,
};

/// Default cap on dense (eigen)decompositions, overridable by callers.
pub const DEFAULT_DENSE_LIMIT: usize = 5000;
