//! Dicke-LMG critical detector: a single bosonic mode coupled to a collective
//! spin with ferromagnetic exchange,
//!
//! `H = a^dag a + (2 lambda / sqrt N)(a + a^dag) Sx + epsilon Sz - (2/N)(Jx Sx^2 + Jy Sy^2)`.
//!
//! The crate covers the mean-field phase diagram, exact diagonalization in the
//! Fock (x) Dicke basis, Husimi Q-functions, quench dynamics near the
//! first-order transition and a Liouville-space (vectorized density matrix)
//! propagator.

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod hilbert;
pub mod linalg;
pub mod liouville;
pub mod meanfield;
pub mod qfunction;
pub mod spectrum;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
