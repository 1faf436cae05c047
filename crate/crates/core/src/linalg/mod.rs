//! Linear-algebra building blocks: CSR storage, dense helpers, a thick-restart
//! Lanczos ground-state solver and a Krylov propagator for `exp(-i dt H) v`.

pub mod dense;
pub mod expm;
pub mod lanczos;
pub mod sparse;

use crate::C64;

pub use dense::{commutator, dagger, eigh, eigh_real, exp_i_hermitian, hermiticity_deviation, kron};
pub use expm::{expm_multiply, ExpmOptions};
pub use lanczos::{lowest_eigenpair, EigenPair, LanczosOptions};
pub use sparse::CsrMatrix;

/// Anything that can act on a state vector.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// Overwrites `y` with `A x`.
    fn apply_into(&self, x: &[C64], y: &mut [C64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.matvec(x, y)
    }
}

/// `sum conj(a_i) b_i`
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += alpha x`
#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}
