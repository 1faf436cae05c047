use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::C64;

/// Kronecker product, first factor slow.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ((i, j), &x) in a.indexed_iter() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
        block.zip_mut_with(b, |o, &y| *o = x * y);
    }
    out
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// `[a, b] = ab - ba`
pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

pub fn hermiticity_deviation(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is copied into column-major layout first: the LAPACK wrapper
/// returns conjugated eigenvectors for row-major complex input.
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    f.eigh(UPLO::Upper).map_err(|e| Error::Backend(e.to_string()))
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Upper).map_err(|e| Error::Backend(e.to_string()))
}

/// `exp(i s G)` for Hermitian `G`.
pub fn exp_i_hermitian(g: &Array2<C64>, s: f64) -> Result<Array2<C64>> {
    let (w, v) = eigh(g)?;
    let phases = w.mapv(|x| C64::from_polar(1.0, s * x));
    let mut vp = v.clone();
    for (mut col, p) in vp.columns_mut().into_iter().zip(phases.iter()) {
        col.mapv_inplace(|z| z * p);
    }
    Ok(vp.dot(&dagger(&v)))
}
