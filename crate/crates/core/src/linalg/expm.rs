//! Krylov (Lanczos) approximation of `exp(-i dt H) v` for Hermitian `H`.

use ndarray::Array2;

use super::{axpy, dotc, eigh_real, norm, LinearOperator};
use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpmOptions {
    pub max_krylov: usize,
    /// Target absolute error of the propagated vector (relative to `||v||`).
    pub tol: f64,
    /// Maximum recursion depth when the step has to be split.
    pub max_splits: u32,
}

impl Default for ExpmOptions {
    fn default() -> Self {
        Self { max_krylov: 30, tol: 1e-12, max_splits: 12 }
    }
}

/// `exp(-i dt H) v`
pub fn expm_multiply<A: LinearOperator + ?Sized>(op: &A, v: &[C64], dt: f64, opts: &ExpmOptions) -> Result<Vec<C64>> {
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: v.len() });
    }
    step(op, v, dt, opts, 0)
}

fn step<A: LinearOperator + ?Sized>(op: &A, v: &[C64], dt: f64, opts: &ExpmOptions, depth: u32) -> Result<Vec<C64>> {
    match krylov_step(op, v, dt, opts)? {
        Some(out) => Ok(out),
        None if depth < opts.max_splits => {
            let half = step(op, v, 0.5 * dt, opts, depth + 1)?;
            step(op, &half, 0.5 * dt, opts, depth + 1)
        }
        None => Err(Error::NonConverged(format!(
            "Krylov propagator failed to reach {:.1e} after {} step splits",
            opts.tol, opts.max_splits
        ))),
    }
}

/// One Krylov step; `None` when the subspace limit is hit before the error estimate drops below tol.
fn krylov_step<A: LinearOperator + ?Sized>(op: &A, v: &[C64], dt: f64, opts: &ExpmOptions) -> Result<Option<Vec<C64>>> {
    let n = v.len();
    let beta0 = norm(v);
    if beta0 == 0.0 || dt == 0.0 {
        return Ok(Some(v.to_vec()));
    }
    let mmax = opts.max_krylov.min(n).max(1);
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|z| z / beta0).collect()];
    let mut alpha = Vec::with_capacity(mmax);
    let mut beta: Vec<f64> = Vec::with_capacity(mmax);
    let mut w = vec![C64::new(0.0, 0.0); n];

    for j in 0..mmax {
        op.apply_into(&basis[j], &mut w);
        let a = dotc(&basis[j], &w).re;
        alpha.push(a);
        axpy(C64::new(-a, 0.0), &basis[j], &mut w);
        if j > 0 {
            axpy(C64::new(-beta[j - 1], 0.0), &basis[j - 1], &mut w);
        }
        for b in basis.iter() {
            let h = dotc(b, &w);
            axpy(-h, b, &mut w);
        }
        let b = norm(&w);
        let m = j + 1;
        let invariant = b <= 1e-14 * (alpha.iter().fold(0.0f64, |s, x| s.max(x.abs()))).max(1.0);
        let check = invariant || m == mmax || (m >= 4 && m % 2 == 0);
        if check {
            let y = exp_tridiag(&alpha, &beta, dt)?;
            let err = if invariant { 0.0 } else { beta0 * b * y[m - 1].norm() };
            if err <= opts.tol * beta0 {
                let mut out = vec![C64::new(0.0, 0.0); n];
                for (yi, bi) in y.iter().zip(&basis) {
                    axpy(yi * beta0, bi, &mut out);
                }
                return Ok(Some(out));
            }
            if m == mmax {
                return Ok(None);
            }
        }
        if invariant {
            unreachable!("invariant subspace always converges");
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
    Ok(None)
}

/// `exp(-i dt T) e_1` for the symmetric tridiagonal `T = tridiag(beta, alpha, beta)`.
fn exp_tridiag(alpha: &[f64], beta: &[f64], dt: f64) -> Result<Vec<C64>> {
    let m = alpha.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (w, q) = eigh_real(&t)?;
    Ok((0..m)
        .map(|i| (0..m).map(|k| q[[i, k]] * q[[0, k]] * C64::from_polar(1.0, -dt * w[k])).sum())
        .collect())
}
