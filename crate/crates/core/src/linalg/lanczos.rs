//! Thick-restart Lanczos for the lowest eigenpair of a Hermitian operator.
//!
//! Full reorthogonalization against the whole basis, so the projected matrix
//! is the exact Rayleigh quotient `V^H A V` rather than a tridiagonal model.

use ndarray::{Array1, Array2};

use super::{axpy, dotc, eigh, norm, LinearOperator};
use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosOptions {
    /// Converged when `||A x - theta x|| <= tol * ||A||` (norm estimated from Ritz values).
    pub tol: f64,
    pub max_basis: usize,
    /// Ritz vectors retained across a restart.
    pub keep: usize,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_basis: 64, keep: 16, max_restarts: 400 }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Array1<C64>,
    /// Explicit `||A x - value x||`.
    pub residual: f64,
}

pub fn lowest_eigenpair<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[C64],
    opts: &LanczosOptions,
) -> Result<EigenPair> {
    let n = op.dim();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: start.len() });
    }
    if n == 0 {
        return Err(Error::InvalidParams("empty operator".into()));
    }
    let max_basis = opts.max_basis.min(n).max(1);
    let keep = opts.keep.min(max_basis.saturating_sub(1)).max(1);

    let s0 = norm(start);
    if s0 == 0.0 {
        return Err(Error::InvalidParams("zero start vector".into()));
    }
    let mut basis: Vec<Vec<C64>> = vec![start.iter().map(|z| z / s0).collect()];
    // Projected matrix, filled column by column.
    let mut t = Array2::<C64>::zeros((max_basis, max_basis));
    let mut first_new = 0usize;
    let mut anorm: f64 = 0.0;
    let mut w = vec![C64::new(0.0, 0.0); n];

    for _restart in 0..=opts.max_restarts {
        let mut m = max_basis;
        let mut beta_last = 0.0;
        let mut invariant = false;
        for j in first_new..max_basis {
            op.apply_into(&basis[j], &mut w);
            // two passes of classical Gram-Schmidt
            for i in 0..=j {
                let h = dotc(&basis[i], &w);
                axpy(-h, &basis[i], &mut w);
                t[[i, j]] = h;
            }
            for i in 0..=j {
                let h = dotc(&basis[i], &w);
                axpy(-h, &basis[i], &mut w);
                t[[i, j]] += h;
            }
            t[[j, j]] = C64::new(t[[j, j]].re, 0.0);
            for i in 0..j {
                t[[j, i]] = t[[i, j]].conj();
            }
            let beta = norm(&w);
            beta_last = beta;
            anorm = anorm.max(t[[j, j]].re.abs());
            if beta <= 1e-14 * anorm.max(1.0) || basis.len() == n {
                m = j + 1;
                invariant = true;
                break;
            }
            basis.push(w.iter().map(|z| z / beta).collect());
            if j + 1 >= max_basis {
                m = j + 1;
            }
        }

        let tm = t.slice(ndarray::s![..m, ..m]).to_owned();
        let (theta, y) = eigh(&tm)?;
        anorm = anorm.max(theta[0].abs()).max(theta[m - 1].abs());
        let ritz_res = if invariant { 0.0 } else { beta_last * y[[m - 1, 0]].norm() };

        let k = if invariant { 1 } else { keep.min(m - 1).max(1) };
        let ritz: Vec<Vec<C64>> = (0..k)
            .map(|c| {
                let mut u = vec![C64::new(0.0, 0.0); n];
                for (i, b) in basis.iter().take(m).enumerate() {
                    axpy(y[[i, c]], b, &mut u);
                }
                u
            })
            .collect();

        if invariant || ritz_res <= opts.tol * anorm.max(1e-300) {
            let x = &ritz[0];
            let xn = norm(x);
            let x: Vec<C64> = x.iter().map(|z| z / xn).collect();
            op.apply_into(&x, &mut w);
            let value = dotc(&x, &w).re;
            axpy(C64::new(-value, 0.0), &x, &mut w);
            return Ok(EigenPair { value, vector: Array1::from(x), residual: norm(&w) });
        }

        // thick restart: [ritz_0 .. ritz_{k-1}, v_m]
        let next = basis.pop().expect("residual vector present");
        basis = ritz;
        basis.push(next);
        t.fill(C64::new(0.0, 0.0));
        for i in 0..k {
            t[[i, i]] = C64::new(theta[i], 0.0);
        }
        first_new = k;
    }
    Err(Error::NonConverged(format!(
        "Lanczos did not reach tolerance {:.1e} within {} restarts",
        opts.tol, opts.max_restarts
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    fn start(n: usize) -> Vec<C64> {
        (0..n).map(|i| C64::new(1.0 + (i as f64 * 0.37).sin(), 0.1 * (i as f64).cos())).collect()
    }

    #[test]
    fn path_laplacian_lowest_mode() {
        // tridiag(-1, 2, -1) has eigenvalues 2 - 2 cos(k pi/(n+1))
        let n = 300;
        let trip = (0..n).flat_map(|i| {
            let mut v = vec![(i, i, C64::new(2.0, 0.0))];
            if i > 0 {
                v.push((i, i - 1, C64::new(-1.0, 0.0)));
            }
            if i + 1 < n {
                v.push((i, i + 1, C64::new(-1.0, 0.0)));
            }
            v
        });
        let a = CsrMatrix::from_triplets(n, trip);
        let ep = lowest_eigenpair(&a, &start(n), &LanczosOptions { tol: 1e-12, ..Default::default() }).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((ep.value - exact).abs() < 1e-10, "{} vs {}", ep.value, exact);
        assert!(ep.residual < 1e-9);
    }

    #[test]
    fn small_operator_is_solved_exactly() {
        let a = CsrMatrix::from_triplets(3, vec![(0, 0, C64::new(3.0, 0.0)), (1, 1, C64::new(-1.0, 0.0)), (2, 2, C64::new(0.5, 0.0)), (0, 2, C64::new(0.0, 1.0)), (2, 0, C64::new(0.0, -1.0))]);
        let ep = lowest_eigenpair(&a, &start(3), &LanczosOptions::default()).unwrap();
        assert!((ep.value + 1.0).abs() < 1e-12);
    }
}
