//! Husimi Q-functions of the reduced spin and boson states.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{spin_ops_csr, SpinBosonBasis};
use crate::linalg::exp_i_hermitian;
use crate::C64;

/// Prefactor of the spin Q-function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QConvention {
    /// `(N + 1)/4 pi`, integrates to one over the sphere.
    #[default]
    Normalized,
    /// `(2N + 1)/4 pi`, the prefactor as commonly quoted for this model.
    Paper,
}

impl QConvention {
    pub fn prefactor(self, n_spins: usize) -> f64 {
        let n = n_spins as f64;
        match self {
            QConvention::Normalized => (n + 1.0) / (4.0 * PI),
            QConvention::Paper => (2.0 * n + 1.0) / (4.0 * PI),
        }
    }
}

/// `exp{i theta (Sx sin phi - Sy cos phi)} |N/2, N/2>` by exponentiating the generator.
///
/// Amplitudes are over the Dicke states in descending-m order.
pub fn coherent_spin_state(n_spins: usize, theta: f64, phi: f64) -> Result<Array1<C64>> {
    if n_spins < 1 {
        return Err(Error::InvalidParams("n_spins must be >= 1".into()));
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::InvalidParams(format!("theta {theta} outside [0, pi]")));
    }
    let (sx, sy, _) = spin_ops_csr(n_spins);
    let g = sx.to_dense().mapv(|z| z * phi.sin()) - sy.to_dense().mapv(|z| z * phi.cos());
    let u = exp_i_hermitian(&g, theta)?;
    Ok(u.column(0).to_owned())
}

/// Closed-form coherent-state amplitudes `sqrt(C(N,k)) cos^{N-k}(theta/2) sin^k(theta/2) e^{i k phi}`, `k = j - m`.
///
/// Equal to [`coherent_spin_state`] up to a global phase; used for dense grids.
pub fn coherent_spin_amplitudes(n_spins: usize, theta: f64, phi: f64) -> Vec<C64> {
    let (s, c) = (0.5 * theta).sin_cos();
    let n = n_spins;
    let mut out = Vec::with_capacity(n + 1);
    let mut log_binom = 0.0f64;
    for k in 0..=n {
        if k > 0 {
            log_binom += ((n - k + 1) as f64 / k as f64).ln();
        }
        let mag = powi_exact(c, n - k) * powi_exact(s, k) * (0.5 * log_binom).exp();
        out.push(C64::from_polar(mag, k as f64 * phi));
    }
    out
}

fn powi_exact(x: f64, k: usize) -> f64 {
    if k == 0 { 1.0 } else { x.powi(k as i32) }
}

/// Partial trace over the boson of a joint density matrix.
pub fn reduce_spin(rho: &Array2<C64>, basis: SpinBosonBasis) -> Result<Array2<C64>> {
    check_joint(rho, basis)?;
    let d = basis.spin_dim();
    let mut out = Array2::zeros((d, d));
    for n in 0..basis.boson_cutoff() {
        let block = rho.slice(ndarray::s![n * d..(n + 1) * d, n * d..(n + 1) * d]);
        out += &block;
    }
    Ok(out)
}

/// Partial trace over the spin of a joint density matrix.
pub fn reduce_boson(rho: &Array2<C64>, basis: SpinBosonBasis) -> Result<Array2<C64>> {
    check_joint(rho, basis)?;
    let d = basis.spin_dim();
    let nb = basis.boson_cutoff();
    Ok(Array2::from_shape_fn((nb, nb), |(n, m)| (0..d).map(|k| rho[[n * d + k, m * d + k]]).sum()))
}

fn check_joint(rho: &Array2<C64>, basis: SpinBosonBasis) -> Result<()> {
    if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.nrows() });
    }
    Ok(())
}

fn check_density(rho: &Array2<C64>) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), found: rho.ncols() });
    }
    let tr: C64 = rho.diag().sum();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::InvalidParams(format!("density matrix trace {tr} is not 1")));
    }
    Ok(())
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// `n` polar angles covering `[0, pi]` inclusive.
pub fn theta_grid(n: usize) -> Vec<f64> {
    crate::meanfield::linspace(0.0, PI, n)
}

/// `n` azimuths covering `[0, 2 pi)` (periodic, endpoint excluded).
pub fn phi_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinQGrid {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `q[[i, j]]` at `(theta[i], phi[j])`.
    pub q: Array2<f64>,
    pub convention: QConvention,
}

impl SpinQGrid {
    /// `int Q sin(theta) dtheta dphi`: trapezoid in theta, periodic rectangle rule in phi.
    ///
    /// Assumes the grids from [`theta_grid`] and [`phi_grid`].
    pub fn integrate(&self) -> f64 {
        let nt = self.theta.len();
        let dphi = 2.0 * PI / self.phi.len() as f64;
        let mut total = 0.0;
        for i in 0..nt {
            let w = if i == 0 || i + 1 == nt { 0.5 } else { 1.0 };
            let dtheta = if nt > 1 { self.theta[1] - self.theta[0] } else { 0.0 };
            total += w * dtheta * self.theta[i].sin() * self.q.row(i).sum() * dphi;
        }
        total
    }

    /// Grid node of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let ((i, j), _) = self.q.indexed_iter().fold(((0, 0), f64::NEG_INFINITY), |acc, (ij, &v)| if v > acc.1 { (ij, v) } else { acc });
        (self.theta[i], self.phi[j])
    }
}

/// Spin Q-function `c <theta, phi| rho |theta, phi>` on a tensor grid.
pub fn spin_q(rho: &Array2<C64>, theta: &[f64], phi: &[f64], convention: QConvention) -> Result<SpinQGrid> {
    check_density(rho)?;
    if !strictly_increasing(theta) || !strictly_increasing(phi) {
        return Err(Error::InvalidParams("Q grids must be strictly increasing".into()));
    }
    if theta.iter().any(|t| !(0.0..=PI).contains(t)) {
        return Err(Error::InvalidParams("theta values must lie in [0, pi]".into()));
    }
    let n_spins = rho.nrows() - 1;
    let c = convention.prefactor(n_spins);
    let rows: Vec<Vec<f64>> = theta
        .par_iter()
        .map(|&t| {
            phi.iter()
                .map(|&p| {
                    let z = coherent_spin_amplitudes(n_spins, t, p);
                    let rz = rho.dot(&Array1::from(z.clone()));
                    c * z.iter().zip(rz.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re
                })
                .collect()
        })
        .collect();
    let q = Array2::from_shape_fn((theta.len(), phi.len()), |(i, j)| rows[i][j]);
    Ok(SpinQGrid { theta: theta.to_vec(), phi: phi.to_vec(), q, convention })
}

/// Fock amplitudes of `|alpha>` projected on `0..cutoff` and renormalized.
pub fn truncated_coherent_state(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut c = Vec::with_capacity(cutoff);
    let mut z = C64::new(1.0, 0.0);
    for n in 0..cutoff {
        if n > 0 {
            z = z * alpha / (n as f64).sqrt();
        }
        c.push(z);
    }
    let nrm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    c.iter().map(|v| v / nrm).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BosonQGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `q[[i, j]]` at `alpha = x[i] + i y[j]`.
    pub q: Array2<f64>,
    /// Upper bound on the mass outside the grid.
    pub outside_mass: f64,
}

impl BosonQGrid {
    /// Rectangle-rule `int Q d^2 alpha`.
    pub fn integrate(&self) -> f64 {
        let dx = if self.x.len() > 1 { self.x[1] - self.x[0] } else { 0.0 };
        let dy = if self.y.len() > 1 { self.y[1] - self.y[0] } else { 0.0 };
        self.q.sum() * dx * dy
    }
}

/// `sum_n rho_nn P(|alpha| > r)` for the photon-number distribution, using
/// `P(|alpha|^2 > r^2 | n) = e^{-r^2} sum_{k<=n} r^{2k}/k!` (the radial law of `Q` for a Fock state).
pub fn boson_mass_outside_radius(rho: &Array2<C64>, radius: f64) -> f64 {
    let x = radius * radius;
    let mut term = (-x).exp();
    let mut cumulative = term;
    let mut out = 0.0;
    for n in 0..rho.nrows() {
        if n > 0 {
            term *= x / n as f64;
            cumulative += term;
        }
        out += rho[[n, n]].re * cumulative.min(1.0);
    }
    out
}

/// Boson Q-function `<alpha| rho |alpha>/pi` on a rectangular grid.
///
/// Fails with `GridTooSmall` when the mass outside the largest origin-centred
/// disk inside the grid may exceed `1e-3`.
pub fn boson_q(rho: &Array2<C64>, x: &[f64], y: &[f64]) -> Result<BosonQGrid> {
    check_density(rho)?;
    if !strictly_increasing(x) || !strictly_increasing(y) {
        return Err(Error::InvalidParams("Q grids must be strictly increasing".into()));
    }
    let radius = [-x[0], *x.last().unwrap(), -y[0], *y.last().unwrap()].into_iter().fold(f64::INFINITY, f64::min).max(0.0);
    let outside_mass = boson_mass_outside_radius(rho, radius);
    if outside_mass > 1e-3 {
        return Err(Error::GridTooSmall { outside: outside_mass });
    }
    let q = boson_q_values(rho, x, y);
    Ok(BosonQGrid { x: x.to_vec(), y: y.to_vec(), q, outside_mass })
}

/// Q values without the coverage check, e.g. for a one-dimensional cut.
pub fn boson_q_values(rho: &Array2<C64>, x: &[f64], y: &[f64]) -> Array2<f64> {
    let nb = rho.nrows();
    let rows: Vec<Vec<f64>> = x
        .par_iter()
        .map(|&xr| {
            y.iter()
                .map(|&yi| {
                    let c = truncated_coherent_state(C64::new(xr, yi), nb);
                    let rc = rho.dot(&Array1::from(c.clone()));
                    c.iter().zip(rc.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re / PI
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn((x.len(), y.len()), |(i, j)| rows[i][j])
}
