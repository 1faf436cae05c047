//! Joint Fock (x) Dicke basis and the operators built on it.
//!
//! Layout is boson-major: the flat index of `|n> (x) |j, m>` is
//! `n * (N + 1) + k` with `k = j - m`, so `m = +N/2` comes first in every block.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, LinearOperator};
use crate::C64;

/// Hamiltonian couplings plus the truncation of the joint space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub jx: f64,
    pub jy: f64,
    pub n_spins: usize,
    pub boson_cutoff: usize,
}

impl ModelParams {
    pub fn new(epsilon: f64, lambda: f64, jx: f64, jy: f64, n_spins: usize, boson_cutoff: usize) -> Result<Self> {
        let p = Self { epsilon, lambda, jx, jy, n_spins, boson_cutoff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.epsilon, self.lambda, self.jx, self.jy].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParams("couplings must be finite".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        for (name, v) in [("lambda", self.lambda), ("jx", self.jx), ("jy", self.jy)] {
            if v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.n_spins < 1 {
            return Err(Error::InvalidParams("n_spins must be >= 1".into()));
        }
        if self.boson_cutoff < 2 {
            return Err(Error::InvalidParams("boson_cutoff must be >= 2".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> SpinBosonBasis {
        SpinBosonBasis::new(self.n_spins, self.boson_cutoff)
    }

    pub fn with_coupling(&self, c: Coupling, value: f64) -> Self {
        let mut p = self.clone();
        match c {
            Coupling::Epsilon => p.epsilon = value,
            Coupling::Lambda => p.lambda = value,
            Coupling::Jx => p.jx = value,
            Coupling::Jy => p.jy = value,
        }
        p
    }

    pub fn coupling(&self, c: Coupling) -> f64 {
        match c {
            Coupling::Epsilon => self.epsilon,
            Coupling::Lambda => self.lambda,
            Coupling::Jx => self.jx,
            Coupling::Jy => self.jy,
        }
    }
}

/// A scalar parameter of the Hamiltonian that scans can sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Epsilon,
    Lambda,
    Jx,
    Jy,
}

/// Label of a basis vector; `two_m = 2m` keeps half-integer `m` exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub n: usize,
    pub two_m: i64,
}

impl BasisLabel {
    pub fn m(&self) -> f64 {
        self.two_m as f64 / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpinBosonBasis {
    n_spins: usize,
    boson_cutoff: usize,
}

impl SpinBosonBasis {
    pub fn new(n_spins: usize, boson_cutoff: usize) -> Self {
        Self { n_spins, boson_cutoff }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn boson_cutoff(&self) -> usize {
        self.boson_cutoff
    }

    pub fn spin_dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn dim(&self) -> usize {
        self.boson_cutoff * (self.n_spins + 1)
    }

    pub fn index(&self, label: BasisLabel) -> Option<usize> {
        let n = self.n_spins as i64;
        if label.n >= self.boson_cutoff || label.two_m.abs() > n || (n - label.two_m) % 2 != 0 {
            return None;
        }
        let k = ((n - label.two_m) / 2) as usize;
        Some(label.n * self.spin_dim() + k)
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        assert!(index < self.dim(), "index {index} out of range");
        let n = index / self.spin_dim();
        let k = index % self.spin_dim();
        BasisLabel { n, two_m: self.n_spins as i64 - 2 * k as i64 }
    }

    /// Eigenvalue of `exp(i pi (n + m + N/2))` on a basis vector.
    pub fn parity_of(&self, index: usize) -> Parity {
        let l = self.label(index);
        let exc = l.n as i64 + (l.two_m + self.n_spins as i64) / 2;
        if exc % 2 == 0 { Parity::Even } else { Parity::Odd }
    }

    /// Sorted flat indices of a parity sector.
    pub fn sector_indices(&self, p: Parity) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.parity_of(i) == p).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Dense(Array2<C64>),
    Sparse(CsrMatrix),
}

/// Square complex matrix over some basis, with an optional Hermitian promise.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    storage: Storage,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn dense(a: Array2<C64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "operator must be square");
        Self { storage: Storage::Dense(a), hermitian: false }
    }

    pub fn sparse(a: CsrMatrix) -> Self {
        Self { storage: Storage::Sparse(a), hermitian: false }
    }

    /// Sets the Hermitian flag after checking `A = A^H` within `1e-12`.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let dev = self.hermiticity_deviation();
        if dev > 1e-12 {
            return Err(Error::NonHermitianInput { deviation: dev });
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Dense(a) => a.nrows(),
            Storage::Sparse(a) => a.dim(),
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        match &self.storage {
            Storage::Dense(a) => a.clone(),
            Storage::Sparse(a) => a.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(a) => CsrMatrix::from_dense(a, 0.0),
            Storage::Sparse(a) => a.clone(),
        }
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        match &self.storage {
            Storage::Dense(a) => linalg::hermiticity_deviation(a),
            Storage::Sparse(a) => a.hermiticity_deviation(),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// `<x|A|x>`
    pub fn expectation(&self, x: &[C64]) -> C64 {
        linalg::dotc(x, &self.apply(x))
    }
}

impl LinearOperator for OperatorMatrix {
    fn dim(&self) -> usize {
        OperatorMatrix::dim(self)
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        match &self.storage {
            Storage::Dense(a) => {
                let n = a.nrows();
                for i in 0..n {
                    y[i] = a.row(i).iter().zip(x).map(|(p, q)| p * q).sum();
                }
            }
            Storage::Sparse(a) => a.matvec(x, y),
        }
    }
}

/// Normalized amplitudes over a [`SpinBosonBasis`] (or over a subspace of it).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    basis: SpinBosonBasis,
    amplitudes: Array1<C64>,
}

impl StateVector {
    pub fn new(basis: SpinBosonBasis, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: amplitudes.len() });
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn basis_state(basis: SpinBosonBasis, label: BasisLabel) -> Result<Self> {
        let idx = basis
            .index(label)
            .ok_or_else(|| Error::InvalidParams(format!("label {label:?} not in basis")))?;
        let mut a = Array1::zeros(basis.dim());
        a[idx] = C64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes: a })
    }

    pub fn basis(&self) -> SpinBosonBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice().expect("contiguous amplitudes")
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(self.as_slice())
    }

    pub fn overlap(&self, other: &StateVector) -> C64 {
        linalg::dotc(self.as_slice(), other.as_slice())
    }

    /// Population per Fock layer, `P(n) = sum_m |psi(n, m)|^2`.
    pub fn boson_populations(&self) -> Vec<f64> {
        let d = self.basis.spin_dim();
        self.amplitudes
            .as_slice()
            .unwrap()
            .chunks(d)
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Summed population of the top 10% of Fock layers (at least one layer).
    pub fn boson_tail_population(&self) -> f64 {
        let pops = self.boson_populations();
        let nb = pops.len();
        let top = ((nb as f64 * 0.1).ceil() as usize).max(1);
        pops[nb - top..].iter().sum()
    }

    /// `rho_spin = Tr_b |psi><psi|`, indexed in the descending-m Dicke order.
    pub fn reduced_spin_density(&self) -> Array2<C64> {
        let d = self.basis.spin_dim();
        let psi = self.amplitudes.view().into_shape_with_order((self.basis.boson_cutoff, d)).unwrap();
        // rho[k, l] = sum_n psi[n, k] conj(psi[n, l])
        psi.t().dot(&psi.mapv(|z| z.conj()))
    }

    /// `rho_b = Tr_s |psi><psi|` in the Fock basis.
    pub fn reduced_boson_density(&self) -> Array2<C64> {
        let d = self.basis.spin_dim();
        let psi = self.amplitudes.view().into_shape_with_order((self.basis.boson_cutoff, d)).unwrap();
        psi.dot(&psi.t().mapv(|z| z.conj()))
    }
}

/// Collective spin matrices on the `N + 1` dimensional Dicke subspace.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub sx: OperatorMatrix,
    pub sy: OperatorMatrix,
    pub sz: OperatorMatrix,
}

#[derive(Clone, Debug)]
pub struct BosonOperators {
    pub a: OperatorMatrix,
    pub a_dagger: OperatorMatrix,
    pub number: OperatorMatrix,
}

/// `<m+1|S+|m>` at position `(k - 1, k)`, with `k = j - m`.
fn spin_raising(n_spins: usize) -> CsrMatrix {
    let j = n_spins as f64 / 2.0;
    let d = n_spins + 1;
    CsrMatrix::from_triplets(
        d,
        (1..d).map(|k| {
            let m = j - k as f64;
            (k - 1, k, C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0))
        }),
    )
}

fn spin_ops_sparse(n_spins: usize) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    let sp = spin_raising(n_spins);
    let sm = sp.adjoint();
    let half = C64::new(0.5, 0.0);
    let sx = CsrMatrix::linear_combination(&[(half, &sp), (half, &sm)]).unwrap();
    // (S+ - S-)/(2i) = -i/2 S+ + i/2 S-
    let sy = CsrMatrix::linear_combination(&[(C64::new(0.0, -0.5), &sp), (C64::new(0.0, 0.5), &sm)]).unwrap();
    let j = n_spins as f64 / 2.0;
    let sz = CsrMatrix::from_triplets(n_spins + 1, (0..=n_spins).map(|k| (k, k, C64::new(j - k as f64, 0.0))));
    (sx, sy, sz)
}

pub fn build_collective_spin_ops(n_spins: usize) -> Result<SpinOperators> {
    if n_spins < 1 {
        return Err(Error::InvalidParams("n_spins must be >= 1".into()));
    }
    let (sx, sy, sz) = spin_ops_sparse(n_spins);
    Ok(SpinOperators {
        sx: OperatorMatrix::dense(sx.to_dense()).into_hermitian()?,
        sy: OperatorMatrix::dense(sy.to_dense()).into_hermitian()?,
        sz: OperatorMatrix::dense(sz.to_dense()).into_hermitian()?,
    })
}

fn boson_lowering(cutoff: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(cutoff, (1..cutoff).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))))
}

pub fn build_boson_ops(boson_cutoff: usize) -> Result<BosonOperators> {
    if boson_cutoff < 2 {
        return Err(Error::InvalidParams("boson_cutoff must be >= 2".into()));
    }
    let a = boson_lowering(boson_cutoff);
    let num = CsrMatrix::from_triplets(boson_cutoff, (0..boson_cutoff).map(|n| (n, n, C64::new(n as f64, 0.0))));
    Ok(BosonOperators {
        a: OperatorMatrix::dense(a.to_dense()),
        a_dagger: OperatorMatrix::dense(a.adjoint().to_dense()),
        number: OperatorMatrix::dense(num.to_dense()).into_hermitian()?,
    })
}

/// The Hamiltonian split into coupling-independent pieces, all on the joint space:
///
/// `H = number + lambda * coupling + epsilon * zeeman + jx * exchange_x + jy * exchange_y`
///
/// with `coupling = (2/sqrt N)(a + a^dag) Sx` and `exchange_a = -(2/N) Sa^2`.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    basis: SpinBosonBasis,
    pub number: CsrMatrix,
    pub coupling: CsrMatrix,
    pub zeeman: CsrMatrix,
    pub exchange_x: CsrMatrix,
    pub exchange_y: CsrMatrix,
}

impl HamiltonianTerms {
    pub fn new(n_spins: usize, boson_cutoff: usize) -> Result<Self> {
        if n_spins < 1 || boson_cutoff < 2 {
            return Err(Error::InvalidParams("need n_spins >= 1 and boson_cutoff >= 2".into()));
        }
        let basis = SpinBosonBasis::new(n_spins, boson_cutoff);
        let (sx, sy, sz) = spin_ops_sparse(n_spins);
        let a = boson_lowering(boson_cutoff);
        let x = CsrMatrix::linear_combination(&[(C64::new(1.0, 0.0), &a), (C64::new(1.0, 0.0), &a.adjoint())])?;
        let num = CsrMatrix::from_triplets(boson_cutoff, (0..boson_cutoff).map(|n| (n, n, C64::new(n as f64, 0.0))));
        let ib = CsrMatrix::identity(boson_cutoff);
        let is = CsrMatrix::identity(n_spins + 1);
        let nf = n_spins as f64;
        let sx2 = sx.matmul(&sx)?;
        // Sy^2 is real; drop the rounding-level imaginary parts from (-i)(i) products.
        let sy2 = CsrMatrix::from_triplets(n_spins + 1, sy.matmul(&sy)?.triplets().map(|(r, c, v)| (r, c, C64::new(v.re, 0.0))));
        Ok(Self {
            basis,
            number: CsrMatrix::kron(&num, &is),
            coupling: CsrMatrix::kron(&x, &sx).scaled(C64::new(2.0 / nf.sqrt(), 0.0)),
            zeeman: CsrMatrix::kron(&ib, &sz),
            exchange_x: CsrMatrix::kron(&ib, &sx2).scaled(C64::new(-2.0 / nf, 0.0)),
            exchange_y: CsrMatrix::kron(&ib, &sy2).scaled(C64::new(-2.0 / nf, 0.0)),
        })
    }

    pub fn for_params(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        Self::new(p.n_spins, p.boson_cutoff)
    }

    pub fn basis(&self) -> SpinBosonBasis {
        self.basis
    }

    pub fn assemble(&self, epsilon: f64, lambda: f64, jx: f64, jy: f64) -> CsrMatrix {
        let r = |x: f64| C64::new(x, 0.0);
        CsrMatrix::linear_combination(&[
            (r(1.0), &self.number),
            (r(lambda), &self.coupling),
            (r(epsilon), &self.zeeman),
            (r(jx), &self.exchange_x),
            (r(jy), &self.exchange_y),
        ])
        .expect("terms share one basis")
    }

    pub fn assemble_params(&self, p: &ModelParams) -> CsrMatrix {
        self.assemble(p.epsilon, p.lambda, p.jx, p.jy)
    }
}

/// Dense Hamiltonian with the Hermitian flag set.
pub fn assemble_hamiltonian(params: &ModelParams) -> Result<OperatorMatrix> {
    let h = assemble_hamiltonian_sparse(params)?;
    OperatorMatrix::dense(h.to_sparse().to_dense()).into_hermitian()
}

/// Same operator as [`assemble_hamiltonian`] in CSR storage.
pub fn assemble_hamiltonian_sparse(params: &ModelParams) -> Result<OperatorMatrix> {
    let terms = HamiltonianTerms::for_params(params)?;
    OperatorMatrix::sparse(terms.assemble_params(params)).into_hermitian()
}

/// Diagonal parity operator `exp(i pi (a^dag a + Sz + N/2))` on the joint space.
pub fn parity_operator(basis: SpinBosonBasis) -> OperatorMatrix {
    let d = basis.dim();
    let m = CsrMatrix::from_triplets(d, (0..d).map(|i| (i, i, C64::new(basis.parity_of(i).sign(), 0.0))));
    OperatorMatrix::sparse(m)
}

/// Spin operator `I_b (x) S` lifted to the joint space.
pub fn lift_spin(basis: SpinBosonBasis, s: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::kron(&CsrMatrix::identity(basis.boson_cutoff()), s)
}

/// Boson operator `B (x) I_s` lifted to the joint space.
pub fn lift_boson(basis: SpinBosonBasis, b: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::kron(b, &CsrMatrix::identity(basis.spin_dim()))
}

/// Joint-space number operator `a^dag a (x) I`.
pub fn joint_number_operator(basis: SpinBosonBasis) -> CsrMatrix {
    let d = basis.spin_dim();
    CsrMatrix::from_triplets(basis.dim(), (0..basis.dim()).map(|i| (i, i, C64::new((i / d) as f64, 0.0))))
}

/// Sparse `(Sx, Sy, Sz)` on the Dicke subspace.
pub fn spin_ops_csr(n_spins: usize) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    spin_ops_sparse(n_spins)
}
