//! Density-matrix dynamics in Liouville space.
//!
//! `rho` is flattened to a vector of length `d^2`, operator products become
//! superoperators, and `d rho/dt = -i[H, rho]` becomes `d|rho>/dt = L|rho>`
//! with `L = -i (H_left - H_right)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{first_peak, ConvergenceReport, PulseEnvelope};
use crate::error::{Error, Result};
use crate::hilbert::{joint_number_operator, HamiltonianTerms, ModelParams};
use crate::linalg::{self, expm_multiply, CsrMatrix, ExpmOptions, LinearOperator};
use crate::spectrum::{EdSolver, SolverConfig};
use crate::C64;

/// Flattening order of a density matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vectorization {
    /// `v[m d + n] = rho[m, n]`; `O rho <-> O (x) I`, `rho O <-> I (x) O^T`.
    #[default]
    RowStacking,
    /// `v[m + n d] = rho[m, n]`; `O rho <-> I (x) O`, `rho O <-> O^T (x) I`.
    ColumnStacking,
}

impl Vectorization {
    #[inline]
    pub fn index(self, d: usize, m: usize, n: usize) -> usize {
        match self {
            Vectorization::RowStacking => m * d + n,
            Vectorization::ColumnStacking => m + n * d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedState {
    pub data: Array1<C64>,
    pub dim: usize,
    pub convention: Vectorization,
}

impl VectorizedState {
    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|m| self.data[self.convention.index(self.dim, m, m)]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    pub matrix: CsrMatrix,
    /// Hilbert-space dimension `d`; the matrix is `d^2 x d^2`.
    pub dim: usize,
    pub convention: Vectorization,
}

impl SuperOperator {
    pub fn apply(&self, v: &VectorizedState) -> Result<VectorizedState> {
        if v.dim != self.dim || v.convention != self.convention {
            return Err(Error::DimensionMismatch { expected: self.dim * self.dim, found: v.data.len() });
        }
        let out = self.matrix.apply(v.data.as_slice().expect("contiguous"));
        Ok(VectorizedState { data: Array1::from(out), dim: self.dim, convention: self.convention })
    }
}

fn square(rows: usize, cols: usize) -> Result<usize> {
    if rows != cols {
        return Err(Error::DimensionMismatch { expected: rows, found: cols });
    }
    Ok(rows)
}

pub fn vectorize(rho: &Array2<C64>, convention: Vectorization) -> Result<VectorizedState> {
    let d = square(rho.nrows(), rho.ncols())?;
    let mut data = Array1::<C64>::zeros(d * d);
    for ((m, n), z) in rho.indexed_iter() {
        data[convention.index(d, m, n)] = *z;
    }
    Ok(VectorizedState { data, dim: d, convention })
}

/// Reads `v` back with the given convention (which need not be the one it was built with).
pub fn devectorize(v: &Array1<C64>, convention: Vectorization) -> Result<Array2<C64>> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::DimensionMismatch { expected: d * d, found: v.len() });
    }
    Ok(Array2::from_shape_fn((d, d), |(m, n)| v[convention.index(d, m, n)]))
}

fn check_same_dim(a: &CsrMatrix, b: &CsrMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Superoperator of `rho -> O1 rho O2`.
pub fn sandwich_superop(o1: &CsrMatrix, o2: &CsrMatrix, convention: Vectorization) -> Result<SuperOperator> {
    check_same_dim(o1, o2)?;
    let matrix = match convention {
        Vectorization::RowStacking => CsrMatrix::kron(o1, &o2.transpose()),
        Vectorization::ColumnStacking => CsrMatrix::kron(&o2.transpose(), o1),
    };
    Ok(SuperOperator { matrix, dim: o1.dim(), convention })
}

/// Superoperator of `rho -> O rho`.
pub fn left_superop(o: &CsrMatrix, convention: Vectorization) -> Result<SuperOperator> {
    sandwich_superop(o, &CsrMatrix::identity(o.dim()), convention)
}

/// Superoperator of `rho -> rho O`.
pub fn right_superop(o: &CsrMatrix, convention: Vectorization) -> Result<SuperOperator> {
    sandwich_superop(&CsrMatrix::identity(o.dim()), o, convention)
}

fn ensure_hermitian(h: &CsrMatrix) -> Result<()> {
    let deviation = h.hermiticity_deviation();
    if deviation > 1e-12 * h.norm_inf().max(1.0) {
        return Err(Error::NonHermitianInput { deviation });
    }
    Ok(())
}

/// `K = H_left - H_right`, so that the generator is `L = -i K`.
pub fn commutator_superop(h: &CsrMatrix, convention: Vectorization) -> Result<SuperOperator> {
    let l = left_superop(h, convention)?;
    let r = right_superop(h, convention)?;
    let one = C64::new(1.0, 0.0);
    let matrix = CsrMatrix::linear_combination(&[(one, &l.matrix), (-one, &r.matrix)])?;
    Ok(SuperOperator { matrix, dim: h.dim(), convention })
}

/// `L = -i (H_left - H_right)`.
pub fn liouvillian(h: &CsrMatrix, convention: Vectorization) -> Result<SuperOperator> {
    ensure_hermitian(h)?;
    let k = commutator_superop(h, convention)?;
    Ok(SuperOperator { matrix: k.matrix.scaled(C64::new(0.0, -1.0)), ..k })
}

/// `Tr[rho O]` as the Liouville inner product `<O^dag|rho>`.
pub fn expectation_from_vectorized(v: &VectorizedState, o: &Array2<C64>) -> Result<C64> {
    if o.nrows() != v.dim || o.ncols() != v.dim {
        return Err(Error::DimensionMismatch { expected: v.dim, found: o.nrows() });
    }
    let od = vectorize(&linalg::dagger(o), v.convention)?;
    Ok(linalg::dotc(od.data.as_slice().unwrap(), v.data.as_slice().unwrap()))
}

/// Grouping of a two-factor density matrix `rho_{(ma mb),(na nb)}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoBodyScheme {
    /// `(|ma> (x) |mb>) (x) (<na| (x) <nb|)`: row stacking of the joint matrix.
    SystemFirst,
    /// `(|ma> (x) <na|) (x) (|mb> (x) <nb|)`: row stacking within each factor.
    PairFirst,
}

fn two_body_index(dims: (usize, usize), scheme: TwoBodyScheme, ma: usize, mb: usize, na: usize, nb: usize) -> usize {
    let (da, db) = dims;
    match scheme {
        TwoBodyScheme::SystemFirst => (ma * db + mb) * (da * db) + na * db + nb,
        TwoBodyScheme::PairFirst => ((ma * da + na) * db + mb) * db + nb,
    }
}

/// `perm[i]` is the position in `scheme` of system-first entry `i`.
pub fn two_body_permutation(dims: (usize, usize), scheme: TwoBodyScheme) -> Vec<usize> {
    let (da, db) = dims;
    let mut perm = vec![0; (da * db).pow(2)];
    for ma in 0..da {
        for mb in 0..db {
            for na in 0..da {
                for nb in 0..db {
                    let i = two_body_index(dims, TwoBodyScheme::SystemFirst, ma, mb, na, nb);
                    perm[i] = two_body_index(dims, scheme, ma, mb, na, nb);
                }
            }
        }
    }
    perm
}

pub fn vectorize_two_body(rho: &Array2<C64>, dims: (usize, usize), scheme: TwoBodyScheme) -> Result<Array1<C64>> {
    let d = square(rho.nrows(), rho.ncols())?;
    if d != dims.0 * dims.1 {
        return Err(Error::DimensionMismatch { expected: dims.0 * dims.1, found: d });
    }
    let flat = vectorize(rho, Vectorization::RowStacking)?.data;
    let perm = two_body_permutation(dims, scheme);
    let mut out = Array1::<C64>::zeros(flat.len());
    for (i, &p) in perm.iter().enumerate() {
        out[p] = flat[i];
    }
    Ok(out)
}

/// Superoperator of `rho -> O1 rho O2` for joint operators on the two-factor space.
pub fn two_body_sandwich(o1: &CsrMatrix, o2: &CsrMatrix, dims: (usize, usize), scheme: TwoBodyScheme) -> Result<CsrMatrix> {
    if o1.dim() != dims.0 * dims.1 {
        return Err(Error::DimensionMismatch { expected: dims.0 * dims.1, found: o1.dim() });
    }
    let s = sandwich_superop(o1, o2, Vectorization::RowStacking)?.matrix;
    if scheme == TwoBodyScheme::SystemFirst {
        return Ok(s);
    }
    let perm = two_body_permutation(dims, scheme);
    Ok(CsrMatrix::from_triplets(s.dim(), s.triplets().map(|(r, c, v)| (perm[r], perm[c], v))))
}

/// Extension point for dissipative terms added to the generator.
pub trait BathTerm: Sync {
    /// The bath superoperator for Hilbert dimension `d`.
    fn superoperator(&self, d: usize, convention: Vectorization) -> Result<CsrMatrix>;
}

/// Placeholder bath with no defined form; always reports `Unsupported`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnspecifiedBath;

impl BathTerm for UnspecifiedBath {
    fn superoperator(&self, _d: usize, _convention: Vectorization) -> Result<CsrMatrix> {
        Err(Error::Unsupported("bath superoperator has no defined form".into()))
    }
}

/// `H(t) = base + f(t) drive`.
pub struct DrivenHamiltonian<'a> {
    pub base: CsrMatrix,
    pub drive: CsrMatrix,
    pub profile: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
}

impl<'a> DrivenHamiltonian<'a> {
    pub fn fixed(h: CsrMatrix) -> Self {
        let d = h.dim();
        Self { base: h, drive: CsrMatrix::zeros(d), profile: Box::new(|_| 0.0) }
    }

    /// The model with `lambda(t) = lambda0 + d_lambda P_e(t)`.
    pub fn model(params: &ModelParams, envelope: &'a PulseEnvelope) -> Result<Self> {
        let terms = HamiltonianTerms::for_params(params)?;
        let base = terms.assemble(params.epsilon, 0.0, params.jx, params.jy);
        let lambda0 = params.lambda;
        Ok(Self { base, drive: terms.coupling, profile: Box::new(move |t| envelope.coupling(lambda0, t)) })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleOptions {
    pub dt: f64,
    pub t_final: f64,
    pub convention: Vectorization,
    /// Largest `d` for which explicit superoperators are built.
    pub explicit_limit: usize,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    /// Keep `rho` every `store_every` steps (and always at the last step).
    pub store_every: usize,
    pub check_step: bool,
    pub step_tol: f64,
}

impl Default for LiouvilleOptions {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_final: 50.0,
            convention: Vectorization::RowStacking,
            explicit_limit: 400,
            krylov_dim: 30,
            krylov_tol: 1e-12,
            store_every: 50,
            check_step: false,
            step_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LiouvilleTrajectory {
    pub dt: f64,
    pub convention: Vectorization,
    pub times: Vec<f64>,
    /// `Re Tr rho`
    pub trace: Vec<f64>,
    /// `Re Tr[rho M_j]` per monitored observable, one series each.
    pub monitors: Vec<Vec<f64>>,
    pub stored: Vec<(f64, Array2<C64>)>,
    pub convergence: Option<ConvergenceReport>,
}

impl LiouvilleTrajectory {
    /// `<n>^2 / Var(n)` from the `n` and `n^2` monitors of a model run.
    pub fn sqnr(&self) -> Result<Vec<f64>> {
        if self.monitors.len() < 2 {
            return Err(Error::InvalidParams("sqnr needs the n and n^2 monitors".into()));
        }
        Ok(self.monitors[0]
            .iter()
            .zip(&self.monitors[1])
            .map(|(n, n2)| {
                let var = n2 - n * n;
                if var < 1e-14 { f64::INFINITY } else { n * n / var }
            })
            .collect())
    }

    /// `Tr[rho(0) rho(t)]` from the third monitor of a model run; equals the echo for pure states.
    pub fn echo(&self) -> Result<Vec<f64>> {
        self.monitors.get(2).cloned().ok_or_else(|| Error::InvalidParams("echo needs the rho(0) monitor".into()))
    }

    /// First monitored expectation divided by its initial value.
    pub fn monitor_gain(&self) -> Result<Vec<f64>> {
        let m = self.monitors.first().ok_or_else(|| Error::InvalidParams("no monitored observable".into()))?;
        let n0 = m[0];
        if n0 < 1e-14 {
            return Err(Error::DegenerateDenominator { n0 });
        }
        Ok(m.iter().map(|x| x / n0).collect())
    }
}

/// The commutator generator `K(t) = K_base + f K_drive`, explicit or matrix-free.
enum Generator {
    Explicit { base: CsrMatrix, drive: CsrMatrix },
    MatrixFree { base: Vec<(usize, usize, C64)>, drive: Vec<(usize, usize, C64)>, d: usize, convention: Vectorization },
}

struct GeneratorAt<'a> {
    g: &'a Generator,
    f: f64,
}

fn commutator_into(trip: &[(usize, usize, C64)], s: C64, d: usize, conv: Vectorization, x: &[C64], y: &mut [C64]) {
    for &(i, k, h) in trip {
        let h = h * s;
        for n in 0..d {
            y[conv.index(d, i, n)] += h * x[conv.index(d, k, n)];
        }
        for m in 0..d {
            y[conv.index(d, m, k)] -= x[conv.index(d, m, i)] * h;
        }
    }
}

impl LinearOperator for GeneratorAt<'_> {
    fn dim(&self) -> usize {
        match self.g {
            Generator::Explicit { base, .. } => base.dim(),
            Generator::MatrixFree { d, .. } => d * d,
        }
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        match self.g {
            Generator::Explicit { base, drive } => {
                base.matvec(x, y);
                if self.f != 0.0 {
                    let t = drive.apply(x);
                    for (yi, ti) in y.iter_mut().zip(t) {
                        *yi += self.f * ti;
                    }
                }
            }
            Generator::MatrixFree { base, drive, d, convention } => {
                y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                commutator_into(base, C64::new(1.0, 0.0), *d, *convention, x, y);
                if self.f != 0.0 {
                    commutator_into(drive, C64::new(self.f, 0.0), *d, *convention, x, y);
                }
            }
        }
    }
}

fn check_physical(rho: &Array2<C64>) -> Result<()> {
    let herm = linalg::hermiticity_deviation(rho);
    if herm > 1e-10 {
        return Err(Error::NonHermitianInput { deviation: herm });
    }
    let tr: C64 = rho.diag().sum();
    if (tr - 1.0).norm() > 1e-10 {
        return Err(Error::InvalidParams(format!("initial density matrix has trace {tr}")));
    }
    let (w, _) = linalg::eigh(rho)?;
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::InvalidParams(format!("initial density matrix has eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// Steps `|rho>` with `exp(L(t_k + dt/2) dt)`, `L = -i K`, via the Krylov propagator.
pub fn evolve_liouville(
    rho0: &Array2<C64>,
    hamiltonian: &DrivenHamiltonian,
    monitors: &[&Array2<C64>],
    bath: Option<&dyn BathTerm>,
    opts: &LiouvilleOptions,
) -> Result<LiouvilleTrajectory> {
    let mut traj = evolve_liouville_unchecked(rho0, hamiltonian, monitors, bath, opts)?;
    if opts.check_step {
        let half = LiouvilleOptions { dt: opts.dt / 2.0, store_every: 0, check_step: false, ..opts.clone() };
        let fine = evolve_liouville_unchecked(rho0, hamiltonian, monitors, bath, &half)?;
        let report = liouville_step_report(&traj, &fine)?;
        if report.rel_change > opts.step_tol {
            return Err(Error::StepNonConverged { rel_change: report.rel_change });
        }
        traj.convergence = Some(report);
    }
    Ok(traj)
}

/// Monitored value at the first gain peak (or the last stamp) for `dt` and `dt/2`.
fn liouville_step_report(coarse: &LiouvilleTrajectory, fine: &LiouvilleTrajectory) -> Result<ConvergenceReport> {
    if coarse.monitors.is_empty() {
        return Err(Error::InvalidParams("the dt/2 check needs a monitored observable".into()));
    }
    let (k, at_final_time) = match coarse.monitor_gain().ok().and_then(|g| first_peak(&g).ok()) {
        Some(k) => (k, false),
        None => (coarse.times.len() - 1, true),
    };
    let t = coarse.times[k];
    let kf = ((t / fine.dt).round() as usize).min(fine.times.len() - 1);
    let (a, b) = (coarse.monitors[0][k], fine.monitors[0][kf]);
    let n0 = coarse.monitors[0][0];
    let scale = if n0.abs() >= 1e-14 { n0 } else { 1.0 };
    Ok(ConvergenceReport {
        dt: coarse.dt,
        t_peak: t,
        gain: a / scale,
        gain_half_step: b / scale,
        rel_change: (a - b).abs() / b.abs().max(1e-300),
        at_final_time,
    })
}

fn evolve_liouville_unchecked(
    rho0: &Array2<C64>,
    hamiltonian: &DrivenHamiltonian,
    monitors: &[&Array2<C64>],
    bath: Option<&dyn BathTerm>,
    opts: &LiouvilleOptions,
) -> Result<LiouvilleTrajectory> {
    let d = hamiltonian.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.nrows() });
    }
    check_same_dim(&hamiltonian.base, &hamiltonian.drive)?;
    ensure_hermitian(&hamiltonian.base)?;
    ensure_hermitian(&hamiltonian.drive)?;
    check_physical(rho0)?;
    if let Some(b) = bath {
        b.superoperator(d, opts.convention)?;
    }
    if !(opts.dt > 0.0 && opts.t_final >= 0.0) {
        return Err(Error::InvalidParams("dt must be positive and t_final non-negative".into()));
    }
    let conv = opts.convention;
    let gen = if d <= opts.explicit_limit {
        Generator::Explicit {
            base: commutator_superop(&hamiltonian.base, conv)?.matrix,
            drive: commutator_superop(&hamiltonian.drive, conv)?.matrix,
        }
    } else {
        Generator::MatrixFree { base: hamiltonian.base.triplets().collect(), drive: hamiltonian.drive.triplets().collect(), d, convention: conv }
    };
    let mon: Vec<VectorizedState> = monitors.iter().map(|o| vectorize(&linalg::dagger(o), conv)).collect::<Result<_>>()?;
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let expm = ExpmOptions { max_krylov: opts.krylov_dim, tol: opts.krylov_tol, ..Default::default() };
    let mut v: Vec<C64> = vectorize(rho0, conv)?.data.to_vec();
    let mut traj = LiouvilleTrajectory {
        dt: opts.dt,
        convention: conv,
        times: Vec::with_capacity(steps + 1),
        trace: Vec::with_capacity(steps + 1),
        monitors: vec![Vec::with_capacity(steps + 1); mon.len()],
        stored: Vec::new(),
        convergence: None,
    };
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        traj.times.push(t);
        traj.trace.push((0..d).map(|m| v[conv.index(d, m, m)].re).sum());
        for (o, series) in mon.iter().zip(traj.monitors.iter_mut()) {
            series.push(linalg::dotc(o.data.as_slice().unwrap(), &v).re);
        }
        if k == steps || (opts.store_every > 0 && k % opts.store_every == 0) {
            traj.stored.push((t, devectorize(&Array1::from(v.clone()), conv)?));
        }
        if k == steps {
            break;
        }
        let f = (hamiltonian.profile)(t + 0.5 * opts.dt);
        v = expm_multiply(&GeneratorAt { g: &gen, f }, &v, opts.dt, &expm)?;
    }
    let drift = traj.trace.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    if drift > 1e-8 {
        return Err(Error::NonConverged(format!("trace drift {drift:.3e} exceeds 1e-8")));
    }
    let herm = traj.stored.iter().map(|(_, r)| linalg::hermiticity_deviation(r)).fold(0.0, f64::max);
    if herm > 1e-8 {
        return Err(Error::NonConverged(format!("hermiticity drift {herm:.3e} exceeds 1e-8")));
    }
    Ok(traj)
}

/// Liouville run of the pulsed model from the projector on its ground state.
/// Monitors `n`, `n^2` and `rho(0)` (whose expectation is the echo).
/// Uses the full (both-parity) space.
pub fn evolve_liouville_model(
    params: &ModelParams,
    envelope: &PulseEnvelope,
    solver: &SolverConfig,
    opts: &LiouvilleOptions,
) -> Result<(LiouvilleTrajectory, Array2<C64>)> {
    let ed = EdSolver::for_params(params, solver.clone())?;
    let gs = ed.ground_state(params)?;
    let psi = gs.state.amplitudes();
    let rho0 = Array2::from_shape_fn((psi.len(), psi.len()), |(m, n)| psi[m] * psi[n].conj());
    let h = DrivenHamiltonian::model(params, envelope)?;
    let number = joint_number_operator(params.basis()).to_dense();
    let number_sq = number.dot(&number);
    let traj = evolve_liouville(&rho0, &h, &[&number, &number_sq, &rho0], None, opts)?;
    Ok((traj, rho0))
}
