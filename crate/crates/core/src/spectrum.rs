//! Exact diagonalization in the joint Fock (x) Dicke basis.
//!
//! The Hamiltonian conserves the excitation parity, so ground states are
//! computed per parity sector (dense LAPACK for small sectors, thick-restart
//! Lanczos otherwise) and the lower of the two is returned.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{polyfit, PolyFit};
use crate::hilbert::{spin_ops_csr, Coupling, HamiltonianTerms, ModelParams, Parity, SpinBosonBasis, StateVector};
use crate::linalg::{self, eigh, lowest_eigenpair, CsrMatrix, LanczosOptions};
use crate::meanfield::{OrderParameter, OrderParameters};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Sectors up to this dimension are diagonalized densely.
    pub dense_limit: usize,
    /// Accept an eigenpair when `||H v - E v|| <= residual_tol * ||H||`.
    pub residual_tol: f64,
    pub max_basis: usize,
    pub keep: usize,
    pub max_restarts: usize,
    /// Solve the two parity sectors separately.
    pub use_parity: bool,
    pub check_cutoff: bool,
    /// Largest allowed population of the top 10% Fock layers.
    pub tail_tol: f64,
    /// Refuse problems above this joint dimension.
    pub max_dim: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dense_limit: 256,
            residual_tol: 1e-8,
            max_basis: 64,
            keep: 16,
            max_restarts: 2000,
            use_parity: true,
            check_cutoff: true,
            tail_tol: 1e-6,
            max_dim: 200_000,
        }
    }
}

impl SolverConfig {
    fn lanczos(&self) -> LanczosOptions {
        LanczosOptions {
            tol: self.residual_tol * 1e-2,
            max_basis: self.max_basis,
            keep: self.keep,
            max_restarts: self.max_restarts,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    /// Sector the state was found in, `None` when parity was not used.
    pub parity: Option<Parity>,
    pub residual: f64,
}

#[derive(Clone, Debug)]
struct Sector {
    parity: Option<Parity>,
    indices: Vec<usize>,
    terms: [CsrMatrix; 5],
}

/// Reusable ground-state solver for one `(N, N_b)` pair.
#[derive(Clone, Debug)]
pub struct EdSolver {
    basis: SpinBosonBasis,
    cfg: SolverConfig,
    sectors: Vec<Sector>,
}

fn start_vector(n: usize) -> Vec<C64> {
    (0..n).map(|i| C64::new(1.0 + 0.5 * (1.3 * i as f64 + 0.7).sin(), 0.25 * (0.77 * i as f64).cos())).collect()
}

impl EdSolver {
    pub fn new(n_spins: usize, boson_cutoff: usize, cfg: SolverConfig) -> Result<Self> {
        let basis = SpinBosonBasis::new(n_spins, boson_cutoff);
        if basis.dim() > cfg.max_dim {
            return Err(Error::InvalidParams(format!(
                "dimension {} exceeds the configured limit {}",
                basis.dim(),
                cfg.max_dim
            )));
        }
        let t = HamiltonianTerms::new(n_spins, boson_cutoff)?;
        let full = [t.number, t.coupling, t.zeeman, t.exchange_x, t.exchange_y];
        let sectors = if cfg.use_parity {
            [Parity::Even, Parity::Odd]
                .into_iter()
                .map(|p| {
                    let idx = basis.sector_indices(p);
                    let terms = full.clone().map(|m| m.submatrix(&idx));
                    Sector { parity: Some(p), indices: idx, terms }
                })
                .filter(|s| !s.indices.is_empty())
                .collect()
        } else {
            vec![Sector { parity: None, indices: (0..basis.dim()).collect(), terms: full }]
        };
        Ok(Self { basis, cfg, sectors })
    }

    pub fn for_params(p: &ModelParams, cfg: SolverConfig) -> Result<Self> {
        p.validate()?;
        Self::new(p.n_spins, p.boson_cutoff, cfg)
    }

    pub fn basis(&self) -> SpinBosonBasis {
        self.basis
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn check(&self, p: &ModelParams) -> Result<()> {
        p.validate()?;
        if p.n_spins != self.basis.n_spins() || p.boson_cutoff != self.basis.boson_cutoff() {
            return Err(Error::DimensionMismatch { expected: self.basis.dim(), found: p.basis().dim() });
        }
        Ok(())
    }

    fn sector_matrix(s: &Sector, p: &ModelParams) -> CsrMatrix {
        let r = |x: f64| C64::new(x, 0.0);
        let [num, cpl, zee, exx, exy] = &s.terms;
        CsrMatrix::linear_combination(&[(r(1.0), num), (r(p.lambda), cpl), (r(p.epsilon), zee), (r(p.jx), exx), (r(p.jy), exy)])
            .expect("sector terms share a basis")
    }

    fn solve_sector(&self, s: &Sector, p: &ModelParams) -> Result<GroundState> {
        let h = Self::sector_matrix(s, p);
        let n = h.dim();
        let hnorm = h.norm_inf().max(1e-300);
        let (energy, local, residual) = if n <= self.cfg.dense_limit {
            let (w, v) = eigh(&h.to_dense())?;
            let x: Vec<C64> = v.column(0).to_vec();
            let hx = h.apply(&x);
            let r = hx.iter().zip(&x).map(|(a, b)| (a - b * w[0]).norm_sqr()).sum::<f64>().sqrt();
            (w[0], x, r)
        } else {
            let ep = lowest_eigenpair(&h, &start_vector(n), &self.cfg.lanczos())?;
            (ep.value, ep.vector.to_vec(), ep.residual)
        };
        if residual > self.cfg.residual_tol * hnorm {
            return Err(Error::NonConverged(format!(
                "eigen residual {residual:.3e} above {:.1e} * ||H||",
                self.cfg.residual_tol
            )));
        }
        let mut amps = Array1::<C64>::zeros(self.basis.dim());
        for (&i, z) in s.indices.iter().zip(local) {
            amps[i] = z;
        }
        let state = StateVector::new(self.basis, amps)?;
        Ok(GroundState { energy, state, parity: s.parity, residual })
    }

    fn cutoff_check(&self, gs: &GroundState) -> Result<()> {
        if self.cfg.check_cutoff {
            let tail = gs.state.boson_tail_population();
            if tail > self.cfg.tail_tol {
                return Err(Error::CutoffInsufficient { cutoff: self.basis.boson_cutoff(), tail });
            }
        }
        Ok(())
    }

    /// Lowest state of one parity sector.
    pub fn sector_ground_state(&self, p: &ModelParams, parity: Parity) -> Result<GroundState> {
        self.check(p)?;
        let s = self
            .sectors
            .iter()
            .find(|s| s.parity == Some(parity))
            .ok_or_else(|| Error::InvalidParams("solver was built without parity sectors".into()))?;
        let gs = self.solve_sector(s, p)?;
        self.cutoff_check(&gs)?;
        Ok(gs)
    }

    /// Lowest state per sector, in sector order (even, odd).
    pub fn sector_ground_states(&self, p: &ModelParams) -> Result<Vec<GroundState>> {
        self.check(p)?;
        self.sectors.iter().map(|s| self.solve_sector(s, p)).collect()
    }

    /// Global ground state; ties between sectors go to the even sector.
    pub fn ground_state(&self, p: &ModelParams) -> Result<GroundState> {
        let all = self.sector_ground_states(p)?;
        let gs = all
            .into_iter()
            .reduce(|a, b| if b.energy < a.energy { b } else { a })
            .expect("at least one sector");
        self.cutoff_check(&gs)?;
        Ok(gs)
    }

    /// Ground state of the given sector, or the global one when `sector` is `None`.
    pub fn ground_state_in(&self, p: &ModelParams, sector: Option<Parity>) -> Result<GroundState> {
        match sector {
            Some(par) if self.cfg.use_parity => self.sector_ground_state(p, par),
            _ => self.ground_state(p),
        }
    }
}

pub fn ground_state(params: &ModelParams) -> Result<GroundState> {
    ground_state_with(params, &SolverConfig::default())
}

pub fn ground_state_with(params: &ModelParams, cfg: &SolverConfig) -> Result<GroundState> {
    EdSolver::for_params(params, cfg.clone())?.ground_state(params)
}

/// `Tr(rho S)` for a dense `rho` and sparse `S` on the same space.
fn trace_product(rho: &Array2<C64>, s: &CsrMatrix) -> C64 {
    s.triplets().map(|(r, c, v)| rho[[c, r]] * v).sum()
}

pub fn order_parameters_ed(state: &StateVector, params: &ModelParams) -> Result<OrderParameters> {
    let b = params.basis();
    if state.basis() != b {
        return Err(Error::DimensionMismatch { expected: b.dim(), found: state.basis().dim() });
    }
    let nf = params.n_spins as f64;
    let pops = state.boson_populations();
    let nbar: f64 = pops.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let rho = state.reduced_spin_density();
    let (sx, sy, sz) = spin_ops_csr(params.n_spins);
    let sx2 = sx.matmul(&sx)?;
    let sy2 = sy.matmul(&sy)?;
    let norm2 = state.norm().powi(2);
    Ok(OrderParameters {
        zeta_s: nbar / nf / norm2,
        zeta_mx: trace_product(&rho, &sx2).re / (nf * nf) / norm2,
        zeta_my: trace_product(&rho, &sy2).re / (nf * nf) / norm2,
        m_z: trace_product(&rho, &sz).re / nf / norm2,
    })
}

/// Order parameters of a joint density matrix, e.g. a thermal state.
pub fn order_parameters_density(rho: &Array2<C64>, params: &ModelParams) -> Result<OrderParameters> {
    let b = params.basis();
    let rs = crate::qfunction::reduce_spin(rho, b)?;
    let rb = crate::qfunction::reduce_boson(rho, b)?;
    let nf = params.n_spins as f64;
    let tr = rs.diag().sum().re;
    let nbar: f64 = rb.diag().iter().enumerate().map(|(n, p)| n as f64 * p.re).sum();
    let (sx, sy, sz) = spin_ops_csr(params.n_spins);
    let sx2 = sx.matmul(&sx)?;
    let sy2 = sy.matmul(&sy)?;
    Ok(OrderParameters {
        zeta_s: nbar / nf / tr,
        zeta_mx: trace_product(&rs, &sx2).re / (nf * nf) / tr,
        zeta_my: trace_product(&rs, &sy2).re / (nf * nf) / tr,
        m_z: trace_product(&rs, &sz).re / nf / tr,
    })
}

/// `<Sx>, <Sy>, <a + a^dag>` of a state; all vanish on parity eigenstates.
pub fn odd_moments(state: &StateVector) -> [f64; 3] {
    let b = state.basis();
    let rho = state.reduced_spin_density();
    let (sx, sy, _) = spin_ops_csr(b.n_spins());
    let rb = state.reduced_boson_density();
    let x: f64 = (1..b.boson_cutoff()).map(|n| 2.0 * (n as f64).sqrt() * rb[[n - 1, n]].re).sum();
    [trace_product(&rho, &sx).re, trace_product(&rho, &sy).re, x]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpScanPoint {
    pub value: f64,
    pub energy: f64,
    pub parity: Option<Parity>,
    pub order: OrderParameters,
}

fn check_sorted(values: &[f64]) -> Result<()> {
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("scan values must be strictly ascending".into()));
    }
    Ok(())
}

/// Ground-state order parameters along one coupling axis.
pub fn op_scan(params: &ModelParams, axis: Coupling, values: &[f64], cfg: &SolverConfig) -> Result<Vec<OpScanPoint>> {
    check_sorted(values)?;
    let solver = EdSolver::for_params(params, cfg.clone())?;
    values
        .par_iter()
        .map(|&v| {
            let p = params.with_coupling(axis, v);
            let gs = solver.ground_state(&p)?;
            Ok(OpScanPoint { value: v, energy: gs.energy, parity: gs.parity, order: order_parameters_ed(&gs.state, &p)? })
        })
        .collect()
}

/// Order parameter differentiated along a coupling axis.
pub fn chi_order_parameter(axis: Coupling) -> Result<OrderParameter> {
    match axis {
        Coupling::Jx => Ok(OrderParameter::ZetaMx),
        Coupling::Lambda => Ok(OrderParameter::ZetaS),
        other => Err(Error::InvalidParams(format!("sensitivity is defined along jx or lambda, not {other:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiScan {
    pub axis: Coupling,
    pub order_parameter: OrderParameter,
    pub values: Vec<f64>,
    pub order: Vec<f64>,
    pub chi: Vec<f64>,
    pub sectors: Vec<Option<Parity>>,
    pub peak_index: usize,
    pub peak_location: f64,
    pub peak_height: f64,
    pub fd_step: f64,
    /// Peak height recomputed with `fd_step / 2`.
    pub guard_height: f64,
}

/// Sector-consistent central difference: the stencil points use the sector
/// holding the global ground state at the centre, so tunnelling-split sector
/// crossings do not enter the derivative as jumps.
struct ChiEvaluator<'a> {
    solver: &'a EdSolver,
    template: &'a ModelParams,
    axis: Coupling,
    op: OrderParameter,
}

impl ChiEvaluator<'_> {
    fn op_at(&self, v: f64, sector: Option<Parity>) -> Result<(f64, f64)> {
        let p = self.template.with_coupling(self.axis, v);
        let gs = self.solver.ground_state_in(&p, sector)?;
        Ok((order_parameters_ed(&gs.state, &p)?.get(self.op), gs.energy))
    }

    fn centre(&self, v: f64) -> Result<(f64, Option<Parity>)> {
        let p = self.template.with_coupling(self.axis, v);
        let gs = self.solver.ground_state(&p)?;
        Ok((order_parameters_ed(&gs.state, &p)?.get(self.op), gs.parity))
    }

    fn chi(&self, v: f64, h: f64, sector: Option<Parity>) -> Result<f64> {
        let lo = (v - h).max(0.0);
        let (a, _) = self.op_at(lo, sector)?;
        let (b, _) = self.op_at(v + h, sector)?;
        Ok((b - a) / (v + h - lo))
    }
}

/// Sensitivity `chi = d OP / d coupling` on a grid (OP is zeta_Mx for jx, zeta_S for lambda).
pub fn sensitivity_chi(
    params: &ModelParams,
    axis: Coupling,
    values: &[f64],
    fd_step: f64,
    cfg: &SolverConfig,
) -> Result<ChiScan> {
    let op = chi_order_parameter(axis)?;
    check_sorted(values)?;
    if values.is_empty() {
        return Err(Error::InvalidParams("empty scan".into()));
    }
    let spacing = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(fd_step > 0.0 && fd_step < spacing) {
        return Err(Error::InvalidParams(format!("fd_step {fd_step} must be positive and below the spacing {spacing}")));
    }
    let solver = EdSolver::for_params(params, cfg.clone())?;
    let ev = ChiEvaluator { solver: &solver, template: params, axis, op };
    let rows: Vec<(f64, f64, Option<Parity>)> = values
        .par_iter()
        .map(|&v| {
            let (o, sector) = ev.centre(v)?;
            Ok((o, ev.chi(v, fd_step, sector)?, sector))
        })
        .collect::<Result<_>>()?;
    let chi: Vec<f64> = rows.iter().map(|r| r.1).collect();
    if chi.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonConverged("non-finite sensitivity".into()));
    }
    let peak_index = argmax(&chi);
    let peak_height = chi[peak_index];
    let guard_height = ev.chi(values[peak_index], fd_step / 2.0, rows[peak_index].2)?;
    let rel = (guard_height - peak_height).abs() / peak_height.abs().max(1e-300);
    if rel > 0.02 {
        return Err(Error::NonConverged(format!(
            "halving fd_step changed the peak sensitivity by {:.2}% ({peak_height:.6e} -> {guard_height:.6e})",
            100.0 * rel
        )));
    }
    Ok(ChiScan {
        axis,
        order_parameter: op,
        values: values.to_vec(),
        order: rows.iter().map(|r| r.0).collect(),
        chi,
        sectors: rows.iter().map(|r| r.2).collect(),
        peak_index,
        peak_location: values[peak_index],
        peak_height,
        fd_step,
        guard_height,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiPeakOptions {
    pub coarse_points: usize,
    /// Initial finite-difference step; halved until two successive heights agree.
    pub fd_step: f64,
    pub max_halvings: u32,
    /// Relative agreement demanded between successive halvings.
    pub rel_tol: f64,
    pub golden_iterations: u32,
}

impl Default for ChiPeakOptions {
    fn default() -> Self {
        Self { coarse_points: 41, fd_step: 1e-4, max_halvings: 8, rel_tol: 0.02, golden_iterations: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorPeak {
    pub parity: Option<Parity>,
    pub location: f64,
    pub height: f64,
    /// This sector holds the global ground state at `location`.
    pub global: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiPeak {
    pub n_spins: usize,
    pub location: f64,
    pub height: f64,
    pub parity: Option<Parity>,
    pub fd_step: f64,
    pub candidates: Vec<SectorPeak>,
}

/// Refined maximum of the sector-consistent sensitivity in `[lo, hi]`.
///
/// Each sector's order parameter is scanned on a coarse grid; the steepest
/// interval is bisected to the midpoint of its step, the slope maximum is
/// polished by golden section, and the height is converged by halving the
/// difference step. The reported peak is the highest sector peak whose centre
/// lies in the sector that holds the global ground state.
pub fn locate_chi_peak(
    params: &ModelParams,
    axis: Coupling,
    lo: f64,
    hi: f64,
    opts: &ChiPeakOptions,
    cfg: &SolverConfig,
) -> Result<ChiPeak> {
    let op = chi_order_parameter(axis)?;
    if !(hi > lo) || opts.coarse_points < 3 {
        return Err(Error::InvalidParams("need hi > lo and at least 3 coarse points".into()));
    }
    let solver = EdSolver::for_params(params, cfg.clone())?;
    let ev = ChiEvaluator { solver: &solver, template: params, axis, op };
    let grid = crate::meanfield::linspace(lo, hi, opts.coarse_points);
    let sectors: Vec<Option<Parity>> = if cfg.use_parity { vec![Some(Parity::Even), Some(Parity::Odd)] } else { vec![None] };

    let per_sector: Vec<SectorPeak> = sectors
        .par_iter()
        .map(|&sector| sector_peak(&ev, &grid, sector, opts))
        .collect::<Result<_>>()?;

    let best = per_sector
        .iter()
        .filter(|c| c.global)
        .max_by(|a, b| a.height.total_cmp(&b.height))
        .cloned();
    let chosen = match best {
        Some(c) => c,
        // neither centre is globally lowest in its own sector: evaluate the
        // global sector's slope at each centre instead
        None => {
            let mut alt = Vec::new();
            for c in &per_sector {
                let (_, sec) = ev.centre(c.location)?;
                let (h, step) = converged_chi(&ev, c.location, sec, opts)?;
                alt.push((SectorPeak { parity: sec, location: c.location, height: h, global: true }, step));
            }
            alt.into_iter().max_by(|a, b| a.0.height.total_cmp(&b.0.height)).unwrap().0
        }
    };
    let (height, fd_step) = converged_chi(&ev, chosen.location, chosen.parity, opts)?;
    Ok(ChiPeak { n_spins: params.n_spins, location: chosen.location, height, parity: chosen.parity, fd_step, candidates: per_sector })
}

fn sector_peak(ev: &ChiEvaluator, grid: &[f64], sector: Option<Parity>, opts: &ChiPeakOptions) -> Result<SectorPeak> {
    let ops: Vec<f64> = grid.iter().map(|&v| ev.op_at(v, sector).map(|x| x.0)).collect::<Result<_>>()?;
    let i = argmax(&ops.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>());
    let (mut a, mut b) = (grid[i], grid[i + 1]);
    let (oa, ob) = (ops[i], ops[i + 1]);
    let mid = 0.5 * (oa + ob);
    let jump = (ob - oa).abs().max(1e-300);
    let spacing = grid[1] - grid[0];
    // bisect onto the half-step point
    let mut h = opts.fd_step;
    for _ in 0..60 {
        if b - a < 1e-3 * h.min(spacing) {
            break;
        }
        let c = 0.5 * (a + b);
        let (oc, _) = ev.op_at(c, sector)?;
        if oc < mid {
            a = c;
        } else {
            b = c;
        }
    }
    let centre = 0.5 * (a + b);
    // width estimate from the local slope, then golden section on chi
    let mut chi0 = ev.chi(centre, h, sector)?;
    let mut width = (jump / chi0.abs().max(1e-300)).min(spacing);
    while h > 0.05 * width && h > 1e-12 {
        h *= 0.5;
        chi0 = ev.chi(centre, h, sector)?;
        width = (jump / chi0.abs().max(1e-300)).min(spacing);
    }
    let (mut x0, mut x3) = ((centre - 2.0 * width).max(grid[0]), (centre + 2.0 * width).min(*grid.last().unwrap()));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = x3 - g * (x3 - x0);
    let mut x2 = x0 + g * (x3 - x0);
    let mut f1 = ev.chi(x1, h, sector)?;
    let mut f2 = ev.chi(x2, h, sector)?;
    let (mut best_x, mut best_f) = (centre, chi0);
    for _ in 0..opts.golden_iterations {
        if f1 > best_f {
            best_x = x1;
            best_f = f1;
        }
        if f2 > best_f {
            best_x = x2;
            best_f = f2;
        }
        if f1 >= f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - g * (x3 - x0);
            f1 = ev.chi(x1, h, sector)?;
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + g * (x3 - x0);
            f2 = ev.chi(x2, h, sector)?;
        }
    }
    let (_, global_sector) = ev.centre(best_x)?;
    let global = sector.is_none() || global_sector == sector;
    let (height, _) = converged_chi(ev, best_x, sector, &ChiPeakOptions { fd_step: h, ..opts.clone() })?;
    Ok(SectorPeak { parity: sector, location: best_x, height, global })
}

/// Halve the difference step until two successive sensitivities agree within `rel_tol`.
fn converged_chi(ev: &ChiEvaluator, v: f64, sector: Option<Parity>, opts: &ChiPeakOptions) -> Result<(f64, f64)> {
    let mut h = opts.fd_step;
    let mut prev = ev.chi(v, h, sector)?;
    for _ in 0..opts.max_halvings {
        let next = ev.chi(v, h / 2.0, sector)?;
        let rel = (next - prev).abs() / prev.abs().max(1e-300);
        h /= 2.0;
        if rel <= opts.rel_tol {
            return Ok((next, h));
        }
        prev = next;
    }
    Err(Error::NonConverged(format!(
        "sensitivity at {v} did not settle within {} step halvings",
        opts.max_halvings
    )))
}

/// Boson cutoff used for each N in a size ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    SameAsN,
    Fixed(usize),
    /// `max(N, value)`
    AtLeast(usize),
}

impl CutoffRule {
    pub fn cutoff(&self, n: usize) -> usize {
        match *self {
            CutoffRule::SameAsN => n,
            CutoffRule::Fixed(c) => c,
            CutoffRule::AtLeast(c) => n.max(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiFit {
    pub peaks: Vec<ChiPeak>,
    pub fit: PolyFit,
}

/// Peak sensitivity for each N and its least-squares quadratic `a N^2 + b N + c`.
pub fn chi_scaling_fit(
    template: &ModelParams,
    axis: Coupling,
    n_values: &[usize],
    range: (f64, f64),
    cutoff: CutoffRule,
    opts: &ChiPeakOptions,
    cfg: &SolverConfig,
) -> Result<ChiFit> {
    let mut distinct = n_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Underdetermined { points: distinct.len(), params: 3 });
    }
    let peaks: Vec<ChiPeak> = n_values
        .iter()
        .map(|&n| {
            let p = ModelParams { n_spins: n, boson_cutoff: cutoff.cutoff(n), ..template.clone() };
            locate_chi_peak(&p, axis, range.0, range.1, opts, cfg)
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = peaks.iter().map(|p| p.n_spins as f64).collect();
    let y: Vec<f64> = peaks.iter().map(|p| p.height).collect();
    let fit = polyfit(&x, &y, 2)?;
    Ok(ChiFit { peaks, fit })
}

/// Gibbs state `exp(-H/T)/Z` from a full dense eigen-decomposition.
pub fn thermal_state(params: &ModelParams, temperature: f64, cfg: &SolverConfig) -> Result<Array2<C64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParams(format!("temperature must be positive and finite, got {temperature}")));
    }
    params.validate()?;
    let dim = params.basis().dim();
    if dim > cfg.max_dim.min(6000) {
        return Err(Error::InvalidParams(format!("dimension {dim} too large for a dense thermal state")));
    }
    let h = HamiltonianTerms::for_params(params)?.assemble_params(params).to_dense();
    thermal_state_of(&h, temperature)
}

/// Gibbs state of an explicit Hermitian matrix.
pub fn thermal_state_of(h: &Array2<C64>, temperature: f64) -> Result<Array2<C64>> {
    let dev = linalg::hermiticity_deviation(h);
    if dev > 1e-10 {
        return Err(Error::NonHermitianInput { deviation: dev });
    }
    let (w, v) = eigh(h)?;
    let beta = 1.0 / temperature;
    let weights: Vec<f64> = w.iter().map(|e| (-beta * (e - w[0])).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut vw = v.clone();
    for (mut col, wt) in vw.columns_mut().into_iter().zip(&weights) {
        col.mapv_inplace(|c| c * (wt / z));
    }
    let mut rho = vw.dot(&linalg::dagger(&v));
    // symmetrize away rounding
    let rt = linalg::dagger(&rho);
    rho = (&rho + &rt).mapv(|c| c * 0.5);
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::BasisLabel;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn decoupled_ground_state() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, 10, 4).unwrap();
        let gs = ground_state(&p).unwrap();
        assert_abs_diff_eq!(gs.energy, -5.0, epsilon = 1e-12);
        let target = StateVector::basis_state(p.basis(), BasisLabel { n: 0, two_m: -10 }).unwrap();
        assert_abs_diff_eq!(gs.state.overlap(&target).norm(), 1.0, epsilon = 1e-12);
        let op = order_parameters_ed(&gs.state, &p).unwrap();
        assert_abs_diff_eq!(op.zeta_s, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(op.zeta_mx, 1.0 / 40.0, epsilon = 1e-14);
        assert_abs_diff_eq!(op.zeta_my, 1.0 / 40.0, epsilon = 1e-14);
        assert_abs_diff_eq!(op.m_z, -0.5, epsilon = 1e-14);
    }

    #[test]
    fn lanczos_and_dense_paths_agree() {
        let p = ModelParams::new(1.0, 0.45, 0.2, 0.7, 12, 10).unwrap();
        let dense = ground_state_with(&p, &SolverConfig { dense_limit: 10_000, ..Default::default() }).unwrap();
        let krylov = ground_state_with(&p, &SolverConfig { dense_limit: 0, ..Default::default() }).unwrap();
        let full = ground_state_with(&p, &SolverConfig { dense_limit: 0, use_parity: false, ..Default::default() }).unwrap();
        assert_abs_diff_eq!(dense.energy, krylov.energy, epsilon = 1e-10);
        assert_abs_diff_eq!(dense.energy, full.energy, epsilon = 1e-10);
        assert_eq!(dense.parity, krylov.parity);
    }

    #[test]
    fn cutoff_guard_fires_for_superradiant_state_in_tiny_cutoff() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0, 10, 4).unwrap();
        assert!(matches!(ground_state(&p), Err(Error::CutoffInsufficient { cutoff: 4, .. })));
    }

    #[test]
    fn mismatched_state_rejected() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, 4, 3).unwrap();
        let q = ModelParams::new(1.0, 0.0, 0.0, 0.0, 5, 3).unwrap();
        let s = ground_state(&p).unwrap().state;
        assert!(matches!(order_parameters_ed(&s, &q), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gibbs_weights_of_three_level_toy() {
        let h = array![[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)]];
        let rho = thermal_state_of(&h, 1.0).unwrap();
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        for (k, w) in [1.0, (-1.0f64).exp(), (-2.0f64).exp()].iter().enumerate() {
            assert_abs_diff_eq!(rho[[k, k]].re, w / z, epsilon = 1e-14);
        }
    }

    #[test]
    fn thermal_limits() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 0.2, 4, 4).unwrap();
        let d = p.basis().dim();
        let hot = thermal_state(&p, 1e6, &SolverConfig::default()).unwrap();
        for ((i, j), z) in hot.indexed_iter() {
            let want = if i == j { 1.0 / d as f64 } else { 0.0 };
            assert!((z - C64::new(want, 0.0)).norm() < 1e-6);
        }
        let cold = thermal_state(&p, 1e-6, &SolverConfig::default()).unwrap();
        let g = ground_state_with(&p, &SolverConfig { check_cutoff: false, ..Default::default() }).unwrap();
        let psi = g.state.amplitudes();
        let fid = linalg::dotc(psi.as_slice().unwrap(), &cold.dot(psi).to_vec()).re;
        assert!(fid >= 1.0 - 1e-6);
        let tr: C64 = cold.diag().sum();
        assert_abs_diff_eq!(tr.re, 1.0, epsilon = 1e-10);
        let a = order_parameters_density(&cold, &p).unwrap();
        let b = order_parameters_ed(&g.state, &p).unwrap();
        assert_abs_diff_eq!(a.zeta_s, b.zeta_s, epsilon = 1e-6);
        assert_abs_diff_eq!(a.zeta_mx, b.zeta_mx, epsilon = 1e-6);
        assert_abs_diff_eq!(a.m_z, b.m_z, epsilon = 1e-6);
    }

    #[test]
    fn chi_rejects_bad_inputs() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.6, 10, 2).unwrap();
        let cfg = SolverConfig::default();
        assert!(sensitivity_chi(&p, Coupling::Jy, &[0.1, 0.2], 1e-4, &cfg).is_err());
        assert!(sensitivity_chi(&p, Coupling::Jx, &[0.1, 0.2], 0.2, &cfg).is_err());
        assert!(sensitivity_chi(&p, Coupling::Jx, &[0.2, 0.1], 1e-4, &cfg).is_err());
        let r = chi_scaling_fit(&p, Coupling::Jx, &[10, 10, 10, 10], (0.3, 0.9), CutoffRule::Fixed(2), &ChiPeakOptions::default(), &cfg);
        assert!(matches!(r, Err(Error::Underdetermined { .. })));
    }
}
