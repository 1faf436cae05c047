//! Quench dynamics under `lambda(t) = lambda0 + d_lambda * P_e(t)` starting
//! from the ground state at `lambda0`.
//!
//! Each step applies `exp(-i dt H(t + dt/2))` with a Krylov propagator.
//! Parity is conserved, so the run is confined to the sector of the initial state.

use std::f64::consts::PI;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HamiltonianTerms, ModelParams, Parity, StateVector};
use crate::linalg::{self, expm_multiply, CsrMatrix, ExpmOptions, LinearOperator};
use crate::qfunction::{boson_q, spin_q, BosonQGrid, QConvention, SpinQGrid};
use crate::spectrum::{EdSolver, SolverConfig};
use crate::C64;

/// Floor applied to the echo before taking its logarithm.
pub const ECHO_FLOOR: f64 = 1e-300;
/// Gain must exceed `1 + NO_PEAK_MARGIN` somewhere for a peak to exist.
pub const NO_PEAK_MARGIN: f64 = 1e-3;
/// Minimum prominence of the first peak relative to the global maximum.
pub const PEAK_PROMINENCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    /// `sin^2(pi t / 2 tau)` up to `tau`.
    #[default]
    SinSquared,
    /// `t / tau` up to `tau`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseEnvelope {
    pub shape: EnvelopeShape,
    pub tau: f64,
    /// `d_lambda`
    pub amplitude: f64,
    pub plateau: f64,
}

impl Default for PulseEnvelope {
    fn default() -> Self {
        Self { shape: EnvelopeShape::SinSquared, tau: 10.0, amplitude: 0.01, plateau: 1.0 }
    }
}

impl PulseEnvelope {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParams(format!("envelope tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.plateau) {
            return Err(Error::InvalidParams(format!("envelope plateau must lie in [0, 1], got {}", self.plateau)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParams("envelope amplitude must be finite".into()));
        }
        Ok(())
    }

    /// `P_e(t)`, zero for `t <= 0`.
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let ramp = if t >= self.tau {
            1.0
        } else {
            match self.shape {
                EnvelopeShape::SinSquared => (0.5 * PI * t / self.tau).sin().powi(2),
                EnvelopeShape::Linear => t / self.tau,
            }
        };
        self.plateau * ramp
    }

    pub fn coupling(&self, lambda0: f64, t: f64) -> f64 {
        lambda0 + self.amplitude * self.value(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    /// Times at which full states are kept; must be multiples of `dt`.
    pub snapshot_times: Vec<f64>,
    /// Re-run at `dt/2` and compare the gain at the first peak.
    pub check_step: bool,
    /// Allowed relative change of the first-peak gain under `dt -> dt/2`.
    pub step_tol: f64,
    pub solver: SolverConfig,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_final: 150.0,
            krylov_dim: 30,
            krylov_tol: 1e-12,
            snapshot_times: Vec::new(),
            check_step: true,
            step_tol: 0.01,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub t_peak: f64,
    pub gain: f64,
    pub gain_half_step: f64,
    pub rel_change: f64,
    /// The comparison used the final time because no gain peak was found.
    pub at_final_time: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n_spins: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `<a^dag a>`
    pub number: Vec<f64>,
    /// `<(a^dag a)^2>`
    pub number_sq: Vec<f64>,
    /// `<psi(0)|psi(t)>`
    pub overlap: Vec<C64>,
    /// `<H(t)>` with the coupling at the stamp time.
    pub energy: Vec<f64>,
    pub norm: Vec<f64>,
    pub coupling: Vec<f64>,
    pub parity: Option<Parity>,
    pub snapshots: Vec<(f64, StateVector)>,
    pub convergence: Option<ConvergenceReport>,
}

/// `A x + lambda B x`
struct Affine<'a> {
    a: &'a CsrMatrix,
    b: &'a CsrMatrix,
    lambda: f64,
    scratch: std::sync::Mutex<Vec<C64>>,
}

impl LinearOperator for Affine<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.a.matvec(x, y);
        let mut s = self.scratch.lock().unwrap();
        self.b.matvec(x, &mut s);
        for (yi, si) in y.iter_mut().zip(s.iter()) {
            *yi += self.lambda * si;
        }
    }
}

fn stamp_index(t: f64, dt: f64, steps: usize) -> Result<usize> {
    let k = (t / dt).round();
    if k < 0.0 || k as usize > steps || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::InvalidParams(format!("snapshot time {t} is not a stamp of the dt = {dt} grid")));
    }
    Ok(k as usize)
}

/// Propagates the ground state of `params` (with `lambda = lambda0`) under the pulse.
pub fn evolve(params: &ModelParams, envelope: &PulseEnvelope, opts: &EvolveOptions) -> Result<Trajectory> {
    let mut traj = evolve_unchecked(params, envelope, opts)?;
    if opts.check_step {
        let half = EvolveOptions { dt: opts.dt / 2.0, snapshot_times: Vec::new(), check_step: false, ..opts.clone() };
        let fine = evolve_unchecked(params, envelope, &half)?;
        let report = step_report(&traj, &fine)?;
        if report.rel_change > opts.step_tol {
            return Err(Error::StepNonConverged { rel_change: report.rel_change });
        }
        traj.convergence = Some(report);
    }
    Ok(traj)
}

/// Compares the boson number at the coarse run's first gain peak with the
/// half-step run at the same time.
pub fn step_report(coarse: &Trajectory, fine: &Trajectory) -> Result<ConvergenceReport> {
    let n0 = coarse.number[0];
    let (k, at_final_time) = match quantum_gain(coarse).ok().and_then(|g| first_peak(&g).ok()) {
        Some(k) => (k, false),
        None => (coarse.times.len() - 1, true),
    };
    let t = coarse.times[k];
    let kf = ((t / fine.dt).round() as usize).min(fine.times.len() - 1);
    let (a, b) = (coarse.number[k], fine.number[kf]);
    let scale = if n0 >= 1e-14 { n0 } else { 1.0 };
    let rel = (a - b).abs() / b.abs().max(1e-300);
    Ok(ConvergenceReport { dt: coarse.dt, t_peak: t, gain: a / scale, gain_half_step: b / scale, rel_change: rel, at_final_time })
}

/// Propagation without the `dt/2` check.
pub fn evolve_unchecked(params: &ModelParams, envelope: &PulseEnvelope, opts: &EvolveOptions) -> Result<Trajectory> {
    envelope.validate()?;
    params.validate()?;
    if !(opts.dt > 0.0 && opts.t_final >= 0.0) {
        return Err(Error::InvalidParams("dt must be positive and t_final non-negative".into()));
    }
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let snaps: Vec<usize> = opts.snapshot_times.iter().map(|&t| stamp_index(t, opts.dt, steps)).collect::<Result<_>>()?;

    let solver = EdSolver::for_params(params, opts.solver.clone())?;
    let gs = solver.ground_state(params)?;
    let basis = params.basis();
    let idx: Vec<usize> = match gs.parity {
        Some(p) => basis.sector_indices(p),
        None => (0..basis.dim()).collect(),
    };
    let terms = HamiltonianTerms::for_params(params)?;
    let r = |x: f64| C64::new(x, 0.0);
    let full_static = CsrMatrix::linear_combination(&[
        (r(1.0), &terms.number),
        (r(params.epsilon), &terms.zeeman),
        (r(params.jx), &terms.exchange_x),
        (r(params.jy), &terms.exchange_y),
    ])?;
    let h0 = full_static.submatrix(&idx);
    let hc = terms.coupling.submatrix(&idx);
    let nvals: Vec<f64> = idx.iter().map(|&i| basis.label(i).n as f64).collect();

    let psi0: Vec<C64> = idx.iter().map(|&i| gs.state.amplitudes()[i]).collect();
    let mut psi = psi0.clone();
    let d = idx.len();
    let expm = ExpmOptions { max_krylov: opts.krylov_dim, tol: opts.krylov_tol, ..Default::default() };
    let mut traj = Trajectory {
        n_spins: params.n_spins,
        dt: opts.dt,
        times: Vec::with_capacity(steps + 1),
        number: Vec::with_capacity(steps + 1),
        number_sq: Vec::with_capacity(steps + 1),
        overlap: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        norm: Vec::with_capacity(steps + 1),
        coupling: Vec::with_capacity(steps + 1),
        parity: gs.parity,
        snapshots: Vec::new(),
        convergence: None,
    };
    let embed = |v: &[C64]| -> Result<StateVector> {
        let mut a = Array1::<C64>::zeros(basis.dim());
        for (&i, z) in idx.iter().zip(v) {
            a[i] = *z;
        }
        StateVector::new(basis, a)
    };
    let mut hx = vec![C64::new(0.0, 0.0); d];
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let lam_t = envelope.coupling(params.lambda, t);
        let op_t = Affine { a: &h0, b: &hc, lambda: lam_t, scratch: std::sync::Mutex::new(vec![C64::new(0.0, 0.0); d]) };
        op_t.apply_into(&psi, &mut hx);
        let (mut n1, mut n2, mut nn) = (0.0, 0.0, 0.0);
        for (z, &n) in psi.iter().zip(&nvals) {
            let p = z.norm_sqr();
            nn += p;
            n1 += p * n;
            n2 += p * n * n;
        }
        traj.times.push(t);
        traj.number.push(n1);
        traj.number_sq.push(n2);
        traj.norm.push(nn.sqrt());
        traj.overlap.push(linalg::dotc(&psi0, &psi));
        traj.energy.push(linalg::dotc(&psi, &hx).re);
        traj.coupling.push(lam_t);
        if snaps.contains(&k) {
            traj.snapshots.push((t, embed(&psi)?));
        }
        if k == steps {
            break;
        }
        let lam_mid = envelope.coupling(params.lambda, t + 0.5 * opts.dt);
        let op = Affine { a: &h0, b: &hc, lambda: lam_mid, scratch: std::sync::Mutex::new(vec![C64::new(0.0, 0.0); d]) };
        psi = expm_multiply(&op, &psi, opts.dt, &expm)?;
    }
    let drift = traj.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    if drift > 1e-8 {
        return Err(Error::NonConverged(format!("norm drift {drift:.3e} exceeds 1e-8")));
    }
    Ok(traj)
}

/// `g(t) = <n>_t / <n>_0`
pub fn quantum_gain(traj: &Trajectory) -> Result<Vec<f64>> {
    let n0 = traj.number[0];
    if n0 < 1e-14 {
        return Err(Error::DegenerateDenominator { n0 });
    }
    Ok(traj.number.iter().map(|n| n / n0).collect())
}

/// `<n>^2 / Var(n)`, `+inf` when the variance is below `1e-14`.
pub fn sqnr(traj: &Trajectory) -> Vec<f64> {
    traj.number
        .iter()
        .zip(&traj.number_sq)
        .map(|(n, n2)| {
            let var = n2 - n * n;
            if var < 1e-14 { f64::INFINITY } else { n * n / var }
        })
        .collect()
}

/// `L(t) = |<psi(0)|psi(t)>|^2`
pub fn loschmidt_echo(traj: &Trajectory) -> Vec<f64> {
    traj.overlap.iter().map(|z| z.norm_sqr()).collect()
}

/// `xi(t) = -ln(max(L, 1e-300)) / N`, optionally clipped at `ceiling`.
pub fn rate_function(traj: &Trajectory, ceiling: Option<f64>) -> Vec<f64> {
    let n = traj.n_spins as f64;
    loschmidt_echo(traj)
        .into_iter()
        .map(|l| {
            let xi = -l.max(ECHO_FLOOR).ln() / n;
            ceiling.map_or(xi, |c| xi.min(c))
        })
        .collect()
}

/// Topographic prominence of an interior sample.
pub fn prominence(v: &[f64], i: usize) -> f64 {
    let h = v[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if v[j] > h {
            break;
        }
        left_min = left_min.min(v[j]);
    }
    let mut right_min = h;
    for &x in &v[i + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Interior strict local maxima (plateaus count once, at their first sample).
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = v.len();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

pub fn local_minima(v: &[f64]) -> Vec<usize> {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    local_maxima(&neg)
}

/// First local maximum of the gain whose prominence is at least 5% of the global maximum.
pub fn first_peak(gain: &[f64]) -> Result<usize> {
    let gmax = gain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(gmax > 1.0 + NO_PEAK_MARGIN) {
        return Err(Error::NoPeak);
    }
    local_maxima(gain)
        .into_iter()
        .find(|&i| gain[i] > 1.0 + NO_PEAK_MARGIN && prominence(gain, i) >= PEAK_PROMINENCE * gmax)
        .ok_or(Error::NoPeak)
}

/// Indices of concave corners of `xi`: local minima of the second difference
/// lying more than `n_sigma` robust standard deviations (median absolute
/// deviation) below the median. A rate function switching between smooth
/// branches (`xi = min_i xi_i`) only produces corners of this sign.
pub fn rate_kinks(xi: &[f64], n_sigma: f64) -> Vec<usize> {
    if xi.len() < 5 {
        return Vec::new();
    }
    let d2: Vec<f64> = (1..xi.len() - 1).map(|i| xi[i + 1] - 2.0 * xi[i] + xi[i - 1]).collect();
    let med = median(&d2);
    let dev: Vec<f64> = d2.iter().map(|x| (x - med).abs()).collect();
    let sigma = 1.4826 * median(&dev);
    let thresh = n_sigma * sigma.max(1e-300);
    (1..d2.len() - 1)
        .filter(|&i| med - d2[i] > thresh && d2[i] <= d2[i - 1] && d2[i] <= d2[i + 1])
        .map(|i| i + 1)
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

/// Number of collapse-revival cycles: the echo falls below `collapse_below`
/// and afterwards climbs back above `revive_above`.
pub fn collapse_revival_cycles(echo: &[f64], collapse_below: f64, revive_above: f64) -> usize {
    let mut collapsed = false;
    let mut cycles = 0;
    for &l in echo {
        if !collapsed && l < collapse_below {
            collapsed = true;
        } else if collapsed && l > revive_above {
            collapsed = false;
            cycles += 1;
        }
    }
    cycles
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasPoint {
    pub lambda0: f64,
    pub n0: f64,
    /// Gain at the first peak; `None` when no peak qualifies.
    pub gain_peak: Option<f64>,
    pub sqnr_peak: Option<f64>,
    pub t_peak: Option<f64>,
    pub gain_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasScan {
    pub points: Vec<BiasPoint>,
    pub optimal_index: usize,
    pub convergence: Option<ConvergenceReport>,
}

impl BiasScan {
    pub fn optimal(&self) -> &BiasPoint {
        &self.points[self.optimal_index]
    }
}

/// Summary of one bias run.
pub fn bias_point(lambda0: f64, traj: &Trajectory) -> Result<BiasPoint> {
    let g = quantum_gain(traj)?;
    let s = sqnr(traj);
    let gain_max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(match first_peak(&g) {
        Ok(k) => BiasPoint { lambda0, n0: traj.number[0], gain_peak: Some(g[k]), sqnr_peak: Some(s[k]), t_peak: Some(traj.times[k]), gain_max },
        Err(_) => BiasPoint { lambda0, n0: traj.number[0], gain_peak: None, sqnr_peak: None, t_peak: None, gain_max },
    })
}

/// First-peak gain per bias; the `dt/2` check (if enabled) runs once, at the optimal bias.
pub fn bias_scan(params: &ModelParams, lambda0: &[f64], envelope: &PulseEnvelope, opts: &EvolveOptions) -> Result<BiasScan> {
    if lambda0.is_empty() {
        return Err(Error::InvalidParams("empty bias list".into()));
    }
    let run = EvolveOptions { check_step: false, snapshot_times: Vec::new(), ..opts.clone() };
    let points: Vec<BiasPoint> = lambda0
        .par_iter()
        .map(|&l| {
            let p = ModelParams { lambda: l, ..params.clone() };
            bias_point(l, &evolve_unchecked(&p, envelope, &run)?)
        })
        .collect::<Result<_>>()?;
    let optimal_index = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.gain_peak.map(|g| (i, g)))
        .fold(None, |best: Option<(usize, f64)>, (i, g)| match best {
            Some((_, bg)) if bg >= g => best,
            _ => Some((i, g)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::NoPeak)?;
    let mut convergence = None;
    if opts.check_step {
        let p = ModelParams { lambda: lambda0[optimal_index], ..params.clone() };
        let coarse = evolve_unchecked(&p, envelope, &run)?;
        let fine = evolve_unchecked(&p, envelope, &EvolveOptions { dt: opts.dt / 2.0, ..run.clone() })?;
        let report = step_report(&coarse, &fine)?;
        if report.rel_change > opts.step_tol {
            return Err(Error::StepNonConverged { rel_change: report.rel_change });
        }
        convergence = Some(report);
    }
    Ok(BiasScan { points, optimal_index, convergence })
}

#[derive(Clone, Debug)]
pub struct QSnapshot {
    pub t: f64,
    pub spin: SpinQGrid,
    pub boson: BosonQGrid,
}

/// Spin and boson Q-functions of stored snapshots.
pub fn qfunction_snapshots(
    traj: &Trajectory,
    times: &[f64],
    theta: &[f64],
    phi: &[f64],
    x: &[f64],
    y: &[f64],
    convention: QConvention,
) -> Result<Vec<QSnapshot>> {
    times
        .iter()
        .map(|&t| {
            let (_, s) = traj
                .snapshots
                .iter()
                .find(|(ts, _)| (ts - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| Error::InvalidParams(format!("no stored snapshot at t = {t}")))?;
            Ok(QSnapshot {
                t,
                spin: spin_q(&s.reduced_spin_density(), theta, phi, convention)?,
                boson: boson_q(&s.reduced_boson_density(), x, y)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn envelope_shape() {
        let e = PulseEnvelope::default();
        assert_eq!(e.value(0.0), 0.0);
        assert_abs_diff_eq!(e.value(5.0), 0.5, epsilon = 1e-15);
        assert_eq!(e.value(10.0), 1.0);
        assert_eq!(e.value(50.0), 1.0);
        assert_abs_diff_eq!(e.coupling(0.7, 20.0), 0.71, epsilon = 1e-15);
        let lin = PulseEnvelope { shape: EnvelopeShape::Linear, plateau: 0.5, ..e };
        assert_abs_diff_eq!(lin.value(4.0), 0.2, epsilon = 1e-15);
        assert!(PulseEnvelope { plateau: 1.5, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn envelope_is_monotone_and_bounded(tau in 0.1f64..50.0, t1 in 0.0f64..100.0, dt in 0.0f64..10.0, lin in proptest::bool::ANY) {
            let e = PulseEnvelope { shape: if lin { EnvelopeShape::Linear } else { EnvelopeShape::SinSquared }, tau, ..Default::default() };
            let (a, b) = (e.value(t1), e.value(t1 + dt));
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn peak_rules() {
        let g = [1.0, 1.5, 1.4, 1.45, 1.3, 3.0, 2.0, 2.5, 1.0];
        // the bump at index 3 has prominence 0.05 < 5% of 3.0
        assert_eq!(local_maxima(&g), vec![1, 3, 5, 7]);
        assert_abs_diff_eq!(prominence(&g, 1), 0.2, epsilon = 1e-12);
        assert_eq!(first_peak(&g).unwrap(), 1);
        assert!(matches!(first_peak(&[1.0, 1.0005, 1.0]), Err(Error::NoPeak)));
        assert_eq!(local_minima(&[3.0, 1.0, 2.0, 2.0, 0.5, 4.0]), vec![1, 4]);
    }

    #[test]
    fn plateau_maximum_counts_once() {
        assert_eq!(local_maxima(&[0.0, 2.0, 2.0, 1.0, 3.0, 3.0]), vec![1]);
    }

    #[test]
    fn collapse_revival_counting() {
        let l = [1.0, 0.5, 0.05, 0.4, 0.8, 0.02, 0.7, 0.3];
        assert_eq!(collapse_revival_cycles(&l, 0.1, 0.6), 2);
    }

    #[test]
    fn kinks_found_at_cusps() {
        // 1 - |sin| has concave corners at multiples of pi
        let xi: Vec<f64> = (0..2000).map(|k| 1.0 - (k as f64 * 0.01).sin().abs()).collect();
        let kinks = rate_kinks(&xi, 5.0);
        assert!(!kinks.is_empty());
        for k in kinks {
            let t = k as f64 * 0.01;
            let nearest = (t / PI).round() * PI;
            assert!((t - nearest).abs() <= 0.0101, "kink at {t}");
        }
        // smooth maxima of |sin| are not corners
        let smooth: Vec<f64> = (0..2000).map(|k| (k as f64 * 0.01).sin().powi(2)).collect();
        assert!(rate_kinks(&smooth, 5.0).is_empty());
    }

    #[test]
    fn coherent_statistics() {
        // SQNR of a Poisson distribution with mean 4 is 4
        let nb = 60;
        let c = crate::qfunction::truncated_coherent_state(C64::new(2.0, 0.0), nb);
        let (n1, n2) = c.iter().enumerate().fold((0.0, 0.0), |(a, b), (n, z)| (a + n as f64 * z.norm_sqr(), b + (n * n) as f64 * z.norm_sqr()));
        let t = Trajectory {
            n_spins: 1,
            dt: 1.0,
            times: vec![0.0],
            number: vec![n1],
            number_sq: vec![n2],
            overlap: vec![C64::new(1.0, 0.0)],
            energy: vec![0.0],
            norm: vec![1.0],
            coupling: vec![0.0],
            parity: None,
            snapshots: vec![],
            convergence: None,
        };
        assert_abs_diff_eq!(sqnr(&t)[0], 4.0, epsilon = 1e-10);
        assert_eq!(rate_function(&t, None)[0], 0.0);
    }

    #[test]
    fn static_run_is_stationary() {
        let p = ModelParams::new(1.0, 0.4, 0.0, 0.3, 6, 8).unwrap();
        let env = PulseEnvelope { amplitude: 0.0, ..Default::default() };
        let opts = EvolveOptions { t_final: 5.0, check_step: false, ..Default::default() };
        let tr = evolve(&p, &env, &opts).unwrap();
        let g = quantum_gain(&tr).unwrap();
        assert_eq!(g[0], 1.0);
        assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-6));
        assert!(loschmidt_echo(&tr).iter().all(|l| (l - 1.0).abs() < 1e-8));
        assert!(matches!(first_peak(&g), Err(Error::NoPeak)));
    }

    #[test]
    fn decoupled_start_reports_degenerate_denominator() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0, 4, 4).unwrap();
        let tr = evolve_unchecked(&p, &PulseEnvelope::default(), &EvolveOptions { t_final: 1.0, ..Default::default() }).unwrap();
        assert!(matches!(quantum_gain(&tr), Err(Error::DegenerateDenominator { .. })));
    }

    #[test]
    fn snapshot_times_must_be_stamps() {
        let p = ModelParams::new(1.0, 0.3, 0.0, 0.0, 4, 6).unwrap();
        let bad = EvolveOptions { t_final: 1.0, snapshot_times: vec![0.011], check_step: false, ..Default::default() };
        assert!(evolve(&p, &PulseEnvelope::default(), &bad).is_err());
        let good = EvolveOptions { t_final: 1.0, snapshot_times: vec![0.0, 0.5, 1.0], check_step: false, ..Default::default() };
        let tr = evolve(&p, &PulseEnvelope::default(), &good).unwrap();
        assert_eq!(tr.snapshots.len(), 3);
        assert!(tr.snapshots.iter().all(|(_, s)| (s.norm() - 1.0).abs() < 1e-8));
    }
}
