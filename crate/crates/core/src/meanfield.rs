//! Variational mean-field solution with a boson coherent state `|sqrt(N) alpha>`
//! and a spin coherent state `|theta, phi>`.
//!
//! The three stationary branches are known in closed form, so they are
//! enumerated, checked for Hessian stability and compared by energy.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::ModelParams;
use crate::linalg::eigh_real;
use crate::C64;

/// Hessian eigenvalues at or above this count as non-negative.
pub const STABILITY_TOL: f64 = -1e-9;
/// Branch energies closer than this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    /// Normal phase.
    PN,
    /// Ferromagnetic phase, spin ordered along y, no photons.
    FN,
    /// Ferromagnetic superradiant phase, spin ordered along x with a displaced field.
    FS,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PN => "PN",
            Phase::FN => "FN",
            Phase::FS => "FS",
        }
    }

    /// Tie-break rank on a degenerate boundary: FS wins over FN over PN.
    fn preference(self) -> u8 {
        match self {
            Phase::FS => 0,
            Phase::FN => 1,
            Phase::PN => 2,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(zeta_S, zeta_Mx, zeta_My, M_z)`: photon density and spin moments per spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters {
    /// `<a^dag a>/N`
    pub zeta_s: f64,
    /// `<Sx^2>/N^2`
    pub zeta_mx: f64,
    /// `<Sy^2>/N^2`
    pub zeta_my: f64,
    /// `<Sz>/N`
    pub m_z: f64,
}

impl OrderParameters {
    /// Component selected by name in scans.
    pub fn get(&self, which: OrderParameter) -> f64 {
        match which {
            OrderParameter::ZetaS => self.zeta_s,
            OrderParameter::ZetaMx => self.zeta_mx,
            OrderParameter::ZetaMy => self.zeta_my,
            OrderParameter::Mz => self.m_z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderParameter {
    ZetaS,
    ZetaMx,
    ZetaMy,
    Mz,
}

/// A stationary point of the mean-field energy.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub phase: Phase,
    pub theta0: f64,
    /// Degenerate azimuths; empty for PN where the azimuth is undetermined.
    pub phi0: Vec<f64>,
    pub energy: f64,
}

impl Branch {
    /// Real boson amplitude at azimuth `phi`.
    pub fn alpha_at(&self, p: &ModelParams, phi: f64) -> f64 {
        match self.phase {
            Phase::FS => -p.lambda * self.theta0.sin() * phi.cos(),
            _ => 0.0,
        }
    }

    /// Azimuths at which the Hessian is evaluated. For PN the Hessian depends on the
    /// free azimuth only through `cos^2 phi`, so its extremes sit at 0 and pi/2.
    pub fn probe_azimuths(&self) -> Vec<f64> {
        if self.phi0.is_empty() { vec![0.0, PI / 2.0] } else { self.phi0.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldSolution {
    pub phase: Phase,
    /// Boson amplitude on the first azimuth branch.
    pub alpha0: f64,
    pub theta0: f64,
    pub phi0_branches: Vec<f64>,
    pub energy: f64,
    /// One triple per probed azimuth, ascending.
    pub hessian_eigenvalues: Vec<[f64; 3]>,
    /// Another stable branch is degenerate within [`DEGENERACY_TOL`].
    pub boundary: bool,
}

/// `E(alpha, theta, phi) = <H>/N` on the product of coherent states.
pub fn mean_field_energy(alpha: C64, theta: f64, phi: f64, p: &ModelParams) -> f64 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    alpha.norm_sqr() + 0.5 * p.epsilon * ct + p.lambda * 2.0 * alpha.re * st * cp
        - 0.5 * p.jx * st * st * cp * cp
        - 0.5 * p.jy * st * st * sp * sp
}

/// Closed-form stationary branches: PN always, FN iff `2 Jy >= eps`, FS iff `4 lambda^2 + 2 Jx >= eps`.
pub fn equilibrium_branches(p: &ModelParams) -> Vec<Branch> {
    let mut out = vec![Branch { phase: Phase::PN, theta0: PI, phi0: Vec::new(), energy: -0.5 * p.epsilon }];
    if 2.0 * p.jy >= p.epsilon {
        let theta0 = (-p.epsilon / (2.0 * p.jy)).clamp(-1.0, 1.0).acos();
        let phi = PI / 2.0;
        out.push(Branch {
            phase: Phase::FN,
            theta0,
            phi0: vec![phi, 3.0 * PI / 2.0],
            energy: mean_field_energy(C64::new(0.0, 0.0), theta0, phi, p),
        });
    }
    let k = 4.0 * p.lambda * p.lambda + 2.0 * p.jx;
    if k >= p.epsilon {
        let theta0 = (-p.epsilon / k).clamp(-1.0, 1.0).acos();
        let alpha = -p.lambda * theta0.sin();
        out.push(Branch {
            phase: Phase::FS,
            theta0,
            phi0: vec![0.0, PI],
            energy: mean_field_energy(C64::new(alpha, 0.0), theta0, 0.0, p),
        });
    }
    out
}

/// Closed-form Hessian of `E` in `(alpha, theta, phi)` with real `alpha`.
pub fn hessian_at(alpha: f64, theta: f64, phi: f64, p: &ModelParams) -> [[f64; 3]; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let lam = p.lambda;
    let (jx, jy) = (p.jx, p.jy);
    let m11 = 2.0;
    let m22 = -0.5 * p.epsilon * ct - 2.0 * lam * alpha * st * cp - (jx * cp * cp + jy * sp * sp) * (2.0 * theta).cos();
    let m33 = -2.0 * lam * alpha * st * cp + (jx - jy) * st * st * (2.0 * phi).cos();
    let m12 = 2.0 * lam * ct * cp;
    let m13 = -2.0 * lam * st * sp;
    let m23 = -2.0 * lam * alpha * ct * sp + 0.5 * (jx - jy) * (2.0 * theta).sin() * (2.0 * phi).sin();
    [[m11, m12, m13], [m12, m22, m23], [m13, m23, m33]]
}

pub fn symmetric_eigenvalues(m: &[[f64; 3]; 3]) -> Result<[f64; 3]> {
    let a = Array2::from_shape_fn((3, 3), |(i, j)| m[i][j]);
    let (w, _) = eigh_real(&a)?;
    Ok([w[0], w[1], w[2]])
}

/// Hessian matrix and eigenvalues at each probed azimuth of a branch.
pub fn hessian(p: &ModelParams, branch: &Branch) -> Result<Vec<([[f64; 3]; 3], [f64; 3])>> {
    branch
        .probe_azimuths()
        .into_iter()
        .map(|phi| {
            let m = hessian_at(branch.alpha_at(p, phi), branch.theta0, phi, p);
            Ok((m, symmetric_eigenvalues(&m)?))
        })
        .collect()
}

/// Order parameters from a coherent-state point.
pub fn order_parameters_from_angles(theta: f64, phi: f64, p: &ModelParams) -> OrderParameters {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    OrderParameters {
        zeta_s: p.lambda * p.lambda * st * st * cp * cp,
        zeta_mx: st * st * cp * cp / 4.0,
        zeta_my: st * st * sp * sp / 4.0,
        m_z: ct / 2.0,
    }
}

/// Closed-form order parameters of a phase.
pub fn table_order_parameters(phase: Phase, p: &ModelParams) -> OrderParameters {
    let eps = p.epsilon;
    match phase {
        Phase::PN => OrderParameters { zeta_s: 0.0, zeta_mx: 0.0, zeta_my: 0.0, m_z: -0.5 },
        Phase::FN => OrderParameters {
            zeta_s: 0.0,
            zeta_mx: 0.0,
            zeta_my: (1.0 - eps * eps / (4.0 * p.jy * p.jy)) / 4.0,
            m_z: -eps / (4.0 * p.jy),
        },
        Phase::FS => {
            let k = 4.0 * p.lambda * p.lambda + 2.0 * p.jx;
            let s2 = 1.0 - eps * eps / (k * k);
            OrderParameters { zeta_s: p.lambda * p.lambda * s2, zeta_mx: s2 / 4.0, zeta_my: 0.0, m_z: -eps / (2.0 * k) }
        }
    }
}

/// Minimum-energy stable branch and its order parameters.
pub fn classify_phase(p: &ModelParams) -> Result<(MeanFieldSolution, OrderParameters)> {
    let mut stable = Vec::new();
    for b in equilibrium_branches(p) {
        let h = hessian(p, &b)?;
        if h.iter().all(|(_, w)| w[0] >= STABILITY_TOL) {
            stable.push((b, h));
        }
    }
    // PN is stable whenever the other branches do not exist; on exact boundaries the
    // tolerance keeps at least one branch. Fall back to the lowest energy regardless.
    if stable.is_empty() {
        for b in equilibrium_branches(p) {
            let h = hessian(p, &b)?;
            stable.push((b, h));
        }
    }
    let emin = stable.iter().map(|(b, _)| b.energy).fold(f64::INFINITY, f64::min);
    let mut near: Vec<_> = stable.into_iter().filter(|(b, _)| b.energy - emin <= DEGENERACY_TOL).collect();
    let boundary = near.len() > 1;
    near.sort_by_key(|(b, _)| b.phase.preference());
    let (b, h) = near.swap_remove(0);
    let phi = b.probe_azimuths()[0];
    let sol = MeanFieldSolution {
        phase: b.phase,
        alpha0: b.alpha_at(p, phi),
        theta0: b.theta0,
        phi0_branches: b.phi0.clone(),
        energy: b.energy,
        hessian_eigenvalues: h.into_iter().map(|(_, w)| w).collect(),
        boundary,
    };
    Ok((sol, table_order_parameters(b.phase, p)))
}

/// Axis of a mean-field phase diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramAxis {
    /// `2 lambda^2 + Jx`
    Composite,
    Jy,
    Epsilon,
}

/// How a composite value `c = 2 lambda^2 + Jx` is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeSplit {
    /// Keep lambda from the template, `Jx = c - 2 lambda^2`.
    #[default]
    ViaJx,
    /// Keep Jx from the template, `lambda = sqrt((c - Jx)/2)`.
    ViaLambda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub axis: DiagramAxis,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.points)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn set_axis(p: &mut ModelParams, axis: DiagramAxis, v: f64, split: CompositeSplit) -> Result<()> {
    match axis {
        DiagramAxis::Jy => p.jy = v,
        DiagramAxis::Epsilon => p.epsilon = v,
        DiagramAxis::Composite => match split {
            CompositeSplit::ViaJx => {
                let jx = v - 2.0 * p.lambda * p.lambda;
                if jx < -1e-12 {
                    return Err(Error::InvalidParams(format!(
                        "composite value {v} below 2 lambda^2 = {}",
                        2.0 * p.lambda * p.lambda
                    )));
                }
                p.jx = jx.max(0.0);
            }
            CompositeSplit::ViaLambda => {
                let l2 = (v - p.jx) / 2.0;
                if l2 < -1e-12 {
                    return Err(Error::InvalidParams(format!("composite value {v} below Jx = {}", p.jx)));
                }
                p.lambda = l2.max(0.0).sqrt();
            }
        },
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisRange,
    pub y: AxisRange,
    #[serde(default)]
    pub split: CompositeSplit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub phase: Phase,
    pub order: OrderParameters,
    /// Degenerate branches at this point, or a 4-neighbour in another phase.
    pub boundary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub spec: GridSpec,
    /// Row-major, `y` is the slow index: `cells[iy * nx + ix]`.
    pub cells: Vec<GridCell>,
}

/// A straight boundary line between two phases, fitted through cell-edge midpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundarySegment {
    pub phases: [Phase; 2],
    pub points: Vec<[f64; 2]>,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

pub fn phase_diagram_grid(template: &ModelParams, spec: &GridSpec) -> Result<PhaseGrid> {
    if spec.x.points < 2 || spec.y.points < 2 {
        return Err(Error::InvalidParams("phase grid needs at least 2 points per axis".into()));
    }
    if spec.x.axis == spec.y.axis {
        return Err(Error::InvalidParams("phase grid axes must differ".into()));
    }
    for r in [&spec.x, &spec.y] {
        if !(r.min >= 0.0 && r.max > r.min) {
            return Err(Error::InvalidParams(format!("bad range [{}, {}] on {:?}", r.min, r.max, r.axis)));
        }
    }
    let xs = spec.x.values();
    let ys = spec.y.values();
    let nx = xs.len();
    let coords: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let solved: Vec<(Phase, OrderParameters, bool)> = coords
        .par_iter()
        .map(|&(x, y)| {
            let mut p = template.clone();
            set_axis(&mut p, spec.x.axis, x, spec.split)?;
            set_axis(&mut p, spec.y.axis, y, spec.split)?;
            p.validate()?;
            let (sol, op) = classify_phase(&p)?;
            Ok((sol.phase, op, sol.boundary))
        })
        .collect::<Result<_>>()?;
    let ny = ys.len();
    let mut cells: Vec<GridCell> = coords
        .iter()
        .zip(&solved)
        .map(|(&(x, y), &(phase, order, boundary))| GridCell { x, y, phase, order, boundary })
        .collect();
    for iy in 0..ny {
        for ix in 0..nx {
            let ph = solved[iy * nx + ix].0;
            let mut nb = Vec::new();
            if ix > 0 {
                nb.push(iy * nx + ix - 1);
            }
            if ix + 1 < nx {
                nb.push(iy * nx + ix + 1);
            }
            if iy > 0 {
                nb.push((iy - 1) * nx + ix);
            }
            if iy + 1 < ny {
                nb.push((iy + 1) * nx + ix);
            }
            if nb.iter().any(|&k| solved[k].0 != ph) {
                cells[iy * nx + ix].boundary = true;
            }
        }
    }
    Ok(PhaseGrid { spec: spec.clone(), cells })
}

impl PhaseGrid {
    pub fn nx(&self) -> usize {
        self.spec.x.points
    }

    pub fn ny(&self) -> usize {
        self.spec.y.points
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &GridCell {
        &self.cells[iy * self.nx() + ix]
    }

    /// Midpoints between adjacent cells of different phase, tagged by the (sorted) phase pair.
    pub fn boundary_points(&self) -> Vec<([Phase; 2], [f64; 2])> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let a = self.cell(ix, iy);
                for (jx, jy) in [(ix + 1, iy), (ix, iy + 1)] {
                    if jx >= nx || jy >= ny {
                        continue;
                    }
                    let b = self.cell(jx, jy);
                    if a.phase != b.phase {
                        let mut pair = [a.phase, b.phase];
                        pair.sort();
                        out.push((pair, [(a.x + b.x) / 2.0, (a.y + b.y) / 2.0]));
                    }
                }
            }
        }
        out
    }

    /// One segment per adjacent phase pair, spanning its extreme boundary points.
    pub fn boundary_segments(&self) -> Vec<BoundarySegment> {
        let pts = self.boundary_points();
        let mut pairs: Vec<[Phase; 2]> = pts.iter().map(|(p, _)| *p).collect();
        pairs.sort();
        pairs.dedup();
        pairs
            .into_iter()
            .map(|pair| {
                let points: Vec<[f64; 2]> = pts.iter().filter(|(p, _)| *p == pair).map(|(_, x)| *x).collect();
                // endpoints along the direction of largest spread
                let (xmin, xmax) = extent(points.iter().map(|p| p[0]));
                let (ymin, ymax) = extent(points.iter().map(|p| p[1]));
                let key = |p: &[f64; 2]| if xmax - xmin >= ymax - ymin { p[0] } else { p[1] };
                let start = *points.iter().min_by(|a, b| key(a).total_cmp(&key(b))).unwrap();
                let end = *points.iter().max_by(|a, b| key(a).total_cmp(&key(b))).unwrap();
                BoundarySegment { phases: pair, points, start, end }
            })
            .collect()
    }

    /// Centre of the 2x2 cell blocks that contain all three phases.
    pub fn triple_point(&self) -> Option<[f64; 2]> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut acc = [0.0, 0.0];
        let mut count = 0usize;
        for iy in 0..ny.saturating_sub(1) {
            for ix in 0..nx.saturating_sub(1) {
                let block = [self.cell(ix, iy), self.cell(ix + 1, iy), self.cell(ix, iy + 1), self.cell(ix + 1, iy + 1)];
                let has = |ph: Phase| block.iter().any(|c| c.phase == ph);
                if has(Phase::PN) && has(Phase::FN) && has(Phase::FS) {
                    acc[0] += block.iter().map(|c| c.x).sum::<f64>() / 4.0;
                    acc[1] += block.iter().map(|c| c.y).sum::<f64>() / 4.0;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| [acc[0] / count as f64, acc[1] / count as f64])
    }
}

fn extent(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(eps: f64, lam: f64, jx: f64, jy: f64) -> ModelParams {
        ModelParams::new(eps, lam, jx, jy, 10, 10).unwrap()
    }

    fn e_real(x: [f64; 3], p: &ModelParams) -> f64 {
        mean_field_energy(C64::new(x[0], 0.0), x[1], x[2], p)
    }

    fn fd_gradient(x: [f64; 3], p: &ModelParams, h: f64) -> [f64; 3] {
        let mut g = [0.0; 3];
        for i in 0..3 {
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            g[i] = (e_real(a, p) - e_real(b, p)) / (2.0 * h);
        }
        g
    }

    fn fd_hessian(x: [f64; 3], p: &ModelParams, h: f64) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let f = |di: f64, dj: f64| {
                    let mut y = x;
                    y[i] += di;
                    y[j] += dj;
                    e_real(y, p)
                };
                m[i][j] = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
            }
        }
        m
    }

    #[test]
    fn energy_examples() {
        assert_abs_diff_eq!(e_real([0.0, PI, 1.3], &params(1.0, 0.0, 0.0, 0.0)), -0.5, epsilon = 1e-15);
        let p = params(1.0, 0.0, 0.0, 0.6);
        let th = (-1.0f64 / 1.2).acos();
        assert_abs_diff_eq!(e_real([0.0, th, PI / 2.0], &p), -(1.0 / 4.8 + 0.3), epsilon = 1e-14);
    }

    #[test]
    fn complex_alpha_enters_through_real_part() {
        let p = params(1.0, 0.4, 0.1, 0.2);
        let a = mean_field_energy(C64::new(0.3, 0.5), 1.0, 0.4, &p);
        let b = mean_field_energy(C64::new(0.3, 0.0), 1.0, 0.4, &p);
        assert_abs_diff_eq!(a - b, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn branch_enumeration_examples() {
        let b = equilibrium_branches(&params(1.0, 0.2, 0.0, 0.2));
        assert_eq!(b.iter().map(|b| b.phase).collect::<Vec<_>>(), vec![Phase::PN]);
        assert!(b[0].phi0.is_empty());

        let b = equilibrium_branches(&params(1.0, 0.0, 0.0, 0.6));
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].phase, Phase::FN);
        assert_abs_diff_eq!(b[1].theta0.cos(), -1.0 / 1.2, epsilon = 1e-14);
        assert_eq!(b[1].phi0, vec![PI / 2.0, 3.0 * PI / 2.0]);

        let p = params(1.0, 0.6, 0.0, 0.0);
        let b = equilibrium_branches(&p);
        assert_eq!(b[1].phase, Phase::FS);
        assert_abs_diff_eq!(b[1].theta0.cos(), -1.0 / 1.44, epsilon = 1e-14);
        let s = (1.0 - 1.0 / (1.44f64 * 1.44)).sqrt();
        assert_abs_diff_eq!(b[1].alpha_at(&p, 0.0), -0.6 * s, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1].alpha_at(&p, PI), 0.6 * s, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1].alpha_at(&p, 0.0), -0.431728, epsilon = 1e-6);
    }

    #[test]
    fn pn_hessian_example() {
        let p = params(1.0, 0.3, 0.0, 0.0);
        let pn = &equilibrium_branches(&p)[0];
        let h = hessian(&p, pn).unwrap();
        let (m, w) = h[0];
        assert_eq!(m[0][0], 2.0);
        assert_abs_diff_eq!(m[1][1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][1], -0.6, epsilon = 1e-15);
        assert!(w[0] > 0.0 || w.iter().filter(|x| x.abs() < 1e-12).count() == 1);
        // positive definite on the (alpha, theta) block for 4 lambda^2 < eps
        assert!(m[0][0] * m[1][1] - m[0][1] * m[0][1] > 0.0);
    }

    #[test]
    fn fn_hessian_nonnegative() {
        let p = params(1.0, 0.0, 0.0, 0.6);
        let b = &equilibrium_branches(&p)[1];
        for (_, w) in hessian(&p, b).unwrap() {
            assert!(w.iter().all(|&x| x >= STABILITY_TOL), "{w:?}");
        }
    }

    #[test]
    fn classify_examples() {
        let (s, op) = classify_phase(&params(1.0, 0.0, 0.0, 0.6)).unwrap();
        assert_eq!(s.phase, Phase::FN);
        assert_abs_diff_eq!(op.zeta_my, 0.076389, epsilon = 5e-7);
        assert_abs_diff_eq!(op.m_z, -0.41667, epsilon = 5e-6);

        let (s, op) = classify_phase(&params(1.0, 0.6, 0.0, 0.0)).unwrap();
        assert_eq!(s.phase, Phase::FS);
        // closed forms with K = 4 lambda^2 = 1.44
        let s2 = 1.0 - 1.0 / (1.44f64 * 1.44);
        assert_abs_diff_eq!(op.zeta_s, 0.36 * s2, epsilon = 1e-12);
        assert_abs_diff_eq!(op.zeta_mx, s2 / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(op.m_z, -1.0 / 2.88, epsilon = 1e-12);
        // quoted six-digit values carry a rounding slip in the sixth digit
        assert_abs_diff_eq!(op.zeta_s, 0.186394, epsilon = 1e-5);
        assert_abs_diff_eq!(op.zeta_mx, 0.129440, epsilon = 1e-5);

        let (s, op) = classify_phase(&params(1.0, 0.2, 0.0, 0.1)).unwrap();
        assert_eq!(s.phase, Phase::PN);
        assert_eq!(op, OrderParameters { zeta_s: 0.0, zeta_mx: 0.0, zeta_my: 0.0, m_z: -0.5 });
        assert!(!s.boundary);
    }

    #[test]
    fn triple_point_is_degenerate() {
        let (s, _) = classify_phase(&params(1.0, 0.0, 0.5, 0.5)).unwrap();
        assert!(s.boundary);
        assert_eq!(s.phase, Phase::FS);
    }

    #[test]
    fn grid_reproduces_analytic_lines() {
        let template = params(1.0, 0.0, 0.0, 0.0);
        let spec = GridSpec {
            x: AxisRange { axis: DiagramAxis::Composite, min: 0.0, max: 1.0, points: 101 },
            y: AxisRange { axis: DiagramAxis::Jy, min: 0.0, max: 1.0, points: 101 },
            split: CompositeSplit::ViaJx,
        };
        let g = phase_diagram_grid(&template, &spec).unwrap();
        let tp = g.triple_point().unwrap();
        assert!((tp[0] - 0.5).abs() <= 0.01 && (tp[1] - 0.5).abs() <= 0.01, "{tp:?}");
        // column Jy = 0: PN -> FS at composite 0.5
        let first_fs = (0..101).find(|&ix| g.cell(ix, 0).phase == Phase::FS).unwrap();
        assert!((g.cell(first_fs, 0).x - 0.5).abs() <= 0.01);
        // row composite = 0: PN -> FN at Jy = 0.5
        let first_fn = (0..101).find(|&iy| g.cell(0, iy).phase == Phase::FN).unwrap();
        assert!((g.cell(0, first_fn).y - 0.5).abs() <= 0.01);
        let segs = g.boundary_segments();
        assert_eq!(segs.len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn branches_are_stationary_and_hessian_matches_fd(
            eps in 0.2f64..2.0, lam in 0.0f64..1.5, jx in 0.0f64..1.5, jy in 0.0f64..1.5,
        ) {
            let p = params(eps, lam, jx, jy);
            for b in equilibrium_branches(&p) {
                for phi in b.probe_azimuths() {
                    let x = [b.alpha_at(&p, phi), b.theta0, phi];
                    let g = fd_gradient(x, &p, 1e-6);
                    prop_assert!(g.iter().all(|v| v.abs() < 1e-5), "{:?} grad {:?}", b.phase, g);
                    let m = hessian_at(x[0], x[1], x[2], &p);
                    let f = fd_hessian(x, &p, 1e-4);
                    let scale = m.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
                    for i in 0..3 {
                        for j in 0..3 {
                            prop_assert!((m[i][j] - f[i][j]).abs() <= 1e-6 * scale, "{:?} M{}{}: {} vs {}", b.phase, i, j, m[i][j], f[i][j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn classification_respects_first_order_line(
            eps in 0.2f64..2.0, lam in 0.0f64..1.5, jx in 0.0f64..1.5, jy in 0.0f64..1.5,
        ) {
            let p = params(eps, lam, jx, jy);
            let (s, op) = classify_phase(&p).unwrap();
            prop_assert!(s.hessian_eigenvalues.iter().all(|w| w[0] >= STABILITY_TOL));
            prop_assert!((0.0..=0.25).contains(&op.zeta_mx) && (0.0..=0.25).contains(&op.zeta_my));
            prop_assert!(op.zeta_s >= 0.0 && (-0.5..=0.5).contains(&op.m_z));
            let c = 2.0 * lam * lam + jx;
            let both = 2.0 * jy >= eps && 2.0 * c >= eps;
            if both && !s.boundary {
                prop_assert_eq!(s.phase == Phase::FS, c > jy);
            }
            // closed forms agree with the coherent-state expectation values
            let phi = s.phi0_branches.first().copied().unwrap_or(0.0);
            let direct = order_parameters_from_angles(s.theta0, phi, &p);
            prop_assert!((direct.zeta_s - op.zeta_s).abs() < 1e-12);
            prop_assert!((direct.zeta_mx - op.zeta_mx).abs() < 1e-12);
            prop_assert!((direct.zeta_my - op.zeta_my).abs() < 1e-12);
            prop_assert!((direct.m_z - op.m_z).abs() < 1e-12);
        }
    }
}
