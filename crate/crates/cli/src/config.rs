//! Run configuration, read from TOML.

use std::path::Path;

use dicke_lmg::dynamics::{EvolveOptions, PulseEnvelope};
use dicke_lmg::hilbert::{Coupling, ModelParams};
use dicke_lmg::liouville::Vectorization;
use dicke_lmg::meanfield::{linspace, CompositeSplit};
use dicke_lmg::qfunction::QConvention;
use dicke_lmg::spectrum::{ChiPeakOptions, CutoffRule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A sweep given either as explicit values or as `min`, `max` and `points`
/// (or `step`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    pub step: Option<f64>,
}

impl Sweep {
    /// Strictly increasing, non-empty list of values.
    pub fn resolve(&self, field: &str) -> Result<Vec<f64>, CliError> {
        let bad = |msg: String| CliError::Config(format!("{field}: {msg}"));
        let v = match (&self.values, self.min, self.max) {
            (Some(v), None, None) => v.clone(),
            (None, Some(lo), Some(hi)) => {
                if !(hi >= lo) {
                    return Err(bad(format!("empty range [{lo}, {hi}]")));
                }
                match (self.points, self.step) {
                    (Some(n), None) => {
                        if n == 0 || (n == 1 && hi > lo) {
                            return Err(bad(format!("{n} points cannot span [{lo}, {hi}]")));
                        }
                        linspace(lo, hi, n)
                    }
                    (None, Some(s)) => {
                        if !(s > 0.0) {
                            return Err(bad(format!("step must be positive, got {s}")));
                        }
                        let n = ((hi - lo) / s + 1e-9).floor() as usize;
                        (0..=n).map(|k| lo + k as f64 * s).collect()
                    }
                    _ => return Err(bad("give exactly one of points or step".into())),
                }
            }
            _ => return Err(bad("give either values or min and max".into())),
        };
        if v.is_empty() {
            return Err(bad("no values".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("values must be finite".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("values must be strictly increasing".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramMethod {
    #[default]
    MeanField,
    Ed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    /// `composite`, `jy` or `epsilon` for mean field; a coupling name for ED.
    pub axis: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    #[serde(default)]
    pub method: DiagramMethod,
    pub x: AxisSpec,
    pub y: AxisSpec,
    #[serde(default)]
    pub split: CompositeSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpScanConfig {
    pub axis: Coupling,
    pub range: Sweep,
}

fn default_fd_step() -> f64 {
    1e-4
}

fn default_cutoff_rule() -> CutoffRule {
    CutoffRule::SameAsN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiScanConfig {
    pub axis: Coupling,
    /// Grid scan at the model's `n_spins`.
    pub range: Option<Sweep>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Size ladder for the peak fit; requires `search`.
    pub n_values: Option<Vec<usize>>,
    /// Coupling interval searched for the peak at each N.
    pub search: Option<[f64; 2]>,
    #[serde(default = "default_cutoff_rule")]
    pub cutoff: CutoffRule,
    #[serde(default)]
    pub peak: ChiPeakOptions,
}

fn default_dt() -> f64 {
    0.02
}
fn default_t_final() -> f64 {
    150.0
}
fn default_krylov_dim() -> usize {
    30
}
fn default_krylov_tol() -> f64 {
    1e-12
}
fn default_true() -> bool {
    true
}
fn default_step_tol() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub envelope: PulseEnvelope,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_krylov_dim")]
    pub krylov_dim: usize,
    #[serde(default = "default_krylov_tol")]
    pub krylov_tol: f64,
    #[serde(default = "default_true")]
    pub check_step: bool,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    /// Clip for the rate function when the echo underflows.
    pub rate_ceiling: Option<f64>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl DynamicsConfig {
    pub fn evolve_options(&self, solver: &SolverConfig, snapshot_times: Vec<f64>) -> EvolveOptions {
        EvolveOptions {
            dt: self.dt,
            t_final: self.t_final,
            krylov_dim: self.krylov_dim,
            krylov_tol: self.krylov_tol,
            snapshot_times,
            check_step: self.check_step,
            step_tol: self.step_tol,
            solver: solver.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasScanConfig {
    pub lambda0: Sweep,
}

fn default_theta_points() -> usize {
    91
}
fn default_phi_points() -> usize {
    180
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QFuncConfig {
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
    #[serde(default = "default_phi_points")]
    pub phi_points: usize,
    pub x: Sweep,
    pub y: Sweep,
    #[serde(default)]
    pub convention: QConvention,
    /// Times along the `[dynamics]` run; empty means the ground state.
    #[serde(default)]
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub temperatures: Sweep,
}

fn default_explicit_limit() -> usize {
    400
}
fn default_store_every() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleConfig {
    #[serde(default)]
    pub convention: Vectorization,
    #[serde(default = "default_explicit_limit")]
    pub explicit_limit: usize,
    #[serde(default = "default_store_every")]
    pub store_every: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelParams>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub phase_diagram: Option<PhaseDiagramConfig>,
    pub op_scan: Option<OpScanConfig>,
    pub chi_scan: Option<ChiScanConfig>,
    pub dynamics: Option<DynamicsConfig>,
    pub bias_scan: Option<BiasScanConfig>,
    pub qfunc: Option<QFuncConfig>,
    pub thermal: Option<ThermalConfig>,
    pub liouville: Option<LiouvilleConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        let m = self.model.clone().ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        m.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(m)
    }

    pub fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    pub fn dynamics(&self) -> DynamicsConfig {
        self.dynamics.clone().unwrap_or_default()
    }
}
