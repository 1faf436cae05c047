//! One function per subcommand. Each validates its section, runs the
//! computation and writes CSV plus a JSON sidecar.

use dicke_lmg::dynamics::{
    bias_scan, evolve, loschmidt_echo, quantum_gain, qfunction_snapshots, rate_function, sqnr, Trajectory,
};
use dicke_lmg::hilbert::{Coupling, ModelParams};
use dicke_lmg::liouville::{evolve_liouville_model, LiouvilleOptions};
use dicke_lmg::meanfield::{classify_phase, phase_diagram_grid, AxisRange, DiagramAxis, GridSpec};
use dicke_lmg::qfunction::{boson_q, phi_grid, spin_q, theta_grid, BosonQGrid, SpinQGrid};
use dicke_lmg::spectrum::{
    chi_scaling_fit, op_scan, order_parameters_density, sensitivity_chi, thermal_state, EdSolver,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{AxisSpec, DiagramMethod, RunConfig};
use crate::output::{metadata, Artifacts, Cell};
use crate::CliError;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: &'a mut Artifacts,
    pub seed: u64,
}

const OP_HEADER: [&str; 4] = ["zeta_s", "zeta_mx", "zeta_my", "m_z"];

fn op_cells(o: &dicke_lmg::meanfield::OrderParameters) -> [Cell; 4] {
    [o.zeta_s.into(), o.zeta_mx.into(), o.zeta_my.into(), o.m_z.into()]
}

fn diagram_axis(s: &AxisSpec) -> Result<DiagramAxis, CliError> {
    match s.axis.as_str() {
        "composite" => Ok(DiagramAxis::Composite),
        "jy" => Ok(DiagramAxis::Jy),
        "epsilon" => Ok(DiagramAxis::Epsilon),
        other => Err(CliError::Config(format!("phase_diagram: unknown mean-field axis '{other}'"))),
    }
}

fn coupling_axis(s: &AxisSpec) -> Result<Coupling, CliError> {
    match s.axis.as_str() {
        "epsilon" => Ok(Coupling::Epsilon),
        "lambda" => Ok(Coupling::Lambda),
        "jx" => Ok(Coupling::Jx),
        "jy" => Ok(Coupling::Jy),
        other => Err(CliError::Config(format!("phase_diagram: unknown coupling axis '{other}'"))),
    }
}

fn check_axis(s: &AxisSpec, name: &str) -> Result<Vec<f64>, CliError> {
    if s.points < 2 || !(s.max > s.min) {
        return Err(CliError::Config(format!(
            "phase_diagram.{name}: empty range [{}, {}] with {} points",
            s.min, s.max, s.points
        )));
    }
    Ok(dicke_lmg::meanfield::linspace(s.min, s.max, s.points))
}

pub fn phase_diagram(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let pd = cfg.section("phase_diagram", &cfg.phase_diagram)?;
    let model = cfg.model()?;
    let xs = check_axis(&pd.x, "x")?;
    let ys = check_axis(&pd.y, "y")?;
    let header = ["axis1", "axis2", "phase", OP_HEADER[0], OP_HEADER[1], OP_HEADER[2], OP_HEADER[3]];
    match pd.method {
        DiagramMethod::MeanField => {
            let spec = GridSpec {
                x: AxisRange { axis: diagram_axis(&pd.x)?, min: pd.x.min, max: pd.x.max, points: pd.x.points },
                y: AxisRange { axis: diagram_axis(&pd.y)?, min: pd.y.min, max: pd.y.max, points: pd.y.points },
                split: pd.split,
            };
            let grid = phase_diagram_grid(&model, &spec)?;
            ctx.out.csv(
                "phase_grid.csv",
                &header,
                grid.cells.iter().map(|c| {
                    let [a, b, d, e] = op_cells(&c.order);
                    vec![c.x.into(), c.y.into(), c.phase.as_str().into(), a, b, d, e]
                }),
            )?;
            let results = json!({
                "boundaries": grid.boundary_segments(),
                "triple_point": grid.triple_point(),
            });
            ctx.out.json("boundaries.json", &results)?;
            let meta = metadata("phase-diagram", "hilbert", ctx.seed, cfg, &results)?;
            ctx.out.json("phase_grid.json", &meta)
        }
        DiagramMethod::Ed => {
            let (ax, ay) = (coupling_axis(&pd.x)?, coupling_axis(&pd.y)?);
            if ax == ay {
                return Err(CliError::Config("phase_diagram: axes must differ".into()));
            }
            let rows: Vec<Vec<(f64, f64, String, dicke_lmg::meanfield::OrderParameters)>> = ys
                .par_iter()
                .map(|&y| {
                    let p = model.with_coupling(ay, y);
                    let scan = op_scan(&p, ax, &xs, &cfg.solver)?;
                    scan.into_iter()
                        .map(|pt| {
                            // the phase column carries the mean-field label at the same point
                            let (sol, _) = classify_phase(&p.with_coupling(ax, pt.value))?;
                            Ok((pt.value, y, sol.phase.as_str().to_string(), pt.order))
                        })
                        .collect::<dicke_lmg::Result<Vec<_>>>()
                })
                .collect::<dicke_lmg::Result<_>>()?;
            ctx.out.csv(
                "phase_grid.csv",
                &header,
                rows.into_iter().flatten().map(|(x, y, ph, o)| {
                    let [a, b, d, e] = op_cells(&o);
                    vec![x.into(), y.into(), ph.into(), a, b, d, e]
                }),
            )?;
            let meta = metadata("phase-diagram", "hilbert", ctx.seed, cfg, &json!({ "method": "ed" }))?;
            ctx.out.json("phase_grid.json", &meta)
        }
    }
}

pub fn op_scan_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let s = cfg.section("op_scan", &cfg.op_scan)?;
    let model = cfg.model()?;
    let values = s.range.resolve("op_scan.range")?;
    let pts: Vec<_> = values
        .par_iter()
        .map(|&v| op_scan(&model, s.axis, &[v], &cfg.solver).map(|mut r| r.remove(0)))
        .collect::<dicke_lmg::Result<_>>()?;
    let header = ["coupling", "energy", "parity", OP_HEADER[0], OP_HEADER[1], OP_HEADER[2], OP_HEADER[3]];
    ctx.out.csv(
        "op_scan.csv",
        &header,
        pts.iter().map(|p| {
            let [a, b, d, e] = op_cells(&p.order);
            let parity = p.parity.map_or("none".to_string(), |q| format!("{q:?}").to_lowercase());
            vec![p.value.into(), p.energy.into(), parity.into(), a, b, d, e]
        }),
    )?;
    let meta = metadata("op-scan", "hilbert", ctx.seed, cfg, &json!({ "points": pts.len() }))?;
    ctx.out.json("op_scan.json", &meta)
}

pub fn chi_scan(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let s = cfg.section("chi_scan", &cfg.chi_scan)?;
    let model = cfg.model()?;
    if s.range.is_none() && s.n_values.is_none() {
        return Err(CliError::Config("chi_scan: give range (grid scan) or n_values with search (size ladder)".into()));
    }
    let mut results = serde_json::Map::new();
    if let Some(r) = &s.range {
        let values = r.resolve("chi_scan.range")?;
        let scan = sensitivity_chi(&model, s.axis, &values, s.fd_step, &cfg.solver)?;
        let ops = op_scan(&model, s.axis, &values, &cfg.solver)?;
        let header = ["coupling", OP_HEADER[0], OP_HEADER[1], OP_HEADER[2], OP_HEADER[3], "chi", "is_peak"];
        ctx.out.csv(
            "chi_scan.csv",
            &header,
            ops.iter().zip(&scan.chi).enumerate().map(|(i, (p, chi))| {
                let [a, b, d, e] = op_cells(&p.order);
                vec![p.value.into(), a, b, d, e, (*chi).into(), (i == scan.peak_index).into()]
            }),
        )?;
        results.insert("scan".into(), serde_json::to_value(&scan)?);
    }
    if let Some(ns) = &s.n_values {
        let [lo, hi] = s.search.ok_or_else(|| CliError::Config("chi_scan: n_values needs search = [lo, hi]".into()))?;
        if !(hi > lo) {
            return Err(CliError::Config(format!("chi_scan.search: empty interval [{lo}, {hi}]")));
        }
        let fit = chi_scaling_fit(&model, s.axis, ns, (lo, hi), s.cutoff, &s.peak, &cfg.solver)?;
        ctx.out.csv(
            "chi_peaks.csv",
            &["n_spins", "boson_cutoff", "location", "chi_max", "fd_step"],
            fit.peaks.iter().map(|p| {
                vec![p.n_spins.into(), s.cutoff.cutoff(p.n_spins).into(), p.location.into(), p.height.into(), p.fd_step.into()]
            }),
        )?;
        let fit_json = json!({ "degree": 2, "coefficients": fit.fit.coefficients, "r_squared": fit.fit.r_squared });
        ctx.out.json("chi_fit.json", &fit_json)?;
        results.insert("fit".into(), fit_json);
        results.insert("peaks".into(), serde_json::to_value(&fit.peaks)?);
    }
    let meta = metadata("chi-scan", "hilbert", ctx.seed, cfg, &results)?;
    ctx.out.json("chi_scan.json", &meta)
}

fn trajectory_rows(t: &[f64], gain: &[f64], sq: &[f64], echo: &[f64], rate: &[f64]) -> Vec<Vec<Cell>> {
    (0..t.len()).map(|k| vec![t[k].into(), gain[k].into(), sq[k].into(), echo[k].into(), rate[k].into()]).collect()
}

const TRAJ_HEADER: [&str; 5] = ["t", "gain", "sqnr", "echo", "rate"];

fn run_dynamics(cfg: &RunConfig, model: &ModelParams, snapshots: Vec<f64>) -> Result<Trajectory, CliError> {
    let d = cfg.dynamics();
    Ok(evolve(model, &d.envelope, &d.evolve_options(&cfg.solver, snapshots))?)
}

pub fn dynamics(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let model = cfg.model()?;
    let d = cfg.dynamics();
    let tr = run_dynamics(cfg, &model, Vec::new())?;
    let g = quantum_gain(&tr)?;
    let rows = trajectory_rows(&tr.times, &g, &sqnr(&tr), &loschmidt_echo(&tr), &rate_function(&tr, d.rate_ceiling));
    ctx.out.csv("trajectory.csv", &TRAJ_HEADER, rows)?;
    let peak = dicke_lmg::dynamics::first_peak(&g).ok();
    let results = json!({
        "n0": tr.number[0],
        "parity": tr.parity.map(|p| format!("{p:?}").to_lowercase()),
        "first_peak": peak.map(|k| json!({ "t": tr.times[k], "gain": g[k] })),
        "convergence": tr.convergence,
    });
    let meta = metadata("dynamics", "hilbert", ctx.seed, cfg, &results)?;
    ctx.out.json("trajectory.json", &meta)
}

pub fn bias_scan_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let s = cfg.section("bias_scan", &cfg.bias_scan)?;
    let model = cfg.model()?;
    let d = cfg.dynamics();
    let lambda0 = s.lambda0.resolve("bias_scan.lambda0")?;
    let scan = bias_scan(&model, &lambda0, &d.envelope, &d.evolve_options(&cfg.solver, Vec::new()))?;
    let opt = |x: Option<f64>| x.map_or(Cell::Num(f64::NAN), Cell::Num);
    ctx.out.csv(
        "bias_scan.csv",
        &["lambda0", "n0", "gain_peak", "sqnr_peak", "t_peak", "gain_max"],
        scan.points.iter().map(|p| {
            vec![p.lambda0.into(), p.n0.into(), opt(p.gain_peak), opt(p.sqnr_peak), opt(p.t_peak), p.gain_max.into()]
        }),
    )?;
    let results = json!({ "optimal": scan.optimal(), "convergence": scan.convergence });
    let meta = metadata("bias-scan", "hilbert", ctx.seed, cfg, &results)?;
    ctx.out.json("bias_scan.json", &meta)
}

fn write_q(out: &mut Artifacts, suffix: &str, spin: &SpinQGrid, boson: &BosonQGrid) -> Result<(), CliError> {
    let mut rows = Vec::with_capacity(spin.theta.len() * spin.phi.len());
    for (i, &th) in spin.theta.iter().enumerate() {
        for (j, &ph) in spin.phi.iter().enumerate() {
            rows.push(vec![th.into(), ph.into(), spin.q[[i, j]].into()]);
        }
    }
    out.csv(&format!("spin_q{suffix}.csv"), &["theta", "phi", "Q"], rows)?;
    let mut rows = Vec::with_capacity(boson.x.len() * boson.y.len());
    for (i, &x) in boson.x.iter().enumerate() {
        for (j, &y) in boson.y.iter().enumerate() {
            rows.push(vec![x.into(), y.into(), boson.q[[i, j]].into()]);
        }
    }
    out.csv(&format!("boson_q{suffix}.csv"), &["x", "y", "Q"], rows)
}

pub fn qfunc(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let s = cfg.section("qfunc", &cfg.qfunc)?;
    let model = cfg.model()?;
    if s.theta_points < 2 || s.phi_points < 1 {
        return Err(CliError::Config("qfunc: need theta_points >= 2 and phi_points >= 1".into()));
    }
    let (theta, phi) = (theta_grid(s.theta_points), phi_grid(s.phi_points));
    let x = s.x.resolve("qfunc.x")?;
    let y = s.y.resolve("qfunc.y")?;
    let mut summary = Vec::new();
    if s.times.is_empty() {
        let gs = EdSolver::for_params(&model, cfg.solver.clone())?.ground_state(&model)?;
        let sq = spin_q(&gs.state.reduced_spin_density(), &theta, &phi, s.convention)?;
        let bq = boson_q(&gs.state.reduced_boson_density(), &x, &y)?;
        write_q(ctx.out, "", &sq, &bq)?;
        summary.push(json!({ "t": null, "spin_integral": sq.integrate(), "boson_integral": bq.integrate(), "outside_mass": bq.outside_mass }));
    } else {
        let tr = run_dynamics(cfg, &model, s.times.clone())?;
        let snaps = qfunction_snapshots(&tr, &s.times, &theta, &phi, &x, &y, s.convention)?;
        for (k, q) in snaps.iter().enumerate() {
            write_q(ctx.out, &format!("_{k:03}"), &q.spin, &q.boson)?;
            summary.push(json!({ "index": k, "t": q.t, "spin_integral": q.spin.integrate(), "boson_integral": q.boson.integrate(), "outside_mass": q.boson.outside_mass }));
        }
    }
    let meta = metadata("qfunc", "hilbert", ctx.seed, cfg, &summary)?;
    ctx.out.json("qfunc.json", &meta)
}

pub fn thermal(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let s = cfg.section("thermal", &cfg.thermal)?;
    let model = cfg.model()?;
    let temps = s.temperatures.resolve("thermal.temperatures")?;
    if temps[0] <= 0.0 {
        return Err(CliError::Config("thermal.temperatures: must be positive".into()));
    }
    let ops: Vec<_> = temps
        .par_iter()
        .map(|&t| thermal_state(&model, t, &cfg.solver).and_then(|rho| order_parameters_density(&rho, &model)))
        .collect::<dicke_lmg::Result<_>>()?;
    ctx.out.csv(
        "thermal.csv",
        &["temperature", OP_HEADER[0], OP_HEADER[1], OP_HEADER[2], OP_HEADER[3]],
        temps.iter().zip(&ops).map(|(t, o)| {
            let [a, b, d, e] = op_cells(o);
            vec![(*t).into(), a, b, d, e]
        }),
    )?;
    let meta = metadata("thermal", "hilbert", ctx.seed, cfg, &json!({ "points": temps.len() }))?;
    ctx.out.json("thermal.json", &meta)
}

pub fn liouville_evolve(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let model = cfg.model()?;
    let d = cfg.dynamics();
    let l = cfg.liouville.clone().unwrap_or_else(|| toml::from_str("").expect("defaults"));
    let opts = LiouvilleOptions {
        dt: d.dt,
        t_final: d.t_final,
        convention: l.convention,
        explicit_limit: l.explicit_limit,
        krylov_dim: d.krylov_dim,
        krylov_tol: d.krylov_tol,
        store_every: l.store_every,
        check_step: d.check_step,
        step_tol: d.step_tol,
    };
    let (tr, _) = evolve_liouville_model(&model, &d.envelope, &cfg.solver, &opts)?;
    let g = tr.monitor_gain()?;
    let echo = tr.echo()?;
    let n = model.n_spins as f64;
    let rate: Vec<f64> = echo
        .iter()
        .map(|&e| {
            let xi = -e.max(dicke_lmg::dynamics::ECHO_FLOOR).ln() / n;
            d.rate_ceiling.map_or(xi, |c| xi.min(c))
        })
        .collect();
    ctx.out.csv("trajectory.csv", &TRAJ_HEADER, trajectory_rows(&tr.times, &g, &tr.sqnr()?, &echo, &rate))?;
    let results = json!({ "convergence": tr.convergence, "max_trace_drift": tr.trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max) });
    let meta = metadata("liouville-evolve", "liouville", ctx.seed, cfg, &results)?;
    ctx.out.json("trajectory.json", &meta)
}
