use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dlmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlmg")).args(args).output().expect("binary runs")
}

fn run_with(config: &str, command: &str, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (dlmg(&args), dir)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

const MODEL: &str = "[model]\nepsilon = 1.0\nlambda = 0.0\njx = 0.0\njy = 1.0\nn_spins = 40\nboson_cutoff = 40\n";

#[test]
fn selftest_passes() {
    let o = dlmg(&["selftest", "--seed", "7"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(text.lines().count() >= 6);
}

#[test]
fn mean_field_diagram_has_three_boundaries_meeting_at_triple_point() {
    let cfg = format!(
        "{MODEL}[phase_diagram]\nx = {{ axis = \"composite\", min = 0.0, max = 1.0, points = 101 }}\ny = {{ axis = \"jy\", min = 0.0, max = 1.0, points = 101 }}\n"
    );
    let (o, dir) = run_with(&cfg, "phase-diagram", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = json(dir.path(), "boundaries.json");
    assert_eq!(b["boundaries"].as_array().unwrap().len(), 3);
    let tp = b["triple_point"].as_array().unwrap();
    assert!((tp[0].as_f64().unwrap() - 0.5).abs() <= 0.01);
    assert!((tp[1].as_f64().unwrap() - 0.5).abs() <= 0.01);
    let csv = read(dir.path(), "phase_grid.csv");
    assert_eq!(csv.lines().next().unwrap(), "axis1,axis2,phase,zeta_s,zeta_mx,zeta_my,m_z");
    assert_eq!(csv.lines().count(), 1 + 101 * 101);
    let meta = json(dir.path(), "phase_grid.json");
    assert_eq!(meta["config"]["model"]["jy"], 1.0);
    assert!(meta["version"].is_string());
}

#[test]
fn empty_range_is_a_config_error() {
    let cfg = format!(
        "{MODEL}[phase_diagram]\nx = {{ axis = \"composite\", min = 1.0, max = 1.0, points = 11 }}\ny = {{ axis = \"jy\", min = 0.0, max = 1.0, points = 11 }}\n"
    );
    let (o, _d) = run_with(&cfg, "phase-diagram", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phase_diagram.x"));
}

#[test]
fn non_monotone_chi_values_are_rejected() {
    let cfg = format!("{MODEL}[chi_scan]\naxis = \"lambda\"\nrange = {{ values = [0.5, 0.4, 0.6] }}\n");
    let (o, _d) = run_with(&cfg, "chi-scan", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_fields_and_missing_config_are_config_errors() {
    let (o, _d) = run_with(&format!("{MODEL}bogus = 1\n"), "op-scan", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(dlmg(&["op-scan"]).status.code(), Some(2));
    let bad_model = "[model]\nepsilon = 1.0\nlambda = 0.1\njx = 0.0\njy = 1.0\nn_spins = 0\nboson_cutoff = 4\n[op_scan]\naxis = \"lambda\"\nrange = { values = [0.1] }\n";
    assert_eq!(run_with(bad_model, "op-scan", &[]).0.status.code(), Some(2));
}

#[test]
fn chi_grid_flags_one_peak_row() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.0\njx = 0.0\njy = 1.0\nn_spins = 10\nboson_cutoff = 30\n[chi_scan]\naxis = \"lambda\"\nrange = { min = 0.60, max = 0.80, points = 11 }\nfd_step = 1e-3\n";
    let (o, dir) = run_with(cfg, "chi-scan", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "chi_scan.csv");
    assert_eq!(csv.lines().next().unwrap(), "coupling,zeta_s,zeta_mx,zeta_my,m_z,chi,is_peak");
    assert_eq!(csv.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn op_scan_output_is_independent_of_worker_count() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.0\njx = 0.0\njy = 0.8\nn_spins = 8\nboson_cutoff = 40\n[op_scan]\naxis = \"lambda\"\nrange = { min = 0.3, max = 0.9, step = 0.05 }\n";
    let (a, da) = run_with(cfg, "op-scan", &["--workers", "1"]);
    let (b, db) = run_with(cfg, "op-scan", &["--workers", "3"]);
    assert!(a.status.success() && b.status.success());
    let (ca, cb) = (read(da.path(), "op_scan.csv"), read(db.path(), "op_scan.csv"));
    assert_eq!(ca, cb);
    assert_eq!(ca.lines().count(), 14);
    // 17 significant digits
    let first = ca.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first, "2.9999999999999999e-1");
}

#[test]
fn dynamics_writes_trajectory_and_convergence_report() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.5\njx = 0.0\njy = 1.0\nn_spins = 6\nboson_cutoff = 12\n[dynamics]\nt_final = 4.0\nenvelope = { amplitude = 0.05, tau = 2.0 }\n";
    let (o, dir) = run_with(cfg, "dynamics", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "trajectory.csv");
    assert_eq!(csv.lines().next().unwrap(), "t,gain,sqnr,echo,rate");
    assert_eq!(csv.lines().count(), 1 + 201);
    let meta = json(dir.path(), "trajectory.json");
    assert_eq!(meta["representation"], "hilbert");
    assert!(meta["results"]["convergence"]["rel_change"].as_f64().unwrap() < 0.01);
    assert_eq!(meta["config"]["dynamics"]["envelope"]["shape"], "sin_squared");
}

#[test]
fn liouville_run_matches_hilbert_run() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.5\njx = 0.0\njy = 1.0\nn_spins = 3\nboson_cutoff = 5\n[dynamics]\nt_final = 4.0\ncheck_step = false\nenvelope = { amplitude = 0.05, tau = 2.0 }\n[solver]\ncheck_cutoff = false\n";
    let (h, dh) = run_with(cfg, "dynamics", &[]);
    let (l, dl) = run_with(cfg, "liouville-evolve", &[]);
    assert!(h.status.success() && l.status.success(), "{}", String::from_utf8_lossy(&l.stderr));
    assert_eq!(json(dl.path(), "trajectory.json")["representation"], "liouville");
    let parse = |s: String| -> Vec<Vec<f64>> {
        s.lines().skip(1).map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect()).collect()
    };
    let (a, b) = (parse(read(dh.path(), "trajectory.csv")), parse(read(dl.path(), "trajectory.csv")));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for (c, (x, y)) in ra.iter().zip(rb).enumerate() {
            // the sqnr column is +inf-free here but can be large; compare relatively
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "column {c}: {x} vs {y}");
        }
    }
}

#[test]
fn qfunc_and_thermal_outputs() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.9\njx = 0.0\njy = 0.0\nn_spins = 6\nboson_cutoff = 30\n[qfunc]\ntheta_points = 31\nphi_points = 40\nx = { min = -6.0, max = 6.0, points = 41 }\ny = { min = -6.0, max = 6.0, points = 41 }\n[thermal]\ntemperatures = { values = [0.5, 1.0, 2.0] }\n";
    let (o, dir) = run_with(cfg, "qfunc", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path(), "spin_q.csv").lines().next().unwrap(), "theta,phi,Q");
    assert_eq!(read(dir.path(), "boson_q.csv").lines().count(), 1 + 41 * 41);
    let meta = json(dir.path(), "qfunc.json");
    assert!((meta["results"][0]["spin_integral"].as_f64().unwrap() - 1.0).abs() < 1e-3);

    let small = cfg.replace("boson_cutoff = 30", "boson_cutoff = 10");
    let (o, dir) = run_with(&small, "thermal", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path(), "thermal.csv").lines().count(), 4);
}

#[test]
fn boson_grid_too_small_is_numerical_failure() {
    let cfg = "[model]\nepsilon = 1.0\nlambda = 0.9\njx = 0.0\njy = 0.0\nn_spins = 6\nboson_cutoff = 30\n[qfunc]\nx = { min = -0.5, max = 0.5, points = 5 }\ny = { min = -0.5, max = 0.5, points = 5 }\n";
    let (o, _d) = run_with(cfg, "qfunc", &[]);
    assert_eq!(o.status.code(), Some(3));
}
