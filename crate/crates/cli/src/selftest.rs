//! Small-dimension oracle checks run by `dlmg selftest`.

use dicke_lmg::dynamics::{evolve, EvolveOptions, PulseEnvelope};
use dicke_lmg::hilbert::{
    assemble_hamiltonian_sparse, build_collective_spin_ops, parity_operator, ModelParams,
};
use dicke_lmg::linalg::{commutator, CsrMatrix};
use dicke_lmg::liouville::{
    devectorize, evolve_liouville_model, left_superop, right_superop, sandwich_superop, vectorize, LiouvilleOptions,
    Vectorization,
};
use dicke_lmg::spectrum::SolverConfig;
use dicke_lmg::C64;
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct Check {
    pub name: &'static str,
    pub tolerance: f64,
    pub worst: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn su2(out: &mut Vec<Check>) -> dicke_lmg::Result<()> {
    let i = C64::new(0.0, 1.0);
    let (mut comm, mut casimir) = (0.0f64, 0.0f64);
    for n in 1..=12 {
        let s = build_collective_spin_ops(n)?;
        let (x, y, z) = (s.sx.to_dense(), s.sy.to_dense(), s.sz.to_dense());
        comm = comm.max(max_abs(&(commutator(&x, &y) - z.mapv(|v| v * i))));
        comm = comm.max(max_abs(&(commutator(&y, &z) - x.mapv(|v| v * i))));
        comm = comm.max(max_abs(&(commutator(&z, &x) - y.mapv(|v| v * i))));
        let j = n as f64 / 2.0;
        let c2 = x.dot(&x) + y.dot(&y) + z.dot(&z) - Array2::eye(n + 1).mapv(|v: f64| C64::new(v * j * (j + 1.0), 0.0));
        casimir = casimir.max(max_abs(&c2));
    }
    out.push(Check { name: "su(2) commutators, N <= 12", tolerance: 1e-12, worst: comm });
    out.push(Check { name: "Casimir S^2 = j(j+1), N <= 12", tolerance: 1e-10, worst: casimir });
    Ok(())
}

fn hamiltonian(rng: &mut StdRng, out: &mut Vec<Check>) -> dicke_lmg::Result<()> {
    let (mut herm, mut par) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.gen_range(1..=8);
        let nb = rng.gen_range(2..=8);
        let p = ModelParams::new(rng.gen_range(0.1..2.0), rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.5), n, nb)?;
        let h = assemble_hamiltonian_sparse(&p)?.to_sparse();
        herm = herm.max(h.hermiticity_deviation());
        let pi = parity_operator(p.basis()).to_sparse();
        let hp = h.matmul(&pi)?;
        let ph = pi.matmul(&h)?;
        let one = C64::new(1.0, 0.0);
        let c = CsrMatrix::linear_combination(&[(one, &hp), (-one, &ph)])?;
        par = par.max(c.triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max));
    }
    out.push(Check { name: "Hamiltonian Hermiticity", tolerance: 1e-12, worst: herm });
    out.push(Check { name: "[H, parity] = 0", tolerance: 1e-12, worst: par });
    Ok(())
}

fn random_matrix(rng: &mut StdRng, d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn correspondences(rng: &mut StdRng, out: &mut Vec<Check>) -> dicke_lmg::Result<()> {
    let mut worst = 0.0f64;
    for d in [2usize, 3, 5, 8] {
        for _ in 0..25 {
            let (o1, o2, rho) = (random_matrix(rng, d), random_matrix(rng, d), random_matrix(rng, d));
            let (s1, s2) = (CsrMatrix::from_dense(&o1, 0.0), CsrMatrix::from_dense(&o2, 0.0));
            for conv in [Vectorization::RowStacking, Vectorization::ColumnStacking] {
                let v = vectorize(&rho, conv)?;
                let cases = [
                    (left_superop(&s1, conv)?, o1.dot(&rho)),
                    (right_superop(&s1, conv)?, rho.dot(&o1)),
                    (sandwich_superop(&s1, &s2, conv)?, o1.dot(&rho).dot(&o2)),
                ];
                for (s, want) in cases {
                    let got = devectorize(&s.apply(&v)?.data, conv)?;
                    worst = worst.max(max_abs(&(got - want)));
                }
            }
        }
    }
    out.push(Check { name: "Liouville correspondence identities", tolerance: 1e-12, worst });
    Ok(())
}

fn hilbert_vs_liouville(out: &mut Vec<Check>) -> dicke_lmg::Result<()> {
    let p = ModelParams::new(1.0, 0.6, 0.0, 1.0, 3, 4)?;
    let env = PulseEnvelope { amplitude: 0.05, ..Default::default() };
    let solver = SolverConfig { check_cutoff: false, ..Default::default() };
    let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    let h = evolve(&p, &env, &EvolveOptions { t_final: 10.0, snapshot_times: times, check_step: false, solver: solver.clone(), ..Default::default() })?;
    let (l, _) = evolve_liouville_model(&p, &env, &solver, &LiouvilleOptions { t_final: 10.0, ..Default::default() })?;
    let mut worst = 0.0f64;
    for ((_, psi), (_, rho)) in h.snapshots.iter().zip(&l.stored) {
        let a = psi.amplitudes();
        let proj = Array2::from_shape_fn(rho.raw_dim(), |(m, n)| a[m] * a[n].conj());
        worst = worst.max(max_abs(&(rho - &proj)));
    }
    out.push(Check { name: "pure-state Liouville vs Hilbert evolution", tolerance: 1e-6, worst });
    Ok(())
}

/// Runs all suites; random draws are seeded by `seed`.
pub fn run(seed: u64) -> dicke_lmg::Result<Vec<Check>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    su2(&mut out)?;
    hamiltonian(&mut rng, &mut out)?;
    correspondences(&mut rng, &mut out)?;
    hilbert_vs_liouville(&mut out)?;
    Ok(out)
}
