use molfield_core::nonlinear_eigen::{
    corrected_partition, corrected_partition_with, solve_continuation, solve_nonlinear_eigen,
};
use molfield_core::potential::{eigendecompose, MatrixPotential, PairMatrixModel, TwoStateParams};
use molfield_core::Vec3;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cluster(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n)
        .map(|i| Vec3::new(1.3 * i as f64, 0.0, 0.0) + Vec3::from_fn(|_, _| rng.random_range(-0.4..0.4)))
        .collect()
}

fn model() -> PairMatrixModel {
    PairMatrixModel::two_state(&TwoStateParams::default()).unwrap()
}

/// `‖(V + B/4M)Ψ − ΨΛ̄‖` with `B` rebuilt here from finite-difference `∂Ψ`.
fn independent_residual(m: &PairMatrixModel, x: &[Vec3], psi: &DMatrix<f64>, lam: &[f64], mass: f64) -> f64 {
    let v = m.eval(x);
    let h = 1e-6;
    let mut g = DMatrix::zeros(2, 2);
    for i in 0..3 * x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i / 3][i % 3] += h;
        xm[i / 3][i % 3] -= h;
        // eigenvectors of the same effective matrix, perturbed only through V
        let sol = |y: &[Vec3]| {
            let mut e = eigendecompose(&(psi * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(lam)) * psi.transpose() + m.eval(y) - &v)).unwrap();
            e.align_to(psi);
            e.psi
        };
        let d = (sol(&xp) - sol(&xm)) / (2.0 * h);
        g += d.transpose() * d;
    }
    let b = psi * g * psi.transpose();
    let lhs = (&v + b * (0.25 / mass)) * psi;
    let rhs = psi * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(lam));
    (lhs - rhs).norm()
}

#[test]
fn residual_small_at_random_configurations() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = random_cluster(3, &mut rng);
        let cs = solve_nonlinear_eigen(&m, &x, 100.0).unwrap();
        let vn = m.eval(&x).norm();
        assert!(cs.residual_norm <= 1e-10 * vn);
        assert!((cs.psi_bar.transpose() * &cs.psi_bar - DMatrix::identity(2, 2)).amax() <= 1e-12);
        for k in 0..2 {
            assert!((cs.per_particle_bar.column(k).sum() - cs.lambdas_bar[k]).abs() <= 1e-10);
        }
    }
}

#[test]
fn residual_agrees_with_finite_difference_gram() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_cluster(3, &mut rng);
    let cs = solve_nonlinear_eigen(&m, &x, 50.0).unwrap();
    let lam: Vec<f64> = cs.lambdas_bar.iter().copied().collect();
    let r = independent_residual(&m, &x, &cs.psi_bar, &lam, 50.0);
    assert!(r <= 1e-8 * m.eval(&x).norm(), "{r}");
}

#[test]
fn correction_scales_inversely_with_mass() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_cluster(3, &mut rng);
    let diff = |mass: f64| {
        let cs = solve_nonlinear_eigen(&m, &x, mass).unwrap();
        (&cs.lambdas_bar - &cs.lambdas).norm()
    };
    for mass in [100.0, 1000.0, 10000.0] {
        let ratio = diff(2.0 * mass) / diff(mass);
        assert!((0.45..=0.55).contains(&ratio), "M={mass}: {ratio}");
    }
}

#[test]
fn continuation_agrees_with_fixed_point() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_cluster(3, &mut rng);
    let mass = 1e4;
    let cs = solve_nonlinear_eigen(&m, &x, mass).unwrap();
    let (lam, _) = solve_continuation(&m, &x, mass, 8).unwrap();
    assert!((lam - &cs.lambdas_bar).amax() <= 1e-9);
}

#[test]
fn partition_with_finite_difference_derivatives() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_cluster(3, &mut rng);
    let cs = solve_nonlinear_eigen(&m, &x, 20.0).unwrap();
    let base = corrected_partition(&cs, &m, &x).unwrap();
    let v = m.eval(&x);
    let eff = &cs.psi_bar * DMatrix::from_diagonal(&cs.lambdas_bar) * cs.psi_bar.transpose();
    let h = 1e-6;
    let dpsi: Vec<DMatrix<f64>> = (0..9)
        .map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i / 3][i % 3] += h;
            xm[i / 3][i % 3] -= h;
            let mut ep = eigendecompose(&(&eff + m.eval(&xp) - &v)).unwrap();
            let mut em = eigendecompose(&(&eff + m.eval(&xm) - &v)).unwrap();
            ep.align_to(&cs.psi_bar);
            em.align_to(&cs.psi_bar);
            (ep.psi - em.psi) / (2.0 * h)
        })
        .collect();
    let fd = corrected_partition_with(&cs, &m, &x, &dpsi);
    assert!((fd - base).amax() <= 1e-6);
}

#[test]
fn large_mass_partition_approaches_uncorrected() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_cluster(3, &mut rng);
    let e = eigendecompose(&m.eval(&x)).unwrap();
    let plain = molfield_core::potential::surface_partition(&m, &x, &e).per_particle;
    let gap = |mass: f64| (solve_nonlinear_eigen(&m, &x, mass).unwrap().per_particle_bar - &plain).amax();
    assert!(gap(1e6) < 1e-3 * gap(1e2).max(1e-12) + 1e-9);
}
