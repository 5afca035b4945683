use molfield_core::potential::{
    eigendecompose, eigenvector_derivative, per_particle_gradients, surface_gradient, surface_partition,
    MatrixPotential, PairFunction, PairMatrixModel, TwoStateParams,
};
use molfield_core::Vec3;
use nalgebra::{DMatrix, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cluster(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    // jittered line of particles, keeps every pair apart
    (0..n)
        .map(|i| Vec3::new(1.3 * i as f64, 0.0, 0.0) + Vec3::from_fn(|_, _| rng.random_range(-0.4..0.4)))
        .collect()
}

fn two_state() -> PairMatrixModel {
    PairMatrixModel::two_state(&TwoStateParams::default()).unwrap()
}

fn shifted(x: &[Vec3], i: usize, h: f64) -> Vec<Vec3> {
    let mut y = x.to_vec();
    y[i / 3][i % 3] += h;
    y
}

#[test]
fn split_sums_to_whole_and_is_symmetric() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let x = random_cluster(4, &mut rng);
        let v = m.eval(&x);
        assert!((&v - v.transpose()).amax() == 0.0);
        let sum = (0..4).fold(DMatrix::zeros(2, 2), |acc, n| acc + m.eval_part(&x, n));
        assert!((sum - v).amax() <= 1e-12);
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_cluster(3, &mut rng);
    let h = 1e-5;
    for i in 0..9 {
        let fd = (m.eval(&shifted(&x, i, h)) - m.eval(&shifted(&x, i, -h))) / (2.0 * h);
        assert!((fd - m.eval_deriv(&x, i)).amax() <= 1e-7);
        for n in 0..3 {
            let fd = (m.eval_part(&shifted(&x, i, h), n) - m.eval_part(&shifted(&x, i, -h), n)) / (2.0 * h);
            assert!((fd - m.eval_part_deriv(&x, n, i)).amax() <= 1e-7);
        }
    }
}

#[test]
fn constant_pair_closed_form() {
    let (gap, gamma) = (0.7, 0.25);
    let p = TwoStateParams {
        phi: PairFunction::Zero,
        site_gap: 0.0,
        gap_floor: gap,
        gap_bump: 0.0,
        coupling: gamma,
        coupling_width: None,
        ..TwoStateParams::default()
    };
    let m = PairMatrixModel::two_state(&p).unwrap();
    let x = [Vec3::zeros(), Vec3::new(1.1, 0.3, 0.0)];
    let e = eigendecompose(&m.eval(&x)).unwrap();
    let root = (gap * gap / 4.0 + gamma * gamma).sqrt();
    assert!((e.lambdas[0] - (gap / 2.0 - root)).abs() <= 1e-14);
    assert!((e.lambdas[1] - (gap / 2.0 + root)).abs() <= 1e-14);
}

#[test]
fn random_symmetric_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
    let v = &a + a.transpose();
    let e = eigendecompose(&v).unwrap();
    let lam = DMatrix::from_diagonal(&e.lambdas);
    let res = (&v * &e.psi - &e.psi * lam).norm();
    assert!(res <= 1e-12 * v.norm());
    assert!((e.psi.transpose() * &e.psi - DMatrix::identity(6, 6)).amax() <= 1e-12);
    for k in 0..6 {
        let col = e.psi.column(k);
        let big = col.iter().copied().fold(0.0, |m: f64, a| if a.abs() > m.abs() { a } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn eigenvector_derivative_matches_finite_differences() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let x = random_cluster(3, &mut rng);
        let e = eigendecompose(&m.eval(&x)).unwrap();
        let h = 1e-6;
        for i in 0..9 {
            let d = eigenvector_derivative(&m, &x, &e, i).unwrap();
            let mut ep = eigendecompose(&m.eval(&shifted(&x, i, h))).unwrap();
            let mut em = eigendecompose(&m.eval(&shifted(&x, i, -h))).unwrap();
            ep.align_to(&e.psi);
            em.align_to(&e.psi);
            let fd = (ep.psi - em.psi) / (2.0 * h);
            assert!((fd - &d).amax() <= 1e-6);
            // antisymmetric projection, zero diagonal
            let proj = e.psi.transpose() * &d;
            assert!((&proj + proj.transpose()).amax() <= 1e-10);
        }
    }
}

#[test]
fn gradients_match_finite_differences_and_partitions_sum() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let x = random_cluster(3, &mut rng);
        let e = eigendecompose(&m.eval(&x)).unwrap();
        let part = surface_partition(&m, &x, &e);
        for k in 0..2 {
            assert!((part.total(k) - e.lambdas[k]).abs() <= 1e-12);
            let g = surface_gradient(&m, &x, &e, k);
            let per = per_particle_gradients(&m, &x, &e, k).unwrap();
            let h = 1e-5;
            for i in 0..9 {
                let lp = eigendecompose(&m.eval(&shifted(&x, i, h))).unwrap().lambdas[k];
                let lm = eigendecompose(&m.eval(&shifted(&x, i, -h))).unwrap().lambdas[k];
                assert!(((lp - lm) / (2.0 * h) - g[i / 3][i % 3]).abs() <= 1e-7);
                let sum: f64 = per.iter().map(|row| row[i / 3][i % 3]).sum();
                assert!((sum - g[i / 3][i % 3]).abs() <= 1e-10);
                for (n, row) in per.iter().enumerate() {
                    let ep = eigendecompose(&m.eval(&shifted(&x, i, h))).unwrap();
                    let em = eigendecompose(&m.eval(&shifted(&x, i, -h))).unwrap();
                    let fp = surface_partition(&m, &shifted(&x, i, h), &ep).per_particle[(n, k)];
                    let fm = surface_partition(&m, &shifted(&x, i, -h), &em).per_particle[(n, k)];
                    assert!(((fp - fm) / (2.0 * h) - row[i / 3][i % 3]).abs() <= 1e-7);
                }
            }
        }
    }
}

#[test]
fn partition_is_first_order_removal_energy() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_cluster(3, &mut rng);
    let v = m.eval(&x);
    let e = eigendecompose(&v).unwrap();
    let part = surface_partition(&m, &x, &e);
    let vn = m.eval_part(&x, 1);
    let err = |s: f64| {
        let reduced = eigendecompose(&(&v - &vn * s)).unwrap();
        (e.lambdas[0] - reduced.lambdas[0] - s * part.per_particle[(1, 0)]).abs()
    };
    let ratio = err(0.02) / err(0.01);
    assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn eigenvalues_are_rigid_invariant() {
    let m = two_state();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let x = random_cluster(4, &mut rng);
        let axis = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        let q = Rotation3::new(axis * rng.random_range(0.0..6.0)).into_inner();
        let flip = if rng.random::<bool>() { -1.0 } else { 1.0 };
        let shift = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let y: Vec<Vec3> = x.iter().map(|v| q * v * flip + shift).collect();
        let a = eigendecompose(&m.eval(&x)).unwrap().lambdas;
        let b = eigendecompose(&m.eval(&y)).unwrap().lambdas;
        assert!((a - b).amax() <= 1e-10);
    }
}

#[test]
fn harmonic_pair_at_rest_length() {
    let m = PairMatrixModel::scalar(PairFunction::Harmonic { k: 2.0, r0: 1.2 }).unwrap();
    let x = [Vec3::zeros(), Vec3::new(0.0, 1.2, 0.0)];
    assert!(m.eval(&x)[(0, 0)].abs() <= 1e-15);
    for i in 0..6 {
        assert!(m.eval_deriv(&x, i)[(0, 0)].abs() <= 1e-15);
    }
    let sum = m.eval_part(&x, 0) + m.eval_part(&x, 1);
    assert_eq!(sum, m.eval(&x));
}
