use molfield_core::dynamics::{
    force, integrate, integrate_with, AdiabaticSurface, CorrectedSurface, FiniteDifferenceSurface, IntegrateOptions,
    MassMode, PhaseState, Surface,
};
use molfield_core::potential::{PairFunction, PairMatrixModel, TwoStateParams};
use molfield_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn morse_cluster(rng: &mut ChaCha8Rng) -> PhaseState {
    let mut x = Vec::new();
    let mut p = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                x.push(Vec3::new(i as f64, j as f64, k as f64) * 1.5 + Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)));
                p.push(Vec3::from_fn(|_, _| rng.random_range(-0.3..0.3)));
            }
        }
    }
    PhaseState::new(x, p, vec![1.0; 8], 0).unwrap()
}

fn morse() -> AdiabaticSurface<PairMatrixModel> {
    AdiabaticSurface::new(PairMatrixModel::scalar(PairFunction::Morse { depth: 1.0, a: 1.2, r0: 1.5 }).unwrap(), 0)
        .unwrap()
}

#[test]
fn verlet_is_time_reversible() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = morse();
    let start = morse_cluster(&mut rng);
    let fwd = integrate(&start, 1e-3, 500, &s).unwrap();
    let back = integrate(&fwd.last().reversed(), 1e-3, 500, &s).unwrap();
    let end = back.last();
    for n in 0..8 {
        assert!((end.x[n] - start.x[n]).norm() <= 1e-10);
        assert!((end.p[n] + start.p[n]).norm() <= 1e-10);
    }
}

#[test]
fn heavy_harmonic_pair_has_no_drift_and_follows_closed_form() {
    let (k, r0, mass) = (1.0, 1.0, 1836.0);
    let s = AdiabaticSurface::new(PairMatrixModel::scalar(PairFunction::Harmonic { k, r0 }).unwrap(), 0).unwrap();
    let amp = 0.2;
    let start = PhaseState::new(
        vec![Vec3::new(-(r0 + amp) / 2.0, 0.0, 0.0), Vec3::new((r0 + amp) / 2.0, 0.0, 0.0)],
        vec![Vec3::zeros(); 2],
        vec![mass; 2],
        0,
    )
    .unwrap();
    let steps = 10_000;
    let dt = 1e-3;
    let t = integrate(&start, dt, steps, &s).unwrap();
    assert!(t.energy_drift() <= 1e-8, "{}", t.energy_drift());
    // relative coordinate obeys μ r̈ = −k (r − r0) with μ = M/2
    let omega = (2.0 * k / mass).sqrt();
    let r = (t.last().x[1] - t.last().x[0]).norm();
    let exact = r0 + amp * (omega * dt * steps as f64).cos();
    assert!((r - exact).abs() <= 1e-9, "{r} vs {exact}");
}

#[test]
fn momentum_and_angular_momentum_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = morse();
    let start = morse_cluster(&mut rng);
    let t = integrate_with(&start, 2e-3, 2000, &s, &IntegrateOptions { mode: MassMode::Physical, record_every: 100 })
        .unwrap();
    for st in &t.states {
        assert!((st.total_momentum() - start.total_momentum()).norm() <= 1e-10);
        assert!((st.angular_momentum() - start.angular_momentum()).norm() <= 1e-8);
        assert_eq!(st.surface, 0);
    }
    assert_eq!(t.states.len(), 21);
}

#[test]
fn analytic_force_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = PairMatrixModel::two_state(&TwoStateParams::default()).unwrap();
    for j in 0..2 {
        let s = AdiabaticSurface::new(model.clone(), j).unwrap();
        let fd = FiniteDifferenceSurface::new(s.clone());
        for _ in 0..5 {
            let x: Vec<Vec3> = (0..3)
                .map(|i| Vec3::new(1.3 * i as f64, 0.0, 0.0) + Vec3::from_fn(|_, _| rng.random_range(-0.4..0.4)))
                .collect();
            let a = force(&s, &x).unwrap();
            let b = force(&fd, &x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() <= 1e-6);
            }
        }
    }
}

#[test]
fn corrected_surface_partition_and_scaled_mode() {
    let model = PairMatrixModel::two_state(&TwoStateParams::default()).unwrap();
    let s = CorrectedSurface::new(model, 0, 1000.0).unwrap();
    let x = vec![Vec3::zeros(), Vec3::new(1.4, 0.1, 0.0), Vec3::new(0.3, 1.2, -0.2)];
    let lam: f64 = s.partition(&x).unwrap().iter().sum();
    assert!((lam - s.energy(&x).unwrap()).abs() <= 1e-10);
    let st = PhaseState::new(x, vec![Vec3::new(0.1, 0.0, 0.0); 3], vec![1000.0; 3], 0).unwrap();
    let opts = IntegrateOptions { mode: MassMode::Scaled, record_every: 1 };
    let t = integrate_with(&st, 1e-2, 20, &s, &opts).unwrap();
    assert!(t.energy_drift() <= 1e-5);
    assert!((t.last().total_momentum() - st.total_momentum()).norm() <= 1e-8);
}
