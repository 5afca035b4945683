use molfield_core::dual::{divergence_rows, mat_values, values};
use molfield_core::dynamics::{AdiabaticSurface, PhaseState, Surface};
use molfield_core::fields::{
    canonical_fields, field_grid, instantaneous_density, instantaneous_momentum_flux, trajectory_fields,
    velocity_field, Frame, SurfaceEnsemble,
};
use molfield_core::mollifier::Mollifier;
use molfield_core::potential::{PairFunction, PairMatrixModel};
use molfield_core::quadrature::GaussLegendre;
use molfield_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn morse() -> AdiabaticSurface<PairMatrixModel> {
    AdiabaticSurface::new(PairMatrixModel::scalar(PairFunction::Morse { depth: 1.0, a: 1.2, r0: 1.5 }).unwrap(), 0)
        .unwrap()
}

fn free() -> AdiabaticSurface<PairMatrixModel> {
    AdiabaticSurface::new(PairMatrixModel::zero(1), 0).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> PhaseState {
    let x = (0..n).map(|i| Vec3::new(1.2 * i as f64, 0.0, 0.0) + Vec3::from_fn(|_, _| rng.random_range(-spread..spread))).collect();
    let p = (0..n).map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5))).collect();
    let masses = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    PhaseState::new(x, p, masses, 0).unwrap()
}

#[test]
fn density_integrates_to_total_mass() {
    let st = PhaseState::new(
        vec![Vec3::zeros(), Vec3::new(0.4, 0.2, -0.1)],
        vec![Vec3::zeros(); 2],
        vec![1.5, 0.7],
        0,
    )
    .unwrap();
    let f = Frame::new(st, &free()).unwrap();
    let m = Mollifier::new(1.0).unwrap();
    let axes: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|c| {
            let lo = [-1.0, -1.0, -1.1][c];
            let hi = [1.4, 1.2, 1.0][c];
            let gl = GaussLegendre::new(16);
            (0..8).flat_map(|k| {
                let a = lo + (hi - lo) * k as f64 / 8.0;
                let b = lo + (hi - lo) * (k + 1) as f64 / 8.0;
                gl.mapped(a, b).collect::<Vec<_>>()
            })
            .collect()
        })
        .collect();
    let mut total = 0.0;
    for &(a, wa) in &axes[0] {
        for &(b, wb) in &axes[1] {
            for &(c, wc) in &axes[2] {
                total += wa * wb * wc * instantaneous_density(&f, &m, &Vec3::new(a, b, c)).0.value;
            }
        }
    }
    assert!((total / 2.2 - 1.0).abs() <= 1e-6, "{total}");
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = morse();
    let frames: Vec<Frame> = (0..6).map(|_| Frame::new(random_state(&mut rng, 3, 0.3), &s).unwrap()).collect();
    let m = Mollifier::new(1.5).unwrap();
    let ens = [SurfaceEnsemble { weight: 1.0, frames: &frames }];
    let h = 1e-5;
    for _ in 0..10 {
        let y = Vec3::new(rng.random_range(0.0..2.4), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let t = trajectory_fields(&frames[0], &m, &y);
        let c = canonical_fields(&ens, &m, &y).unwrap();
        for d in 0..3 {
            let mut e = Vec3::zeros();
            e[d] = h;
            let tp = trajectory_fields(&frames[0], &m, &(y + e));
            let tm = trajectory_fields(&frames[0], &m, &(y - e));
            let fd = |a: f64, b: f64| (a - b) / (2.0 * h);
            assert!((fd(tp.rho.value, tm.rho.value) - t.rho.grad[d]).abs() <= 1e-6);
            for l in 0..3 {
                assert!((fd(tp.energy_flux[l].value, tm.energy_flux[l].value) - t.energy_flux[l].grad[d]).abs() <= 1e-6);
                for j in 0..3 {
                    let (a, b) = (tp.bond_stress[l][j].value, tm.bond_stress[l][j].value);
                    assert!((fd(a, b) - t.bond_stress[l][j].grad[d]).abs() <= 1e-6);
                }
            }
            let cp = canonical_fields(&ens, &m, &(y + e)).unwrap();
            let cm = canonical_fields(&ens, &m, &(y - e)).unwrap();
            for l in 0..3 {
                assert!((fd(cp.q[l].value, cm.q[l].value) - c.q[l].grad[d]).abs() <= 1e-6);
                assert!((fd(cp.u[l].value, cm.u[l].value) - c.u[l].grad[d]).abs() <= 1e-6);
                for j in 0..3 {
                    let (a, b) = (cp.sigma()[l][j].value, cm.sigma()[l][j].value);
                    assert!((fd(a, b) - c.sigma()[l][j].grad[d]).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn bond_stress_divergence_is_force_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = morse();
    let m = Mollifier::new(1.4).unwrap();
    for _ in 0..5 {
        let st = random_state(&mut rng, 4, 0.3);
        let g = s.gradient(&st.x).unwrap();
        let f = Frame::new(st.clone(), &s).unwrap();
        for _ in 0..10 {
            let y = Vec3::new(rng.random_range(-0.5..4.0), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let div = divergence_rows(&trajectory_fields(&f, &m, &y).bond_stress);
            let density: Vec3 = (0..4).map(|n| -g[n] * m.eval(&(y - st.x[n]))).sum();
            assert!((div - density).norm() <= 1e-9, "{div} vs {density}");
        }
    }
}

#[test]
fn harmonic_pair_midpoint_stress() {
    let (k, r0) = (2.0, 1.0);
    let s = AdiabaticSurface::new(PairMatrixModel::scalar(PairFunction::Harmonic { k, r0 }).unwrap(), 0).unwrap();
    let a = Vec3::new(0.1, 0.2, 0.0);
    let b = Vec3::new(1.0, 0.8, 0.3);
    let st = PhaseState::new(vec![a, b], vec![Vec3::zeros(); 2], vec![1.0; 2], 0).unwrap();
    let f = Frame::new(st, &s).unwrap();
    let m = Mollifier::new(0.9).unwrap();
    let y = (a + b) * 0.5;
    let d = a - b;
    let r = d.norm();
    let kk = 100_000;
    let bond: f64 = (0..kk).map(|i| m.eval(&(d * ((i as f64 + 0.5) / kk as f64 - 0.5)))).sum::<f64>() / kk as f64;
    let expected = d * d.transpose() * (-bond * k * (r - r0) / r);
    let got = mat_values(&instantaneous_momentum_flux(&f, &m, &y));
    assert!((got - expected).amax() <= 1e-9);
    assert!((got - got.transpose()).amax() <= 1e-12);
}

#[test]
fn velocity_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = free();
    let m = Mollifier::new(2.0).unwrap();
    let y = Vec3::new(1.0, 0.1, 0.0);
    let w = Vec3::new(0.3, -0.2, 0.7);
    let shared: Vec<Frame> = (0..5)
        .map(|_| {
            let mut st = random_state(&mut rng, 3, 0.3);
            st.p = st.masses.iter().map(|mm| w * *mm).collect();
            Frame::new(st, &s).unwrap()
        })
        .collect();
    let u = values(&velocity_field(&[SurfaceEnsemble { weight: 1.0, frames: &shared }], &m, &y).unwrap());
    assert!((u - w).norm() <= 1e-14);

    let mut mirrored = Vec::new();
    for _ in 0..5 {
        let st = random_state(&mut rng, 3, 0.3);
        mirrored.push(Frame::new(st.reversed(), &s).unwrap());
        mirrored.push(Frame::new(st, &s).unwrap());
    }
    let ens = [SurfaceEnsemble { weight: 1.0, frames: &mirrored }];
    let c = canonical_fields(&ens, &m, &y).unwrap();
    assert!(values(&c.u).norm() <= 1e-14);
    assert!(values(&c.q).norm() <= 1e-14);

    let random: Vec<Frame> = (0..7).map(|_| Frame::new(random_state(&mut rng, 3, 0.3), &s).unwrap()).collect();
    let ens = [SurfaceEnsemble { weight: 1.0, frames: &random }];
    let u = values(&velocity_field(&ens, &m, &y).unwrap());
    // ⟨Σ M η (p/M − u)⟩ = 0
    let mut peculiar = Vec3::zeros();
    for f in &random {
        for n in 0..3 {
            let st = &f.state;
            peculiar += (st.p[n] / st.masses[n] - u) * (st.masses[n] * m.eval(&(y - st.x[n])));
        }
    }
    assert!(peculiar.norm() / 7.0 <= 1e-12);
}

#[test]
fn kinetic_flux_rearrangement() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = morse();
    let frames: Vec<Frame> = (0..9).map(|_| Frame::new(random_state(&mut rng, 3, 0.3), &s).unwrap()).collect();
    let m = Mollifier::new(1.5).unwrap();
    let y = Vec3::new(1.1, 0.0, 0.2);
    let c = canonical_fields(&[SurfaceEnsemble { weight: 1.0, frames: &frames }], &m, &y).unwrap();
    let mut kin = nalgebra::Matrix3::zeros();
    for f in &frames {
        kin += mat_values(&trajectory_fields(f, &m, &y).kinetic_flux) / 9.0;
    }
    let u = values(&c.u);
    let rebuilt = u * u.transpose() * c.rho.value - mat_values(&c.sigma_kinetic);
    assert!((kin - rebuilt).amax() <= 1e-10);
}

#[test]
fn ideal_gas_pressure() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = free();
    let temp: f64 = 0.8;
    let side: f64 = 4.0;
    let n = 12;
    let frames: Vec<Frame> = (0..4000)
        .map(|_| {
            let x = (0..n).map(|_| Vec3::from_fn(|_, _| rng.random_range(0.0..side))).collect();
            let p = (0..n).map(|_| Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * temp.sqrt())).collect();
            Frame::new(PhaseState::new(x, p, vec![1.0; n], 0).unwrap(), &s).unwrap()
        })
        .collect();
    let m = Mollifier::new(1.0).unwrap();
    let y = Vec3::new(2.0, 2.0, 2.0);
    let c = canonical_fields(&[SurfaceEnsemble { weight: 1.0, frames: &frames }], &m, &y).unwrap();
    let number = n as f64 / side.powi(3);
    let sigma = c.sigma();
    for l in 0..3 {
        for j in 0..3 {
            let target = if l == j { -number * temp } else { 0.0 };
            let se = c.stderr.sigma[(l, j)];
            assert!((sigma[l][j].value - target).abs() <= 3.0 * se + 1e-12, "{l}{j}: {} vs {target} ± {se}", sigma[l][j].value);
        }
    }
}

#[test]
fn surface_weighting() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = morse();
    let frames: Vec<Frame> = (0..4).map(|_| Frame::new(random_state(&mut rng, 3, 0.3), &s).unwrap()).collect();
    let m = Mollifier::new(1.5).unwrap();
    let probes = vec![Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.8, 0.2, 0.1), Vec3::new(30.0, 0.0, 0.0)];
    let one = field_grid(&[SurfaceEnsemble { weight: 1.0, frames: &frames }], &m, &probes).unwrap();
    let half = field_grid(
        &[SurfaceEnsemble { weight: 0.5, frames: &frames }, SurfaceEnsemble { weight: 0.5, frames: &frames }],
        &m,
        &probes,
    )
    .unwrap();
    assert!(one.samples[2].is_none());
    for (a, b) in one.samples.iter().zip(&half.samples).take(2) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert!((a.rho.value - b.rho.value).abs() <= 1e-14);
        assert!((mat_values(&a.sigma()) - mat_values(&b.sigma())).amax() <= 1e-12);
        assert!((values(&a.q) - values(&b.q)).norm() <= 1e-12);
    }
}
