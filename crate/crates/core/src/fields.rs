//! Mollified continuum fields of a particle system: densities, fluxes,
//! stress and heat flux, each with its gradient in the probe position.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dual::{Dual3, DualMat, DualVec, DUAL_MAT_ZERO, DUAL_VEC_ZERO};
use crate::dynamics::{PhaseState, Surface};
use crate::geometry::{lift_gradient_to_distances, pairs, PairVector};
use crate::mollifier::Mollifier;
use crate::{Error, Result, Vec3};

/// Densities below this are treated as vacuum.
pub const RHO_FLOOR: f64 = 1e-12;

/// A phase-space state with the surface data the fields need.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub state: PhaseState,
    /// `λ^n`
    pub lambda_n: Vec<f64>,
    /// `∇_{x^m} λ^n`, `[n][m]`
    pub grad_lambda: Vec<Vec<Vec3>>,
    /// `∂λ̃/∂r^{nk}`
    pub lifted: PairVector,
}

impl Frame {
    pub fn new(state: PhaseState, surface: &dyn Surface) -> Result<Self> {
        let lambda_n = surface.partition(&state.x)?;
        let grad_lambda = surface.partition_gradients(&state.x)?;
        let total: Vec<Vec3> = (0..state.len()).map(|m| grad_lambda.iter().map(|g| g[m]).sum()).collect();
        let lifted = lift_gradient_to_distances(&state.x, &total)?;
        Ok(Frame { state, lambda_n, grad_lambda, lifted })
    }

    /// Frame carrying only the per-particle energies; enough for
    /// [`instantaneous_density`] but not for fluxes.
    pub fn densities_only(state: PhaseState, surface: &dyn Surface) -> Result<Self> {
        let n = state.len();
        let lambda_n = surface.partition(&state.x)?;
        Ok(Frame { state, lambda_n, grad_lambda: Vec::new(), lifted: PairVector::zeros(n) })
    }

    /// Frame with caller-chosen lifted derivatives.
    pub fn from_parts(
        state: PhaseState,
        lambda_n: Vec<f64>,
        grad_lambda: Vec<Vec<Vec3>>,
        lifted: PairVector,
    ) -> Result<Self> {
        let n = state.len();
        if lambda_n.len() != n || grad_lambda.len() != n || lifted.particles() != n {
            return Err(Error::DimensionMismatch(alloc::format!("frame data for {n} particles")));
        }
        Ok(Frame { state, lambda_n, grad_lambda, lifted })
    }

    fn velocity(&self, n: usize) -> Vec3 {
        self.state.p[n] / self.state.masses[n]
    }

    fn particle_energy(&self, n: usize) -> f64 {
        self.state.p[n].norm_squared() / (2.0 * self.state.masses[n]) + self.lambda_n[n]
    }
}

fn outer(a: &DualVec, b: &DualVec) -> DualMat {
    let mut t = DUAL_MAT_ZERO;
    for l in 0..3 {
        for j in 0..3 {
            t[l][j] = a[l] * b[j];
        }
    }
    t
}

fn scale_vec(v: &Vec3, s: Dual3) -> DualVec {
    [s * v[0], s * v[1], s * v[2]]
}

fn add_vec(a: &mut DualVec, b: &DualVec) {
    for i in 0..3 {
        a[i] += b[i];
    }
}

fn add_mat(a: &mut DualMat, b: &DualMat, s: f64) {
    for l in 0..3 {
        for j in 0..3 {
            a[l][j] += b[l][j] * s;
        }
    }
}

fn mat_vec(t: &DualMat, u: &DualVec) -> DualVec {
    let mut out = DUAL_VEC_ZERO;
    for l in 0..3 {
        for j in 0..3 {
            out[l] += t[l][j] * u[j];
        }
    }
    out
}

/// Bond integrals `B_nk(y)` for every pair, in pair order.
fn bond_integrals(frame: &Frame, m: &Mollifier, y: &Vec3) -> Vec<Dual3> {
    let x = &frame.state.x;
    pairs(x.len()).map(|(n, k)| m.bond_integral(y, &x[n], &x[k])).collect()
}

/// `(ρ̃, Σ η p^n, ẽ)` at `y`.
pub fn instantaneous_density(frame: &Frame, m: &Mollifier, y: &Vec3) -> (Dual3, DualVec, Dual3) {
    let s = &frame.state;
    let mut rho = Dual3::ZERO;
    let mut mom = DUAL_VEC_ZERO;
    let mut e = Dual3::ZERO;
    for n in 0..s.len() {
        let eta = m.eval_dual(&(y - s.x[n]));
        if eta.value == 0.0 {
            continue;
        }
        rho += eta * s.masses[n];
        add_vec(&mut mom, &scale_vec(&s.p[n], eta));
        e += eta * frame.particle_energy(n);
    }
    (rho, mom, e)
}

/// `Σ_{n<k} B_nk (x^n−x^k)⊗(x^n−x^k) ∂λ̃/∂r^{nk} / r^{nk}`.
fn bond_stress(frame: &Frame, bonds: &[Dual3]) -> DualMat {
    let x = &frame.state.x;
    let mut t = DUAL_MAT_ZERO;
    for ((idx, (n, k)), b) in pairs(x.len()).enumerate().zip(bonds) {
        if b.value == 0.0 && b.grad == Vec3::zeros() {
            continue;
        }
        let d = x[n] - x[k];
        let c = frame.lifted[idx] / d.norm();
        for l in 0..3 {
            for j in 0..3 {
                t[l][j] += *b * (c * d[l] * d[j]);
            }
        }
    }
    t
}

/// `Σ_{n≠m} B_nm (x^n−x^m) (p^m/M_m · ∇_{x^m}λ^n)`.
fn bond_energy_flux(frame: &Frame, bonds: &[Dual3]) -> DualVec {
    let x = &frame.state.x;
    let mut f = DUAL_VEC_ZERO;
    for ((n, k), b) in pairs(x.len()).zip(bonds) {
        if b.value == 0.0 && b.grad == Vec3::zeros() {
            continue;
        }
        let d = x[n] - x[k];
        let w = frame.velocity(k).dot(&frame.grad_lambda[n][k]) - frame.velocity(n).dot(&frame.grad_lambda[k][n]);
        add_vec(&mut f, &scale_vec(&d, *b * w));
    }
    f
}

/// Fields of a single state in the form where each conservation law reads
/// `∂_t X + div F = 0` without reference to a bulk velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFields {
    pub rho: Dual3,
    pub mom: DualVec,
    pub energy: Dual3,
    /// `Σ η p⊗p/M`
    pub kinetic_flux: DualMat,
    /// `Σ_{n<k} B (x^n−x^k)⊗(x^n−x^k) ∂λ̃/r`
    pub bond_stress: DualMat,
    /// `Σ η (p/M) ẽ^n + Σ_{n≠m} B (x^n−x^m)(p^m/M · ∇_{x^m}λ^n)`
    pub energy_flux: DualVec,
}

impl TrajectoryFields {
    pub fn momentum_flux(&self) -> DualMat {
        let mut t = self.kinetic_flux;
        add_mat(&mut t, &self.bond_stress, -1.0);
        t
    }
}

pub fn trajectory_fields(frame: &Frame, m: &Mollifier, y: &Vec3) -> TrajectoryFields {
    let s = &frame.state;
    let mut out = TrajectoryFields {
        rho: Dual3::ZERO,
        mom: DUAL_VEC_ZERO,
        energy: Dual3::ZERO,
        kinetic_flux: DUAL_MAT_ZERO,
        bond_stress: DUAL_MAT_ZERO,
        energy_flux: DUAL_VEC_ZERO,
    };
    for n in 0..s.len() {
        let eta = m.eval_dual(&(y - s.x[n]));
        if eta.value == 0.0 {
            continue;
        }
        let v = frame.velocity(n);
        let e = frame.particle_energy(n);
        out.rho += eta * s.masses[n];
        add_vec(&mut out.mom, &scale_vec(&s.p[n], eta));
        out.energy += eta * e;
        add_vec(&mut out.energy_flux, &scale_vec(&v, eta * e));
        for l in 0..3 {
            for j in 0..3 {
                out.kinetic_flux[l][j] += eta * (s.p[n][l] * v[j]);
            }
        }
    }
    let bonds = bond_integrals(frame, m, y);
    out.bond_stress = bond_stress(frame, &bonds);
    add_vec(&mut out.energy_flux, &bond_energy_flux(frame, &bonds));
    out
}

/// Momentum flux `Σ η p⊗p/M − Σ_{n<k} B (x^n−x^k)⊗(x^n−x^k) ∂λ̃/r`.
pub fn instantaneous_momentum_flux(frame: &Frame, m: &Mollifier, y: &Vec3) -> DualMat {
    trajectory_fields(frame, m, y).momentum_flux()
}

/// Frames on one surface together with the probability of that surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceEnsemble<'a> {
    pub weight: f64,
    pub frames: &'a [Frame],
}

fn check_ensembles(ensembles: &[SurfaceEnsemble<'_>]) -> Result<()> {
    if ensembles.is_empty() || ensembles.iter().any(|e| e.frames.is_empty()) {
        return Err(Error::invalid("ensemble", "must be nonempty"));
    }
    if ensembles.iter().any(|e| !(e.weight >= 0.0)) {
        return Err(Error::invalid("weight", "surface weights must be nonnegative"));
    }
    Ok(())
}

/// Weighted mean and standard error across surfaces of a per-sample scalar.
pub fn weighted_mean<F: FnMut(usize, usize) -> f64>(sizes: &[(f64, usize)], mut value: F) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (j, &(w, n)) in sizes.iter().enumerate() {
        let vals: Vec<f64> = (0..n).map(|s| value(j, s)).collect();
        let mu = vals.iter().sum::<f64>() / n as f64;
        mean += w * mu;
        if n > 1 {
            let s2 = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            var += w * w * s2 / n as f64;
        }
    }
    (mean, var.sqrt())
}

/// `u = ⟨Σ η p⟩ / ⟨Σ M η⟩`, with its gradient.
pub fn velocity_field(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<DualVec> {
    check_ensembles(ensembles)?;
    let mut rho = Dual3::ZERO;
    let mut mom = DUAL_VEC_ZERO;
    for e in ensembles {
        let w = e.weight / e.frames.len() as f64;
        for f in e.frames {
            let (r, p, _) = instantaneous_density(f, m, y);
            rho += r * w;
            for i in 0..3 {
                mom[i] += p[i] * w;
            }
        }
    }
    if rho.value < RHO_FLOOR {
        return Err(Error::VacuumProbe { rho: rho.value });
    }
    let inv = rho.recip();
    Ok([mom[0] * inv, mom[1] * inv, mom[2] * inv])
}

/// Per-sample contributions whose ensemble means are the canonical fields,
/// for a fixed bulk velocity `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalSample {
    pub rho: Dual3,
    pub mom: DualVec,
    pub energy: Dual3,
    /// `−Σ M η v⊗v`
    pub sigma_kinetic: DualMat,
    /// `Σ_{n<k} B (x^n−x^k)⊗(x^n−x^k) ∂λ̃/r`
    pub sigma_potential: DualMat,
    /// `Σ η v (M|v|²/2 + λ^n) + Σ_{n≠m} B (x^n−x^m)(p^m/M·∇_{x^m}λ^n) + σ_pot u`
    pub q: DualVec,
}

impl CanonicalSample {
    pub fn sigma(&self) -> DualMat {
        let mut s = self.sigma_kinetic;
        add_mat(&mut s, &self.sigma_potential, 1.0);
        s
    }

    /// `ρ u⊗u − σ`
    pub fn momentum_flux(&self, u: &DualVec) -> DualMat {
        let mut t = outer(u, u);
        for row in t.iter_mut() {
            for c in row.iter_mut() {
                *c = self.rho * *c;
            }
        }
        add_mat(&mut t, &self.sigma(), -1.0);
        t
    }

    /// `E u − σ u + q`
    pub fn energy_flux(&self, u: &DualVec) -> DualVec {
        let su = mat_vec(&self.sigma(), u);
        let mut f = DUAL_VEC_ZERO;
        for l in 0..3 {
            f[l] = self.energy * u[l] - su[l] + self.q[l];
        }
        f
    }
}

pub fn canonical_sample(frame: &Frame, m: &Mollifier, y: &Vec3, u: &DualVec) -> CanonicalSample {
    let s = &frame.state;
    let mut out = CanonicalSample {
        rho: Dual3::ZERO,
        mom: DUAL_VEC_ZERO,
        energy: Dual3::ZERO,
        sigma_kinetic: DUAL_MAT_ZERO,
        sigma_potential: DUAL_MAT_ZERO,
        q: DUAL_VEC_ZERO,
    };
    for n in 0..s.len() {
        let eta = m.eval_dual(&(y - s.x[n]));
        if eta.value == 0.0 {
            continue;
        }
        let mass = s.masses[n];
        let vp = s.p[n] / mass;
        let v = [Dual3::constant(vp[0]) - u[0], Dual3::constant(vp[1]) - u[1], Dual3::constant(vp[2]) - u[2]];
        let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        out.rho += eta * mass;
        add_vec(&mut out.mom, &scale_vec(&s.p[n], eta));
        out.energy += eta * frame.particle_energy(n);
        let me = eta * mass;
        for l in 0..3 {
            for j in 0..3 {
                out.sigma_kinetic[l][j] -= me * v[l] * v[j];
            }
        }
        let e_int = eta * (v2 * (0.5 * mass) + Dual3::constant(frame.lambda_n[n]));
        for l in 0..3 {
            out.q[l] += v[l] * e_int;
        }
    }
    let bonds = bond_integrals(frame, m, y);
    out.sigma_potential = bond_stress(frame, &bonds);
    add_vec(&mut out.q, &bond_energy_flux(frame, &bonds));
    add_vec(&mut out.q, &mat_vec(&out.sigma_potential, u));
    out
}

/// Standard errors of the ensemble fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub rho: f64,
    pub mom: Vector3<f64>,
    pub energy: f64,
    pub sigma: Matrix3<f64>,
    pub q: Vector3<f64>,
}

/// Ensemble-averaged fields in bulk-velocity form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFields {
    pub rho: Dual3,
    pub mom: DualVec,
    pub energy: Dual3,
    pub u: DualVec,
    pub sigma_kinetic: DualMat,
    pub sigma_potential: DualMat,
    pub q: DualVec,
    pub stderr: FieldErrors,
}

impl CanonicalFields {
    pub fn sigma(&self) -> DualMat {
        let mut s = self.sigma_kinetic;
        add_mat(&mut s, &self.sigma_potential, 1.0);
        s
    }
}

/// Per-sample canonical contributions, `[surface][sample]`, and the bulk
/// velocity they were computed with.
pub fn canonical_samples(
    ensembles: &[SurfaceEnsemble<'_>],
    m: &Mollifier,
    y: &Vec3,
) -> Result<(DualVec, Vec<Vec<CanonicalSample>>)> {
    let u = velocity_field(ensembles, m, y)?;
    let samples = ensembles.iter().map(|e| e.frames.iter().map(|f| canonical_sample(f, m, y, &u)).collect()).collect();
    Ok((u, samples))
}

fn mean_dual<F: Fn(&CanonicalSample) -> Dual3>(
    ensembles: &[SurfaceEnsemble<'_>],
    samples: &[Vec<CanonicalSample>],
    f: F,
) -> (Dual3, f64) {
    let mut acc = Dual3::ZERO;
    for (e, s) in ensembles.iter().zip(samples) {
        let w = e.weight / s.len() as f64;
        for c in s {
            acc += f(c) * w;
        }
    }
    let sizes: Vec<(f64, usize)> = ensembles.iter().zip(samples).map(|(e, s)| (e.weight, s.len())).collect();
    let (_, se) = weighted_mean(&sizes, |j, k| f(&samples[j][k]).value);
    (acc, se)
}

/// Ensemble fields at `y`: density, momentum, energy, bulk velocity,
/// stress and heat flux, all with probe gradients and standard errors.
pub fn canonical_fields(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<CanonicalFields> {
    let (u, samples) = canonical_samples(ensembles, m, y)?;
    let (rho, se_rho) = mean_dual(ensembles, &samples, |c| c.rho);
    let (energy, se_e) = mean_dual(ensembles, &samples, |c| c.energy);
    let mut mom = DUAL_VEC_ZERO;
    let mut q = DUAL_VEC_ZERO;
    let mut se_mom = Vector3::zeros();
    let mut se_q = Vector3::zeros();
    let mut sk = DUAL_MAT_ZERO;
    let mut sp = DUAL_MAT_ZERO;
    let mut se_sigma = Matrix3::zeros();
    for l in 0..3 {
        (mom[l], se_mom[l]) = mean_dual(ensembles, &samples, |c| c.mom[l]);
        (q[l], se_q[l]) = mean_dual(ensembles, &samples, |c| c.q[l]);
        for j in 0..3 {
            sk[l][j] = mean_dual(ensembles, &samples, |c| c.sigma_kinetic[l][j]).0;
            sp[l][j] = mean_dual(ensembles, &samples, |c| c.sigma_potential[l][j]).0;
            se_sigma[(l, j)] = mean_dual(ensembles, &samples, |c| c.sigma_kinetic[l][j] + c.sigma_potential[l][j]).1;
        }
    }
    Ok(CanonicalFields {
        rho,
        mom,
        energy,
        u,
        sigma_kinetic: sk,
        sigma_potential: sp,
        q,
        stderr: FieldErrors { rho: se_rho, mom: se_mom, energy: se_e, sigma: se_sigma, q: se_q },
    })
}

pub fn stress_tensor(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<DualMat> {
    Ok(canonical_fields(ensembles, m, y)?.sigma())
}

pub fn heat_flux(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<DualVec> {
    Ok(canonical_fields(ensembles, m, y)?.q)
}

/// Canonical fields on a list of probes; vacuum probes are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub time: f64,
    pub weights: Vec<f64>,
    pub points: Vec<Vec3>,
    pub samples: Vec<Option<CanonicalFields>>,
}

pub fn field_at(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<Option<CanonicalFields>> {
    match canonical_fields(ensembles, m, y) {
        Ok(f) => Ok(Some(f)),
        Err(Error::VacuumProbe { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn field_grid(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, probes: &[Vec3]) -> Result<ProbeGrid> {
    check_ensembles(ensembles)?;
    let samples = probes.iter().map(|y| field_at(ensembles, m, y)).collect::<Result<Vec<_>>>()?;
    Ok(ProbeGrid {
        time: ensembles[0].frames[0].state.time,
        weights: ensembles.iter().map(|e| e.weight).collect(),
        points: probes.to_vec(),
        samples,
    })
}

/// `{lo + (i + ½)·(hi − lo)/n}` lattice with `counts[c]` points per axis.
pub fn probe_lattice(lo: &Vec3, hi: &Vec3, counts: [usize; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(counts.iter().product());
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let idx = [i, j, k];
                out.push(Vec3::from_fn(|c, _| lo[c] + (idx[c] as f64 + 0.5) * (hi[c] - lo[c]) / counts[c] as f64));
            }
        }
    }
    out
}
