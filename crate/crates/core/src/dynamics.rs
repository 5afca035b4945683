//! Classical motion on a single electronic surface.

use alloc::vec::Vec;

use crate::nonlinear_eigen::{solve_with, SolverOptions};
use crate::potential::{
    eigendecompose, per_particle_gradients, surface_gradient, surface_partition, MatrixPotential,
};
use crate::{Error, Result, Vec3};

/// Step size of central finite differences.
pub const FD_STEP: f64 = 1e-5;

/// Coordinates beyond this magnitude abort the integration.
pub const BLOW_UP: f64 = 1e9;

/// A scalar energy surface `λ_j(x)` with its per-particle split.
pub trait Surface: Send + Sync {
    fn index(&self) -> usize;

    fn energy(&self, x: &[Vec3]) -> Result<f64>;

    fn gradient(&self, x: &[Vec3]) -> Result<Vec<Vec3>>;

    /// `λ_j^n` for every particle.
    fn partition(&self, x: &[Vec3]) -> Result<Vec<f64>>;

    /// `∇_{x^m} λ_j^n`, indexed `[n][m]`.
    fn partition_gradients(&self, x: &[Vec3]) -> Result<Vec<Vec<Vec3>>>;
}

impl<S: Surface + ?Sized> Surface for &S {
    fn index(&self) -> usize {
        (**self).index()
    }
    fn energy(&self, x: &[Vec3]) -> Result<f64> {
        (**self).energy(x)
    }
    fn gradient(&self, x: &[Vec3]) -> Result<Vec<Vec3>> {
        (**self).gradient(x)
    }
    fn partition(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        (**self).partition(x)
    }
    fn partition_gradients(&self, x: &[Vec3]) -> Result<Vec<Vec<Vec3>>> {
        (**self).partition_gradients(x)
    }
}

/// Central-difference Jacobian of a vector-valued map: `[output][particle]`.
pub fn fd_jacobian<F>(x: &[Vec3], h: f64, f: F) -> Result<Vec<Vec<Vec3>>>
where
    F: Fn(&[Vec3]) -> Result<Vec<f64>>,
{
    let mut xs = x.to_vec();
    let mut out: Vec<Vec<Vec3>> = Vec::new();
    for m in 0..x.len() {
        for c in 0..3 {
            xs[m][c] = x[m][c] + h;
            let fp = f(&xs)?;
            xs[m][c] = x[m][c] - h;
            let fm = f(&xs)?;
            xs[m][c] = x[m][c];
            if out.is_empty() {
                out = alloc::vec![alloc::vec![Vec3::zeros(); x.len()]; fp.len()];
            }
            for (row, (a, b)) in out.iter_mut().zip(fp.iter().zip(&fm)) {
                row[m][c] = (a - b) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

/// Eigenvalue `λ_j` of `V(x)`; gradients are analytic.
#[derive(Debug, Clone)]
pub struct AdiabaticSurface<P> {
    pub potential: P,
    pub index: usize,
}

impl<P: MatrixPotential> AdiabaticSurface<P> {
    pub fn new(potential: P, index: usize) -> Result<Self> {
        if index >= potential.dim() {
            return Err(Error::invalid("surface", "index exceeds the electronic dimension"));
        }
        Ok(AdiabaticSurface { potential, index })
    }
}

impl<P: MatrixPotential> Surface for AdiabaticSurface<P> {
    fn index(&self) -> usize {
        self.index
    }

    fn energy(&self, x: &[Vec3]) -> Result<f64> {
        if self.potential.dim() == 1 {
            return Ok(self.potential.eval(x)[(0, 0)]);
        }
        Ok(eigendecompose(&self.potential.eval(x))?.lambdas[self.index])
    }

    fn gradient(&self, x: &[Vec3]) -> Result<Vec<Vec3>> {
        let eig = eigendecompose(&self.potential.eval(x))?;
        Ok(surface_gradient(&self.potential, x, &eig, self.index))
    }

    fn partition(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        if self.potential.dim() == 1 {
            return Ok((0..x.len()).map(|n| self.potential.eval_part(x, n)[(0, 0)]).collect());
        }
        let eig = eigendecompose(&self.potential.eval(x))?;
        Ok(surface_partition(&self.potential, x, &eig).per_particle.column(self.index).iter().copied().collect())
    }

    fn partition_gradients(&self, x: &[Vec3]) -> Result<Vec<Vec<Vec3>>> {
        let eig = eigendecompose(&self.potential.eval(x))?;
        per_particle_gradients(&self.potential, x, &eig, self.index)
    }
}

/// Mass-corrected surface `λ̄_j`; gradients by central differences.
#[derive(Debug, Clone)]
pub struct CorrectedSurface<P> {
    pub potential: P,
    pub index: usize,
    pub mass: f64,
    pub options: SolverOptions,
    pub h: f64,
}

impl<P: MatrixPotential> CorrectedSurface<P> {
    pub fn new(potential: P, index: usize, mass: f64) -> Result<Self> {
        if index >= potential.dim() {
            return Err(Error::invalid("surface", "index exceeds the electronic dimension"));
        }
        let options = SolverOptions::default();
        if !(mass >= options.mass_min) {
            return Err(Error::invalid("mass", alloc::format!("must be at least {}", options.mass_min)));
        }
        Ok(CorrectedSurface { potential, index, mass, options, h: FD_STEP })
    }
}

impl<P: MatrixPotential> Surface for CorrectedSurface<P> {
    fn index(&self) -> usize {
        self.index
    }

    fn energy(&self, x: &[Vec3]) -> Result<f64> {
        Ok(solve_with(&self.potential, x, self.mass, &self.options)?.lambdas_bar[self.index])
    }

    fn gradient(&self, x: &[Vec3]) -> Result<Vec<Vec3>> {
        Ok(fd_jacobian(x, self.h, |z| Ok(alloc::vec![self.energy(z)?]))?.remove(0))
    }

    fn partition(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        let cs = solve_with(&self.potential, x, self.mass, &self.options)?;
        Ok(cs.per_particle_bar.column(self.index).iter().copied().collect())
    }

    fn partition_gradients(&self, x: &[Vec3]) -> Result<Vec<Vec<Vec3>>> {
        fd_jacobian(x, self.h, |z| self.partition(z))
    }
}

/// Wraps a surface and replaces its gradients by central differences.
#[derive(Debug, Clone)]
pub struct FiniteDifferenceSurface<S> {
    pub inner: S,
    pub h: f64,
}

impl<S: Surface> FiniteDifferenceSurface<S> {
    pub fn new(inner: S) -> Self {
        FiniteDifferenceSurface { inner, h: FD_STEP }
    }
}

impl<S: Surface> Surface for FiniteDifferenceSurface<S> {
    fn index(&self) -> usize {
        self.inner.index()
    }
    fn energy(&self, x: &[Vec3]) -> Result<f64> {
        self.inner.energy(x)
    }
    fn gradient(&self, x: &[Vec3]) -> Result<Vec<Vec3>> {
        Ok(fd_jacobian(x, self.h, |z| Ok(alloc::vec![self.inner.energy(z)?]))?.remove(0))
    }
    fn partition(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        self.inner.partition(x)
    }
    fn partition_gradients(&self, x: &[Vec3]) -> Result<Vec<Vec<Vec3>>> {
        fd_jacobian(x, self.h, |z| self.inner.partition(z))
    }
}

/// `−∇λ_j(x)`.
pub fn force(surface: &dyn Surface, x: &[Vec3]) -> Result<Vec<Vec3>> {
    Ok(surface.gradient(x)?.into_iter().map(|g| -g).collect())
}

/// Masses used for the kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassMode {
    /// Each particle moves with its own mass.
    #[default]
    Physical,
    /// Every mass is 1 (time measured in `M^{-1/2}` units).
    Scaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<Vec3>,
    pub p: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub surface: usize,
    pub time: f64,
}

impl PhaseState {
    pub fn new(x: Vec<Vec3>, p: Vec<Vec3>, masses: Vec<f64>, surface: usize) -> Result<Self> {
        if x.len() != p.len() || x.len() != masses.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} positions, {} momenta, {} masses",
                x.len(),
                p.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid("masses", "must be positive"));
        }
        Ok(PhaseState { x, p, masses, surface, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn effective_mass(&self, n: usize, mode: MassMode) -> f64 {
        match mode {
            MassMode::Physical => self.masses[n],
            MassMode::Scaled => 1.0,
        }
    }

    pub fn kinetic_energy(&self, mode: MassMode) -> f64 {
        (0..self.len()).map(|n| self.p[n].norm_squared() / (2.0 * self.effective_mass(n, mode))).sum()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.p.iter().sum()
    }

    pub fn angular_momentum(&self) -> Vec3 {
        self.x.iter().zip(&self.p).map(|(x, p)| x.cross(p)).sum()
    }

    /// Momenta reversed.
    pub fn reversed(&self) -> Self {
        PhaseState { p: self.p.iter().map(|p| -p).collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<PhaseState>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    /// `max |E − E₀| / |E₀|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / scale
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub mode: MassMode,
    /// Keep every `record_every`-th state (the final state is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { mode: MassMode::Physical, record_every: 1 }
    }
}

/// One velocity-Verlet step. `f` is the force at `state.x` and is replaced
/// by the force at the new positions.
pub fn verlet_step(
    state: &mut PhaseState,
    f: &mut Vec<Vec3>,
    dt: f64,
    surface: &dyn Surface,
    mode: MassMode,
) -> Result<()> {
    for n in 0..state.len() {
        state.p[n] += f[n] * (0.5 * dt);
        let m = state.effective_mass(n, mode);
        state.x[n] += state.p[n] * (dt / m);
    }
    *f = force(surface, &state.x)?;
    for n in 0..state.len() {
        state.p[n] += f[n] * (0.5 * dt);
    }
    state.time += dt;
    Ok(())
}

pub fn integrate(initial: &PhaseState, dt: f64, steps: usize, surface: &dyn Surface) -> Result<Trajectory> {
    integrate_with(initial, dt, steps, surface, &IntegrateOptions::default())
}

pub fn integrate_with(
    initial: &PhaseState,
    dt: f64,
    steps: usize,
    surface: &dyn Surface,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if initial.surface != surface.index() {
        return Err(Error::invalid("surface", "state and surface provider disagree"));
    }
    let stride = opts.record_every.max(1);
    let mut state = initial.clone();
    let mut f = force(surface, &state.x)?;
    let energy = |s: &PhaseState| -> Result<f64> { Ok(s.kinetic_energy(opts.mode) + surface.energy(&s.x)?) };
    let mut states = alloc::vec![state.clone()];
    let mut energies = alloc::vec![energy(&state)?];
    for step in 1..=steps {
        verlet_step(&mut state, &mut f, dt, surface, opts.mode)?;
        let bad = state.x.iter().chain(&state.p).any(|v| v.iter().any(|c| !c.is_finite() || c.abs() > BLOW_UP));
        if bad {
            return Err(Error::BlowUp { step });
        }
        if step % stride == 0 || step == steps {
            energies.push(energy(&state)?);
            states.push(state.clone());
        }
    }
    Ok(Trajectory { dt, states, energies })
}
