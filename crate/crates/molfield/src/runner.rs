//! Parallel drivers over trajectories, samples and probes.
//!
//! Every map collects in input order and every reduction runs sequentially
//! afterwards, so results do not depend on the number of workers.

use molfield_core::conservation::{
    canonical_probe, trajectory_probe, ResidualMode, ResidualReport, StencilEnsemble, TimeStencil,
};
use molfield_core::dynamics::{integrate_with, IntegrateOptions, MassMode, PhaseState, Surface};
use molfield_core::ensemble::{derive_seed, GibbsProblem, GibbsSpec, SampleSet};
use molfield_core::fields::{field_at, Frame, ProbeGrid, SurfaceEnsemble};
use molfield_core::mollifier::Mollifier;
use molfield_core::{Error, Result, Vec3};
use rayon::prelude::*;

/// Advances every state by `steps` Verlet steps of size `dt`.
pub fn evolve(states: &[PhaseState], dt: f64, steps: usize, surface: &dyn Surface) -> Result<Vec<PhaseState>> {
    if steps == 0 {
        return Ok(states.to_vec());
    }
    let opts = IntegrateOptions { mode: MassMode::Physical, record_every: steps };
    states.par_iter().map(|s| Ok(integrate_with(s, dt, steps, surface, &opts)?.last().clone())).collect()
}

pub fn frames(states: &[PhaseState], surface: &dyn Surface) -> Result<Vec<Frame>> {
    states.par_iter().map(|s| Frame::new(s.clone(), surface)).collect()
}

pub fn stencils(states: &[PhaseState], surface: &dyn Surface, h: f64) -> Result<Vec<TimeStencil>> {
    states.par_iter().map(|s| TimeStencil::new(s, surface, h)).collect()
}

/// Per-trajectory balances of one state.
pub fn trajectory_report(
    state: &PhaseState,
    surface: &dyn Surface,
    m: &Mollifier,
    probes: &[Vec3],
    h: f64,
) -> Result<ResidualReport> {
    let stencil = TimeStencil::new(state, surface, h)?;
    let rows = probes.par_iter().map(|y| trajectory_probe(&stencil, m, y)).collect();
    Ok(ResidualReport::from_probes(ResidualMode::PerTrajectory, h, rows))
}

/// Bulk-velocity balances of weighted ensembles, one per surface.
pub fn canonical_report(
    ensembles: &[(f64, &[PhaseState], &dyn Surface)],
    m: &Mollifier,
    probes: &[Vec3],
    h: f64,
) -> Result<ResidualReport> {
    let built: Vec<Vec<TimeStencil>> =
        ensembles.iter().map(|(_, states, surface)| stencils(states, *surface, h)).collect::<Result<_>>()?;
    let views: Vec<StencilEnsemble<'_>> =
        ensembles.iter().zip(&built).map(|((w, _, _), s)| StencilEnsemble { weight: *w, stencils: s }).collect();
    canonical_report_stencils(&views, m, probes, h)
}

/// Canonical balances from prebuilt stencils.
pub fn canonical_report_stencils(
    views: &[StencilEnsemble<'_>],
    m: &Mollifier,
    probes: &[Vec3],
    h: f64,
) -> Result<ResidualReport> {
    let rows = probes.par_iter().map(|y| canonical_probe(views, m, y)).collect::<Result<_>>()?;
    Ok(ResidualReport::from_probes(ResidualMode::Canonical, h, rows))
}

/// Canonical fields at every probe; vacuum probes are `None`.
pub fn field_grid(ensembles: &[SurfaceEnsemble<'_>], m: &Mollifier, probes: &[Vec3]) -> Result<ProbeGrid> {
    let first = ensembles
        .iter()
        .find_map(|e| e.frames.first())
        .ok_or_else(|| Error::InvalidParameter { name: "ensembles", reason: "no frames".into() })?;
    let samples = probes.par_iter().map(|y| field_at(ensembles, m, y)).collect::<Result<Vec<_>>>()?;
    Ok(ProbeGrid {
        time: first.state.time,
        weights: ensembles.iter().map(|e| e.weight).collect(),
        points: probes.to_vec(),
        samples,
    })
}

/// One chain per surface with `counts[j]` samples and seed
/// `derive_seed(seed, 0, j)`.
pub fn sample_surfaces(problem: &GibbsProblem<'_>, spec: &GibbsSpec, counts: &[usize], seed: u64) -> Result<Vec<SampleSet>> {
    counts
        .par_iter()
        .enumerate()
        .map(|(j, n)| problem.sample_surface(spec, j, *n, derive_seed(seed, 0, j as u64)))
        .collect()
}
