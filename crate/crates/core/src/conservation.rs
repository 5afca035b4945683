//! Residuals of the mass, momentum and energy balances at probe points.
//!
//! Time derivatives are central differences of field values at `τ ± h`,
//! where the shifted states come from one velocity-Verlet step of `±h`.
//! Divergences come from the analytic probe gradients of the fluxes.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dual::{divergence, divergence_rows, DualVec};
use crate::dynamics::{force, verlet_step, MassMode, PhaseState, Surface};
use crate::fields::{
    canonical_sample, instantaneous_density, trajectory_fields, velocity_field, weighted_mean, Frame,
    SurfaceEnsemble, RHO_FLOOR,
};
use crate::mollifier::Mollifier;
use crate::{Error, Result, Vec3};

/// A state at `τ` and its Verlet images at `τ ± h` and `τ ± h/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStencil {
    pub center: Frame,
    /// `[τ + h, τ + h/2]`
    pub plus: [Frame; 2],
    /// `[τ − h, τ − h/2]`
    pub minus: [Frame; 2],
    pub h: f64,
}

impl TimeStencil {
    pub fn new(state: &PhaseState, surface: &dyn Surface, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("dt_check", "must be positive"));
        }
        let f0 = force(surface, &state.x)?;
        let shifted = |dt: f64| -> Result<Frame> {
            let mut s = state.clone();
            let mut f = f0.clone();
            verlet_step(&mut s, &mut f, dt, surface, MassMode::Physical)?;
            Frame::densities_only(s, surface)
        };
        Ok(TimeStencil {
            center: Frame::new(state.clone(), surface)?,
            plus: [shifted(h)?, shifted(0.5 * h)?],
            minus: [shifted(-h)?, shifted(-0.5 * h)?],
            h,
        })
    }

    /// `(ρ, ρu, E)` time derivatives at `y` for step `h` (`level` 0) or
    /// `h/2` (`level` 1).
    fn time_derivative(&self, m: &Mollifier, y: &Vec3, level: usize) -> [f64; 5] {
        let step = if level == 0 { self.h } else { 0.5 * self.h };
        let (rp, mp, ep) = instantaneous_density(&self.plus[level], m, y);
        let (rm, mm, em) = instantaneous_density(&self.minus[level], m, y);
        let d = |a: f64, b: f64| (a - b) / (2.0 * step);
        [
            d(rp.value, rm.value),
            d(mp[0].value, mm[0].value),
            d(mp[1].value, mm[1].value),
            d(mp[2].value, mm[2].value),
            d(ep.value, em.value),
        ]
    }
}

/// Mass, momentum and energy values of one probe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LawValues {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

impl LawValues {
    fn from_array(a: [f64; 5]) -> Self {
        LawValues { mass: a[0], momentum: Vec3::new(a[1], a[2], a[3]), energy: a[4] }
    }

    fn norms(&self) -> [f64; 3] {
        [self.mass.abs(), self.momentum.norm(), self.energy.abs()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResidual {
    pub point: Vec3,
    /// Vacuum probe, excluded from all norms.
    pub masked: bool,
    /// Residual with step `h`.
    pub residual: LawValues,
    /// Residual with step `h/2`.
    pub residual_half: LawValues,
    /// Largest balancing term per law (time derivative or divergence).
    pub magnitude: [f64; 3],
    /// Monte Carlo standard error of the residual (ensemble mode).
    pub stderr: Option<LawValues>,
}

impl ProbeResidual {
    fn masked(point: Vec3) -> Self {
        ProbeResidual {
            point,
            masked: true,
            residual: LawValues::default(),
            residual_half: LawValues::default(),
            magnitude: [0.0; 3],
            stderr: None,
        }
    }

    /// Largest `|residual| / stderr` over the five components.
    pub fn stderr_ratio(&self) -> Option<f64> {
        let se = self.stderr?;
        let r = &self.residual;
        let pairs = [
            (r.mass, se.mass),
            (r.momentum[0], se.momentum[0]),
            (r.momentum[1], se.momentum[1]),
            (r.momentum[2], se.momentum[2]),
            (r.energy, se.energy),
        ];
        Some(pairs.iter().map(|(v, s)| if *v == 0.0 { 0.0 } else { v.abs() / s }).fold(0.0, f64::max))
    }
}

fn split(a: [f64; 5], b: [f64; 5]) -> [f64; 3] {
    let m = Vec3::new(a[1], a[2], a[3]).norm().max(Vec3::new(b[1], b[2], b[3]).norm());
    [a[0].abs().max(b[0].abs()), m, a[4].abs().max(b[4].abs())]
}

fn add(a: [f64; 5], b: [f64; 5]) -> [f64; 5] {
    core::array::from_fn(|i| a[i] + b[i])
}

/// Residual of a single trajectory at `y`.
pub fn trajectory_probe(stencil: &TimeStencil, m: &Mollifier, y: &Vec3) -> ProbeResidual {
    let f = trajectory_fields(&stencil.center, m, y);
    if f.rho.value < RHO_FLOOR {
        return ProbeResidual::masked(*y);
    }
    let div_mom = divergence_rows(&f.momentum_flux());
    let div = [
        divergence(&f.mom),
        div_mom[0],
        div_mom[1],
        div_mom[2],
        divergence(&f.energy_flux),
    ];
    let dt0 = stencil.time_derivative(m, y, 0);
    let dt1 = stencil.time_derivative(m, y, 1);
    ProbeResidual {
        point: *y,
        masked: false,
        residual: LawValues::from_array(add(dt0, div)),
        residual_half: LawValues::from_array(add(dt1, div)),
        magnitude: split(dt0, div),
        stderr: None,
    }
}

/// Stencils of one electronic surface together with its probability.
#[derive(Debug, Clone, Copy)]
pub struct StencilEnsemble<'a> {
    pub weight: f64,
    pub stencils: &'a [TimeStencil],
}

/// Residual of the bulk-velocity form of the balances at `y`, averaged over
/// weighted ensembles.
pub fn canonical_probe(ensembles: &[StencilEnsemble<'_>], m: &Mollifier, y: &Vec3) -> Result<ProbeResidual> {
    let centers: Vec<Vec<Frame>> =
        ensembles.iter().map(|e| e.stencils.iter().map(|s| s.center.clone()).collect()).collect();
    let surf: Vec<SurfaceEnsemble<'_>> = ensembles
        .iter()
        .zip(&centers)
        .map(|(e, c)| SurfaceEnsemble { weight: e.weight, frames: c })
        .collect();
    let u: DualVec = match velocity_field(&surf, m, y) {
        Ok(u) => u,
        Err(Error::VacuumProbe { .. }) => return Ok(ProbeResidual::masked(*y)),
        Err(e) => return Err(e),
    };
    // per-sample time derivatives (two levels) and divergences
    let mut dts: Vec<Vec<([f64; 5], [f64; 5])>> = Vec::new();
    let mut divs: Vec<Vec<[f64; 5]>> = Vec::new();
    for e in ensembles {
        let mut dt_e = Vec::with_capacity(e.stencils.len());
        let mut div_e = Vec::with_capacity(e.stencils.len());
        for s in e.stencils {
            dt_e.push((s.time_derivative(m, y, 0), s.time_derivative(m, y, 1)));
            let c = canonical_sample(&s.center, m, y, &u);
            let dm = divergence_rows(&c.momentum_flux(&u));
            div_e.push([divergence(&c.mom), dm[0], dm[1], dm[2], divergence(&c.energy_flux(&u))]);
        }
        dts.push(dt_e);
        divs.push(div_e);
    }
    let sizes: Vec<(f64, usize)> = ensembles.iter().map(|e| (e.weight, e.stencils.len())).collect();
    let mut dt0 = [0.0; 5];
    let mut dt1 = [0.0; 5];
    let mut div = [0.0; 5];
    let mut se = [0.0; 5];
    for k in 0..5 {
        let (a, sa) = weighted_mean(&sizes, |j, s| dts[j][s].0[k]);
        let (b, _) = weighted_mean(&sizes, |j, s| dts[j][s].1[k]);
        let (c, sc) = weighted_mean(&sizes, |j, s| divs[j][s][k]);
        dt0[k] = a;
        dt1[k] = b;
        div[k] = c;
        se[k] = (sa * sa + sc * sc).sqrt();
    }
    Ok(ProbeResidual {
        point: *y,
        masked: false,
        residual: LawValues::from_array(add(dt0, div)),
        residual_half: LawValues::from_array(add(dt1, div)),
        magnitude: split(dt0, div),
        stderr: Some(LawValues::from_array(se)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    PerTrajectory,
    Canonical,
}

/// Norms of one law over unmasked probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawNorm {
    pub max: f64,
    pub rms: f64,
    pub max_half: f64,
    /// Largest balancing term over probes.
    pub scale: f64,
    /// `log₂(max / max_half)`
    pub order: f64,
}

impl LawNorm {
    /// `max / scale`, zero when the scale vanishes.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max / self.scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub mode: ResidualMode,
    pub dt_check: f64,
    pub probes: Vec<ProbeResidual>,
    pub mass: LawNorm,
    pub momentum: LawNorm,
    pub energy: LawNorm,
    pub masked: usize,
}

impl ResidualReport {
    pub fn from_probes(mode: ResidualMode, dt_check: f64, probes: Vec<ProbeResidual>) -> Self {
        let live: Vec<&ProbeResidual> = probes.iter().filter(|p| !p.masked).collect();
        let law = |k: usize| {
            let vals: Vec<f64> = live.iter().map(|p| p.residual.norms()[k]).collect();
            let max = vals.iter().copied().fold(0.0, f64::max);
            let rms = if vals.is_empty() {
                0.0
            } else {
                (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt()
            };
            let max_half = live.iter().map(|p| p.residual_half.norms()[k]).fold(0.0, f64::max);
            let scale = live.iter().map(|p| p.magnitude[k]).fold(0.0, f64::max);
            LawNorm { max, rms, max_half, scale, order: (max / max_half).log2() }
        };
        let (mass, momentum, energy) = (law(0), law(1), law(2));
        let masked = probes.len() - live.len();
        ResidualReport { mode, dt_check, probes, mass, momentum, energy, masked }
    }

    /// Largest relative residual over the three laws.
    pub fn max_relative(&self) -> f64 {
        self.mass.relative().max(self.momentum.relative()).max(self.energy.relative())
    }

    /// Largest `|residual| / stderr` over unmasked probes.
    pub fn max_stderr_ratio(&self) -> Option<f64> {
        self.probes.iter().filter(|p| !p.masked).map(|p| p.stderr_ratio()).try_fold(0.0, |m: f64, r| Some(m.max(r?)))
    }
}

/// Per-trajectory balances of `state` on `surface`.
pub fn trajectory_residuals(
    state: &PhaseState,
    surface: &dyn Surface,
    m: &Mollifier,
    probes: &[Vec3],
    dt_check: f64,
) -> Result<ResidualReport> {
    let stencil = TimeStencil::new(state, surface, dt_check)?;
    let rows = probes.iter().map(|y| trajectory_probe(&stencil, m, y)).collect();
    Ok(ResidualReport::from_probes(ResidualMode::PerTrajectory, dt_check, rows))
}

/// Bulk-velocity balances of weighted ensembles, one per surface.
pub fn canonical_residuals(
    ensembles: &[(f64, &[PhaseState], &dyn Surface)],
    m: &Mollifier,
    probes: &[Vec3],
    dt_check: f64,
) -> Result<ResidualReport> {
    let stencils: Vec<Vec<TimeStencil>> = ensembles
        .iter()
        .map(|(_, states, surface)| states.iter().map(|s| TimeStencil::new(s, *surface, dt_check)).collect())
        .collect::<Result<_>>()?;
    let views: Vec<StencilEnsemble<'_>> =
        ensembles.iter().zip(&stencils).map(|((w, _, _), s)| StencilEnsemble { weight: *w, stencils: s }).collect();
    let rows = probes.iter().map(|y| canonical_probe(&views, m, y)).collect::<Result<_>>()?;
    Ok(ResidualReport::from_probes(ResidualMode::Canonical, dt_check, rows))
}
