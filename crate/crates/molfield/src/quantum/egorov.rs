//! Quantum expectations against the classical flow on a (corrected)
//! adiabatic surface, as a function of the nuclear mass.

use molfield_core::dynamics::{
    integrate_with, AdiabaticSurface, CorrectedSurface, IntegrateOptions, MassMode, PhaseState, Surface,
};
use molfield_core::potential::{eigendecompose, ExternalFieldModel, MatrixPotential};
use molfield_core::quadrature::GaussHermite;
use molfield_core::{Error, Result, Vec3};
use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{coherent_packet, propagate, GridPotential, QuantumGrid, Spinor, Symbol, SymbolPath, WeylApplier};

/// Coherent packet centred at `(x0, p0)`; `weight` is its share of the
/// packet mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub x0: f64,
    pub p0: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EgorovCheck {
    /// Passes when the log-log slope of the error against `M` is ≤ `limit`.
    Slope { limit: f64 },
    /// Passes when every error is ≤ `tolerance`.
    Absolute { tolerance: f64 },
    /// Always passes; the report is diagnostic.
    Report,
}

/// One nuclear coordinate along the first axis; `model` must depend on
/// that axis only.
#[derive(Debug, Clone, PartialEq)]
pub struct EgorovSetup {
    pub model: ExternalFieldModel,
    pub surface: usize,
    pub observable: Symbol,
    pub packets: Vec<Packet>,
    pub tau: f64,
    pub n_points: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: f64,
    pub classical_dt: f64,
    pub hermite_nodes: usize,
    pub check: EgorovCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgorovRow {
    pub mass: f64,
    pub hbar: f64,
    pub quantum: f64,
    /// Classical value averaged over the initial Wigner function.
    pub classical: f64,
    pub error: f64,
    /// Norm outside surface `j` at `τ`.
    pub off_surface: f64,
    pub norm_drift: f64,
    /// `dt·max|V|/ħ`.
    pub phase_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgorovReport {
    pub rows: Vec<EgorovRow>,
    /// Least-squares slope of `ln error` against `ln M`.
    pub slope: Option<f64>,
    pub check: EgorovCheck,
    pub pass: bool,
    pub surface: usize,
    pub tau: f64,
    pub n_points: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: f64,
    pub classical_dt: f64,
    pub hermite_nodes: usize,
}

impl EgorovSetup {
    fn validate(&self, masses: &[f64]) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(1..=2).contains(&self.model.dim()) {
            return bad("model", "need d ∈ {1, 2}");
        }
        if self.surface >= self.model.dim() {
            return bad("surface", "index exceeds the electronic dimension");
        }
        if self.packets.is_empty() || self.packets.iter().any(|p| !(p.weight > 0.0)) {
            return bad("packets", "need at least one packet with positive weight");
        }
        if !(self.tau >= 0.0) || !(self.dt > 0.0) || !(self.classical_dt > 0.0) {
            return bad("tau", "tau must be nonnegative and both steps positive");
        }
        if self.hermite_nodes == 0 {
            return bad("hermite_nodes", "must be positive");
        }
        if masses.is_empty() || masses.iter().any(|m| !(*m > 0.0)) {
            return bad("masses", "need positive masses");
        }
        self.observable.validate()
    }
}

/// Eigenvector `Ψ_j(x)` at each grid point, signs continued along the grid.
fn surface_frame(grid: &QuantumGrid, model: &ExternalFieldModel, j: usize) -> Result<Vec<Vec<f64>>> {
    let d = model.dim();
    if d == 1 {
        return Ok(vec![vec![1.0]; grid.n_points()]);
    }
    let mut prev: Option<DMatrix<f64>> = None;
    let mut out = Vec::with_capacity(grid.n_points());
    for x in grid.xs() {
        let mut eig = eigendecompose(&model.eval(&[Vec3::new(x, 0.0, 0.0)]))?;
        if let Some(p) = &prev {
            eig.align_to(p);
        }
        out.push(eig.psi.column(j).iter().copied().collect());
        prev = Some(eig.psi);
    }
    Ok(out)
}

struct PacketResult {
    quantum: f64,
    off_surface: f64,
    norm_drift: f64,
}

fn quantum_packet(
    setup: &EgorovSetup,
    grid: &QuantumGrid,
    potential: &GridPotential,
    frame: &[Vec<f64>],
    observable: &WeylApplier,
    packet: &Packet,
) -> Result<PacketResult> {
    let d = setup.model.dim();
    let n = grid.n_points();
    let g = coherent_packet(grid, packet.x0, packet.p0);
    let mut psi = Spinor::zeros(d, n);
    for c in 0..d {
        let comp = psi.component_mut(c);
        for i in 0..n {
            comp[i] = g[i] * frame[i][c];
        }
    }
    psi.normalize(grid)?;
    let out = propagate(grid, potential, &psi, setup.tau, setup.dt)?;
    let quantum = (0..d).map(|c| observable.expectation(out.component(c)).re).sum();
    let on: f64 = (0..n)
        .map(|i| (0..d).map(|c| out.component(c)[i] * frame[i][c]).sum::<Complex64>().norm_sqr())
        .sum::<f64>()
        * grid.spacing();
    let norm = out.norm(grid);
    Ok(PacketResult { quantum, off_surface: (norm * norm - on).max(0.0), norm_drift: (norm - 1.0).abs() })
}

/// `A(z_τ)` averaged over the Wigner function of the packet, whose
/// position and momentum are independent `N(·, ħ/2)`.
fn classical_packet(setup: &EgorovSetup, surface: &dyn Surface, hbar: f64, packet: &Packet) -> Result<f64> {
    let gh = GaussHermite::new(setup.hermite_nodes);
    let sd = (hbar / 2.0).sqrt();
    let s = std::f64::consts::SQRT_2 * sd;
    let nodes: Vec<(f64, f64, f64)> = gh
        .nodes
        .iter()
        .zip(&gh.weights)
        .flat_map(|(xa, wa)| {
            gh.nodes.iter().zip(&gh.weights).map(move |(xb, wb)| {
                (packet.x0 + s * xa, packet.p0 + s * xb, wa * wb / std::f64::consts::PI)
            })
        })
        .collect();
    let steps = (setup.tau / setup.classical_dt).ceil() as usize;
    let values = nodes
        .par_iter()
        .map(|&(x, p, w)| -> Result<f64> {
            if steps == 0 {
                return Ok(w * setup.observable.eval(x, p));
            }
            let st = PhaseState::new(vec![Vec3::new(x, 0.0, 0.0)], vec![Vec3::new(p, 0.0, 0.0)], vec![1.0], setup.surface)?;
            let opts = IntegrateOptions { mode: MassMode::Scaled, record_every: steps };
            let traj = integrate_with(&st, setup.tau / steps as f64, steps, surface, &opts)?;
            let end = traj.last();
            Ok(w * setup.observable.eval(end.x[0][0], end.p[0][0]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum())
}

fn run_mass(setup: &EgorovSetup, mass: f64) -> Result<EgorovRow> {
    let grid = QuantumGrid::new(setup.n_points, setup.lo, setup.hi, mass)?;
    let potential = GridPotential::from_model(&grid, &setup.model);
    let frame = surface_frame(&grid, &setup.model, setup.surface)?;
    let observable = WeylApplier::new(&grid, &setup.observable, SymbolPath::Standard)?;
    let surface: Box<dyn Surface> = if setup.model.dim() == 1 {
        Box::new(AdiabaticSurface::new(setup.model.clone(), setup.surface)?)
    } else {
        Box::new(CorrectedSurface::new(setup.model.clone(), setup.surface, mass)?)
    };
    let results = setup
        .packets
        .par_iter()
        .map(|p| -> Result<(PacketResult, f64)> {
            let (q, c) = rayon::join(
                || quantum_packet(setup, &grid, &potential, &frame, &observable, p),
                || classical_packet(setup, surface.as_ref(), grid.hbar(), p),
            );
            Ok((q?, c?))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = setup.packets.iter().map(|p| p.weight).sum();
    let (mut quantum, mut classical, mut off_surface, mut norm_drift) = (0.0, 0.0, 0.0, 0.0f64);
    for (p, (q, c)) in setup.packets.iter().zip(&results) {
        let w = p.weight / total;
        quantum += w * q.quantum;
        classical += w * c;
        off_surface += w * q.off_surface;
        norm_drift = norm_drift.max(q.norm_drift);
    }
    Ok(EgorovRow {
        mass,
        hbar: grid.hbar(),
        quantum,
        classical,
        error: (quantum - classical).abs(),
        off_surface,
        norm_drift,
        phase_per_step: setup.dt * potential.max_abs() / grid.hbar(),
    })
}

fn loglog_slope(rows: &[EgorovRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.error > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.mass.ln(), r.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Quantum against Wigner-averaged classical expectations at each mass.
pub fn egorov_test(setup: &EgorovSetup, masses: &[f64]) -> Result<EgorovReport> {
    setup.validate(masses)?;
    let rows = masses.par_iter().map(|m| run_mass(setup, *m)).collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(&rows);
    let pass = match setup.check {
        EgorovCheck::Slope { limit } => slope.is_some_and(|s| s <= limit),
        EgorovCheck::Absolute { tolerance } => rows.iter().all(|r| r.error <= tolerance),
        EgorovCheck::Report => true,
    };
    Ok(EgorovReport {
        rows,
        slope,
        check: setup.check,
        pass,
        surface: setup.surface,
        tau: setup.tau,
        n_points: setup.n_points,
        lo: setup.lo,
        hi: setup.hi,
        dt: setup.dt,
        classical_dt: setup.classical_dt,
        hermite_nodes: setup.hermite_nodes,
    })
}
