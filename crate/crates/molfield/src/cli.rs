//! Subcommands: configuration in, stamped artifacts out.

use std::path::{Path, PathBuf};

use molfield_core::conservation::ResidualReport;
use molfield_core::dynamics::{integrate_with, IntegrateOptions, MassMode, PhaseState, Surface};
use molfield_core::ensemble::{GibbsProblem, GibbsSpec, MatchOptions, SurfaceWeights, ThermoEstimate, ThermoTargets};
use molfield_core::fields::{Frame, ProbeGrid, SurfaceEnsemble};
use molfield_core::mollifier::Mollifier;
use molfield_core::Vec3;
use serde::Serialize;

use crate::config::{ConfigError, ConservationMode, LoadedConfig, RunConfig};
use crate::io::{num, write_csv, write_json, Provenance};
use crate::quantum::{commutator_check, egorov_test, CommutatorReport, QuantumGrid};
use crate::runner;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RunMd,
    Fields,
    ConserveCheck,
    GibbsFit,
    Egorov,
    CommutatorCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RunMd => "run-md",
            Command::Fields => "fields",
            Command::ConserveCheck => "conserve-check",
            Command::GibbsFit => "gibbs-fit",
            Command::Egorov => "egorov",
            Command::CommutatorCheck => "commutator-check",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Physics(#[from] molfield_core::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for configuration and parameter errors, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Physics(molfield_core::Error::InvalidParameter { .. }) => 2,
            _ => 3,
        }
    }
}

/// Result of a completed run; `pass == false` maps to exit code 1.
#[derive(Debug, Clone)]
pub struct Summary {
    pub pass: bool,
    pub message: String,
    pub files: Vec<PathBuf>,
}

/// Runs `command` and writes its artifacts into `out_dir`.
pub fn execute(command: Command, loaded: &LoadedConfig, out_dir: &Path) -> Result<Summary, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let prov = Provenance {
        command: command.name().into(),
        config_sha256: loaded.sha256.clone(),
        seed: loaded.config.seed,
    };
    let cfg = &loaded.config;
    match command {
        Command::RunMd => run_md(cfg, &prov, out_dir),
        Command::Fields => fields(cfg, &prov, out_dir),
        Command::ConserveCheck => conserve_check(cfg, &prov, out_dir),
        Command::GibbsFit => gibbs_fit(cfg, &prov, out_dir),
        Command::Egorov => egorov(cfg, &prov, out_dir),
        Command::CommutatorCheck => commutator(cfg, &prov, out_dir),
    }
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn run_md(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let dynamics = cfg.require_dynamics()?;
    let surface = cfg.surface(dynamics.surface)?;
    let initial = cfg.initial_state()?;
    let opts = IntegrateOptions { mode: MassMode::Physical, record_every: dynamics.record_every };
    let traj = integrate_with(&initial, dynamics.dt, dynamics.steps, surface.as_ref(), &opts)?;
    let mut rows = Vec::new();
    for (k, (s, e)) in traj.states.iter().zip(&traj.energies).enumerate() {
        for n in 0..s.len() {
            rows.push(vec![
                (k * dynamics.record_every).min(dynamics.steps).to_string(),
                num(s.time),
                n.to_string(),
                s.surface.to_string(),
                num(s.x[n][0]),
                num(s.x[n][1]),
                num(s.x[n][2]),
                num(s.p[n][0]),
                num(s.p[n][1]),
                num(s.p[n][2]),
                num(*e),
            ]);
        }
    }
    let path = dir.join("trajectory.csv");
    write_csv(
        &path,
        prov,
        "time: model time; x: length; p: mass*length/time; energy: total energy of the state",
        &["step", "time", "particle", "surface", "x", "y", "z", "px", "py", "pz", "energy"],
        &rows,
    )?;
    Ok(Summary {
        pass: true,
        message: format!("{} frames, relative energy drift {:e}", traj.states.len(), traj.energy_drift()),
        files: vec![path],
    })
}

/// Gibbs ensembles, one per surface, evolved by `dynamics` when present.
#[derive(Debug, Clone)]
pub struct Ensembles {
    pub spec: GibbsSpec,
    pub weights: SurfaceWeights,
    pub states: Vec<Vec<PhaseState>>,
    pub acceptance: Vec<f64>,
}

fn gibbs_spec(cfg: &RunConfig, problem: &GibbsProblem<'_>, m: &Mollifier) -> Result<GibbsSpec, RunError> {
    let ens = cfg.require_ensemble()?;
    let mut spec = GibbsSpec::new(ens.temperature.unwrap_or(1.0), ens.mu.unwrap_or(0.0), m);
    spec.u0 = Vec3::from(ens.u0);
    spec.probe = ens.probe.map(Vec3::from).unwrap_or_else(|| problem.confinement.center());
    spec.mode = cfg.gibbs_mode()?;
    if let Some(f) = ens.eta_floor {
        spec.eta_floor = f;
    }
    match (ens.temperature, ens.mu, &ens.targets) {
        (Some(_), Some(_), _) => Ok(spec),
        (_, _, Some(t)) => {
            let fit = ens.fit.as_ref().ok_or(ConfigError::Missing("ensemble.fit"))?;
            let targets = ThermoTargets { rho: t.rho, rho_u: Vec3::from(t.rho_u), energy: t.energy };
            let opts = MatchOptions {
                n_samples: fit.n_samples,
                seed: cfg.seed,
                rel_tol: fit.rel_tol,
                max_iter: fit.max_iter,
                weight_method: cfg.weight_method()?,
            };
            Ok(problem.match_thermo(&targets, &spec, &opts)?.spec)
        }
        _ => Err(ConfigError::Missing("ensemble.temperature and ensemble.mu, or ensemble.targets").into()),
    }
}

/// Samples `trajectories_per_surface` states on each surface and evolves
/// them; `surfaces` must come from [`all_surfaces`].
pub fn build_ensembles(cfg: &RunConfig, m: &Mollifier, surfaces: &[Box<dyn Surface>]) -> Result<Ensembles, RunError> {
    let ens = cfg.require_ensemble()?;
    let refs: Vec<&dyn Surface> = surfaces.iter().map(|s| s.as_ref()).collect();
    let mut problem = GibbsProblem::new(m, refs, cfg.initial_state()?, cfg.confinement()?)?;
    problem.sampler = cfg.sampler_options()?;
    let spec = gibbs_spec(cfg, &problem, m)?;
    let weights = problem.surface_weights(&spec, &cfg.weight_method()?)?;
    let counts = vec![ens.trajectories_per_surface; surfaces.len()];
    let sets = runner::sample_surfaces(&problem, &spec, &counts, cfg.seed)?;
    let acceptance = sets.iter().map(|s| s.acceptance).collect();
    let mut states = Vec::with_capacity(sets.len());
    for (set, surface) in sets.into_iter().zip(surfaces) {
        states.push(match &cfg.dynamics {
            Some(d) => runner::evolve(&set.states, d.dt, d.steps, surface.as_ref())?,
            None => set.states,
        });
    }
    Ok(Ensembles { spec, weights, states, acceptance })
}

/// Every surface of the configured model.
pub fn all_surfaces(cfg: &RunConfig) -> Result<Vec<Box<dyn Surface>>, RunError> {
    (0..cfg.surface_count()?).map(|j| cfg.surface(j).map_err(RunError::from)).collect()
}

/// The configured state evolved by `dynamics`, on its own surface.
pub fn single_state(cfg: &RunConfig) -> Result<(PhaseState, Box<dyn Surface>), RunError> {
    let initial = cfg.initial_state()?;
    let surface = cfg.surface(initial.surface)?;
    let state = match &cfg.dynamics {
        Some(d) => runner::evolve(std::slice::from_ref(&initial), d.dt, d.steps, surface.as_ref())?.remove(0),
        None => initial,
    };
    Ok((state, surface))
}

fn grid_rows(grid: &ProbeGrid) -> Vec<Vec<String>> {
    grid.points
        .iter()
        .zip(&grid.samples)
        .enumerate()
        .map(|(i, (y, s))| {
            let mut row = vec![i.to_string(), num(grid.time), num(y[0]), num(y[1]), num(y[2])];
            match s {
                None => {
                    row.push("1".into());
                    row.extend(std::iter::repeat_n(String::new(), 30));
                }
                Some(f) => {
                    row.push("0".into());
                    row.push(num(f.rho.value));
                    row.extend(f.mom.iter().map(|d| num(d.value)));
                    row.push(num(f.energy.value));
                    row.extend(f.u.iter().map(|d| num(d.value)));
                    let sigma = f.sigma();
                    row.extend(sigma.iter().flatten().map(|d| num(d.value)));
                    row.extend(f.q.iter().map(|d| num(d.value)));
                    row.push(num(f.stderr.rho));
                    row.extend(f.stderr.mom.iter().map(|v| num(*v)));
                    row.push(num(f.stderr.energy));
                    row.extend(f.stderr.sigma.iter().map(|v| num(*v)));
                    row.extend(f.stderr.q.iter().map(|v| num(*v)));
                }
            }
            row
        })
        .collect()
}

const FIELD_HEADER: [&str; 31] = [
    "probe", "time", "y_x", "y_y", "y_z", "masked", "rho", "mom_x", "mom_y", "mom_z", "energy", "u_x", "u_y", "u_z",
    "sigma_xx", "sigma_xy", "sigma_xz", "sigma_yx", "sigma_yy", "sigma_yz", "sigma_zx", "sigma_zy", "sigma_zz",
    "q_x", "q_y", "q_z", "se_rho", "se_mom_x", "se_mom_y", "se_mom_z", "se_energy",
];

fn field_header() -> Vec<String> {
    let mut h: Vec<String> = FIELD_HEADER.iter().map(|s| s.to_string()).collect();
    // Standard errors of σ in column-major order, then of q.
    for c in ["x", "y", "z"] {
        for r in ["x", "y", "z"] {
            h.push(format!("se_sigma_{r}{c}"));
        }
    }
    h.extend(["se_q_x", "se_q_y", "se_q_z"].map(String::from));
    h
}

fn fields(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let m = cfg.mollifier()?;
    let probes = cfg.probe_points()?;
    let grid = if cfg.ensemble.is_some() {
        let surfaces = all_surfaces(cfg)?;
        let ens = build_ensembles(cfg, &m, &surfaces)?;
        let frames: Vec<Vec<Frame>> = ens
            .states
            .iter()
            .zip(&surfaces)
            .map(|(s, surface)| runner::frames(s, surface.as_ref()))
            .collect::<molfield_core::Result<_>>()?;
        let views: Vec<SurfaceEnsemble<'_>> =
            frames.iter().zip(&ens.weights.q).map(|(f, w)| SurfaceEnsemble { weight: *w, frames: f }).collect();
        runner::field_grid(&views, &m, &probes)?
    } else {
        let (state, surface) = single_state(cfg)?;
        let frames = vec![Frame::new(state, surface.as_ref())?];
        runner::field_grid(&[SurfaceEnsemble { weight: 1.0, frames: &frames }], &m, &probes)?
    };
    let header = field_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = dir.join("fields.csv");
    write_csv(
        &path,
        prov,
        "y: length; rho: mass/length^3; mom: mass/(length^2*time); energy: energy/length^3; u: length/time; \
         sigma: energy/length^3; q: energy/(length^2*time); se_*: standard error of the column; masked=1 marks vacuum probes",
        &header,
        &grid_rows(&grid),
    )?;
    let masked = grid.samples.iter().filter(|s| s.is_none()).count();
    Ok(Summary {
        pass: true,
        message: format!("{} probes, {} masked", grid.points.len(), masked),
        files: vec![path],
    })
}

#[derive(Serialize)]
struct LawJson {
    max: f64,
    rms: f64,
    max_half: f64,
    scale: f64,
    relative: f64,
    order: f64,
}

#[derive(Serialize)]
struct ResidualJson {
    mode: &'static str,
    dt_check: f64,
    tolerance: f64,
    pass: bool,
    probes: usize,
    masked: usize,
    mass: LawJson,
    momentum: LawJson,
    energy: LawJson,
    max_relative: f64,
    max_stderr_ratio: Option<f64>,
    surface_weights: Option<Vec<f64>>,
    sampler_acceptance: Option<Vec<f64>>,
    temperature: Option<f64>,
    mu: Option<f64>,
}

fn law_json(l: &molfield_core::conservation::LawNorm) -> LawJson {
    LawJson { max: l.max, rms: l.rms, max_half: l.max_half, scale: l.scale, relative: l.relative(), order: l.order }
}

fn residual_rows(r: &ResidualReport) -> Vec<Vec<String>> {
    r.probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![i.to_string(), num(p.point[0]), num(p.point[1]), num(p.point[2])];
            row.push(if p.masked { "1" } else { "0" }.into());
            let vals = |l: &molfield_core::conservation::LawValues| {
                vec![num(l.mass), num(l.momentum[0]), num(l.momentum[1]), num(l.momentum[2]), num(l.energy)]
            };
            row.extend(vals(&p.residual));
            row.extend(vals(&p.residual_half));
            row.extend(p.magnitude.iter().map(|v| num(*v)));
            match &p.stderr {
                Some(se) => row.extend(vals(se)),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row
        })
        .collect()
}

fn conserve_check(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let cons = cfg.conservation.as_ref().ok_or(ConfigError::Missing("conservation"))?;
    let m = cfg.mollifier()?;
    let probes = cfg.probe_points()?;
    let (report, tolerance, weights, acceptance, spec) = match cons.mode {
        ConservationMode::PerTrajectory => {
            let (state, surface) = single_state(cfg)?;
            let r = runner::trajectory_report(&state, surface.as_ref(), &m, &probes, cons.dt_check)?;
            (r, cons.tolerance.unwrap_or(1e-6), None, None, None)
        }
        ConservationMode::Canonical => {
            let surfaces = all_surfaces(cfg)?;
            let ens = build_ensembles(cfg, &m, &surfaces)?;
            let views: Vec<(f64, &[PhaseState], &dyn Surface)> = ens
                .weights
                .q
                .iter()
                .zip(&ens.states)
                .zip(&surfaces)
                .map(|((w, s), surface)| (*w, s.as_slice(), surface.as_ref()))
                .collect();
            let r = runner::canonical_report(&views, &m, &probes, cons.dt_check)?;
            (r, cons.tolerance.unwrap_or(5.0), Some(ens.weights.q.clone()), Some(ens.acceptance), Some(ens.spec))
        }
    };
    let live = report.probes.len() - report.masked;
    let stderr_ratio = report.max_stderr_ratio();
    let pass = live > 0
        && match cons.mode {
            ConservationMode::PerTrajectory => report.max_relative() <= tolerance,
            ConservationMode::Canonical => stderr_ratio.is_some_and(|r| r <= tolerance),
        };
    let json = ResidualJson {
        mode: match cons.mode {
            ConservationMode::PerTrajectory => "per_trajectory",
            ConservationMode::Canonical => "canonical",
        },
        dt_check: cons.dt_check,
        tolerance,
        pass,
        probes: report.probes.len(),
        masked: report.masked,
        mass: law_json(&report.mass),
        momentum: law_json(&report.momentum),
        energy: law_json(&report.energy),
        max_relative: report.max_relative(),
        max_stderr_ratio: stderr_ratio,
        surface_weights: weights,
        sampler_acceptance: acceptance,
        temperature: spec.as_ref().map(|s| s.temperature),
        mu: spec.as_ref().map(|s| s.mu),
    };
    let units = "residuals in field units per time; relative = max / scale; stderr ratios are dimensionless";
    let json_path = dir.join("residuals.json");
    write_json(&json_path, prov, units, &json)?;
    let csv_path = dir.join("residuals.csv");
    let mut header = vec!["probe", "y_x", "y_y", "y_z", "masked"];
    header.extend(["r_mass", "r_mom_x", "r_mom_y", "r_mom_z", "r_energy"]);
    header.extend(["r2_mass", "r2_mom_x", "r2_mom_y", "r2_mom_z", "r2_energy"]);
    header.extend(["scale_mass", "scale_mom", "scale_energy"]);
    header.extend(["se_mass", "se_mom_x", "se_mom_y", "se_mom_z", "se_energy"]);
    write_csv(
        &csv_path,
        prov,
        "y: length; r_*: residual at dt_check; r2_*: residual at dt_check/2; scale_*: largest balancing term; se_*: standard error",
        &header,
        &residual_rows(&report),
    )?;
    Ok(Summary {
        pass,
        message: format!(
            "{} probes ({} masked), max relative residual {:e}, max residual/stderr {}",
            report.probes.len(),
            report.masked,
            report.max_relative(),
            stderr_ratio.map_or("n/a".into(), |r| format!("{r:.3}"))
        ),
        files: vec![json_path, csv_path],
    })
}

#[derive(Serialize)]
struct SpecJson {
    temperature: f64,
    mu: f64,
    u0: [f64; 3],
    probe: [f64; 3],
    eta_floor: f64,
    mode: &'static str,
}

#[derive(Serialize)]
struct EstimateJson {
    rho: f64,
    rho_u: [f64; 3],
    energy: f64,
    stderr_rho: f64,
    stderr_rho_u: [f64; 3],
    stderr_energy: f64,
}

#[derive(Serialize)]
struct GibbsJson {
    spec: SpecJson,
    achieved: EstimateJson,
    surface_weights: Vec<f64>,
    surface_weights_stderr: Vec<f64>,
    iterations: usize,
    evaluations: usize,
}

fn estimate_json(e: &ThermoEstimate) -> EstimateJson {
    EstimateJson {
        rho: e.rho,
        rho_u: arr(&e.rho_u),
        energy: e.energy,
        stderr_rho: e.stderr_rho,
        stderr_rho_u: arr(&e.stderr_rho_u),
        stderr_energy: e.stderr_energy,
    }
}

fn gibbs_fit(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let ens = cfg.require_ensemble()?;
    let t = ens.targets.ok_or(ConfigError::Missing("ensemble.targets"))?;
    let fit = ens.fit.as_ref().ok_or(ConfigError::Missing("ensemble.fit"))?;
    let m = cfg.mollifier()?;
    let surfaces = all_surfaces(cfg)?;
    let refs: Vec<&dyn Surface> = surfaces.iter().map(|s| s.as_ref()).collect();
    let mut problem = GibbsProblem::new(&m, refs, cfg.initial_state()?, cfg.confinement()?)?;
    problem.sampler = cfg.sampler_options()?;
    let mut template = GibbsSpec::new(ens.temperature.unwrap_or(1.0), ens.mu.unwrap_or(0.0), &m);
    template.probe = ens.probe.map(Vec3::from).unwrap_or_else(|| problem.confinement.center());
    template.mode = cfg.gibbs_mode()?;
    if let Some(f) = ens.eta_floor {
        template.eta_floor = f;
    }
    let targets = ThermoTargets { rho: t.rho, rho_u: Vec3::from(t.rho_u), energy: t.energy };
    let opts = MatchOptions {
        n_samples: fit.n_samples,
        seed: cfg.seed,
        rel_tol: fit.rel_tol,
        max_iter: fit.max_iter,
        weight_method: cfg.weight_method()?,
    };
    let r = problem.match_thermo(&targets, &template, &opts)?;
    let json = GibbsJson {
        spec: SpecJson {
            temperature: r.spec.temperature,
            mu: r.spec.mu,
            u0: arr(&r.spec.u0),
            probe: arr(&r.spec.probe),
            eta_floor: r.spec.eta_floor,
            mode: match r.spec.mode {
                molfield_core::ensemble::GibbsMode::Uniform => "uniform",
                molfield_core::ensemble::GibbsMode::Local => "local",
            },
        },
        achieved: estimate_json(&r.achieved),
        surface_weights: r.weights.q.clone(),
        surface_weights_stderr: r.weights.stderr.clone(),
        iterations: r.iterations,
        evaluations: r.evaluations,
    };
    let path = dir.join("gibbs.json");
    write_json(&path, prov, "temperature and mu in energy units per mass where applicable; rho: mass/length^3", &json)?;
    Ok(Summary {
        pass: true,
        message: format!("T = {}, mu = {} after {} iterations", r.spec.temperature, r.spec.mu, r.iterations),
        files: vec![path],
    })
}

fn egorov(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let (setup, masses) = cfg.egorov_setup()?;
    let report = egorov_test(&setup, &masses)?;
    let path = dir.join("egorov.json");
    write_json(&path, prov, "error: absolute difference of expectations; hbar = mass^(-1/2)", &report)?;
    Ok(Summary {
        pass: report.pass,
        message: format!(
            "{} masses, slope {}",
            report.rows.len(),
            report.slope.map_or("n/a".into(), |s| format!("{s:.3}"))
        ),
        files: vec![path],
    })
}

#[derive(Serialize)]
struct CommutatorJson {
    pass: bool,
    checks: Vec<CommutatorReport>,
}

fn commutator(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Summary, RunError> {
    let c = cfg.commutator.as_ref().ok_or(ConfigError::Missing("commutator"))?;
    let grid = QuantumGrid::new(c.n_points, c.lo, c.hi, c.mass)?;
    let checks = c
        .observables
        .iter()
        .map(|a| commutator_check(&c.hamiltonian, a, &grid, c.band))
        .collect::<molfield_core::Result<Vec<_>>>()?;
    let pass = checks.iter().all(|r| r.pass);
    let worst = checks.iter().filter(|r| !r.control).map(|r| r.discrepancy).fold(0.0, f64::max);
    let path = dir.join("commutator.json");
    write_json(&path, prov, "discrepancy: relative operator norm on the trial band", &CommutatorJson { pass, checks })?;
    Ok(Summary { pass, message: format!("largest discrepancy {worst:e}"), files: vec![path] })
}
