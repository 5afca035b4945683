//! JSON run configuration.

use std::path::Path;

use molfield_core::dynamics::{AdiabaticSurface, CorrectedSurface, PhaseState, Surface};
use molfield_core::ensemble::{Confinement, GibbsMode, GrandCanonical, SamplerOptions, WeightMethod};
use molfield_core::fields::probe_lattice;
use molfield_core::mollifier::Mollifier;
use molfield_core::potential::{
    ExternalFieldModel, FieldFunction, MatrixPotential, PairFunction, PairMatrixModel, TwoStateParams,
};
use molfield_core::Vec3;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::quantum::{EgorovCheck, EgorovSetup, Packet, Symbol};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("missing config section `{0}`")]
    Missing(&'static str),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

fn core_invalid(prefix: &str, e: molfield_core::Error) -> ConfigError {
    match e {
        molfield_core::Error::InvalidParameter { name, reason } => invalid(&format!("{prefix}.{name}"), reason),
        other => invalid(prefix, other.to_string()),
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: Option<ModelConfig>,
    pub particles: Option<ParticlesConfig>,
    pub mollifier: Option<MollifierConfig>,
    pub dynamics: Option<DynamicsConfig>,
    pub probes: Option<ProbesConfig>,
    pub ensemble: Option<EnsembleConfig>,
    pub conservation: Option<ConservationConfig>,
    pub egorov: Option<EgorovConfig>,
    pub commutator: Option<CommutatorConfig>,
    pub outputs: OutputsConfig,
}

/// Radial pair function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairSpec {
    Zero,
    Constant { value: f64 },
    Harmonic { k: f64, r0: f64 },
    Morse { depth: f64, a: f64, r0: f64 },
    LennardJones { epsilon: f64, sigma: f64, r_inner: f64 },
    Gaussian { amplitude: f64, center: f64, width: f64 },
    Sum { terms: Vec<PairSpec> },
}

impl PairSpec {
    pub fn build(&self) -> PairFunction {
        match self {
            PairSpec::Zero => PairFunction::Zero,
            PairSpec::Constant { value } => PairFunction::Constant(*value),
            PairSpec::Harmonic { k, r0 } => PairFunction::Harmonic { k: *k, r0: *r0 },
            PairSpec::Morse { depth, a, r0 } => PairFunction::Morse { depth: *depth, a: *a, r0: *r0 },
            PairSpec::LennardJones { epsilon, sigma, r_inner } => {
                PairFunction::LennardJones { epsilon: *epsilon, sigma: *sigma, r_inner: *r_inner }
            }
            PairSpec::Gaussian { amplitude, center, width } => {
                PairFunction::Gaussian { amplitude: *amplitude, center: *center, width: *width }
            }
            PairSpec::Sum { terms } => PairFunction::Sum(terms.iter().map(PairSpec::build).collect()),
        }
    }
}

/// One-body field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    Polynomial { axis: usize, center: f64, coeffs: Vec<f64> },
    Harmonic { kappa: [f64; 3], center: [f64; 3] },
    Gaussian { axis: usize, amplitude: f64, center: f64, width: f64 },
    Sum { terms: Vec<FieldSpec> },
}

impl FieldSpec {
    pub fn build(&self) -> FieldFunction {
        match self {
            FieldSpec::Constant { value } => FieldFunction::Constant(*value),
            FieldSpec::Polynomial { axis, center, coeffs } => {
                FieldFunction::Polynomial { axis: *axis, center: *center, coeffs: coeffs.clone() }
            }
            FieldSpec::Harmonic { kappa, center } => {
                FieldFunction::Harmonic { kappa: Vec3::from(*kappa), center: Vec3::from(*center) }
            }
            FieldSpec::Gaussian { axis, amplitude, center, width } => {
                FieldFunction::Gaussian { axis: *axis, amplitude: *amplitude, center: *center, width: *width }
            }
            FieldSpec::Sum { terms } => FieldFunction::Sum(terms.iter().map(FieldSpec::build).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub row: usize,
    pub col: usize,
    pub phi: PairSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub row: usize,
    pub col: usize,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    ScalarPair {
        phi: PairSpec,
    },
    TwoState {
        phi: PairSpec,
        site_gap: f64,
        gap_floor: f64,
        gap_bump: f64,
        gap_center: f64,
        gap_width: f64,
        coupling: f64,
        coupling_center: f64,
        coupling_width: Option<f64>,
    },
    PairMatrix {
        site: Vec<Vec<f64>>,
        entries: Vec<PairEntry>,
    },
    ExternalField {
        dim: usize,
        entries: Vec<FieldEntry>,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn MatrixPotential>, ConfigError> {
        let wrap = |e| core_invalid("model", e);
        Ok(match self {
            ModelConfig::ScalarPair { phi } => Box::new(PairMatrixModel::scalar(phi.build()).map_err(wrap)?),
            ModelConfig::TwoState {
                phi,
                site_gap,
                gap_floor,
                gap_bump,
                gap_center,
                gap_width,
                coupling,
                coupling_center,
                coupling_width,
            } => Box::new(
                PairMatrixModel::two_state(&TwoStateParams {
                    phi: phi.build(),
                    site_gap: *site_gap,
                    gap_floor: *gap_floor,
                    gap_bump: *gap_bump,
                    gap_center: *gap_center,
                    gap_width: *gap_width,
                    coupling: *coupling,
                    coupling_center: *coupling_center,
                    coupling_width: *coupling_width,
                })
                .map_err(wrap)?,
            ),
            ModelConfig::PairMatrix { site, entries } => {
                let d = site.len();
                if site.iter().any(|r| r.len() != d) {
                    return Err(invalid("model.site", "must be a square matrix"));
                }
                let m = DMatrix::from_fn(d, d, |i, j| site[i][j]);
                let e = entries.iter().map(|e| (e.row, e.col, e.phi.build())).collect();
                Box::new(PairMatrixModel::new(m, e).map_err(wrap)?)
            }
            ModelConfig::ExternalField { .. } => Box::new(self.external_field()?),
        })
    }

    pub fn external_field(&self) -> Result<ExternalFieldModel, ConfigError> {
        match self {
            ModelConfig::ExternalField { dim, entries } => ExternalFieldModel::new(
                *dim,
                entries.iter().map(|e| (e.row, e.col, e.field.build())).collect(),
            )
            .map_err(|e| core_invalid("model", e)),
            _ => Err(invalid("model.kind", "must be `external_field` here")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassesConfig {
    Uniform(f64),
    Each(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Harmonic walls per axis; zero means periodic.
    #[serde(default)]
    pub kappa: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    pub positions: Vec<[f64; 3]>,
    pub masses: MassesConfig,
    pub momenta: Option<Vec<[f64; 3]>>,
    /// Maxwell momenta at this temperature when `momenta` is absent.
    pub temperature: Option<f64>,
    #[serde(rename = "box")]
    pub container: Option<BoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierConfig {
    pub epsilon: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub surface: usize,
    /// Use the mass-corrected surfaces `λ̄_j`.
    #[serde(default)]
    pub corrected: bool,
    /// Mass `M` of the correction; defaults to the mean particle mass.
    pub mass: Option<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    pub lattice: Option<LatticeConfig>,
    pub points: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub rho: f64,
    pub rho_u: [f64; 3],
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    Uniform,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Reweighting { n_samples: usize },
    DirectQuadrature { points: usize },
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig::Reweighting { n_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrandCanonicalConfig {
    pub n_max: usize,
    pub move_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub initial_step: Option<f64>,
    pub grand_canonical: Option<GrandCanonicalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub n_samples: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_rel_tol() -> f64 {
    0.02
}

fn default_max_iter() -> usize {
    30
}

fn default_trajectories() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub temperature: Option<f64>,
    pub mu: Option<f64>,
    #[serde(default)]
    pub u0: [f64; 3],
    pub targets: Option<TargetsConfig>,
    /// Defaults to the box center.
    pub probe: Option<[f64; 3]>,
    #[serde(default)]
    pub mode: ModeConfig,
    pub eta_floor: Option<f64>,
    #[serde(default = "default_trajectories")]
    pub trajectories_per_surface: usize,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConservationMode {
    #[default]
    PerTrajectory,
    Canonical,
}

fn default_dt_check() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConservationConfig {
    #[serde(default)]
    pub mode: ConservationMode,
    #[serde(default = "default_dt_check")]
    pub dt_check: f64,
    /// Relative residual bound (per trajectory, default 1e-6) or multiple
    /// of the standard error (canonical, default 5).
    pub tolerance: Option<f64>,
}

fn default_hermite() -> usize {
    10
}

fn default_check() -> EgorovCheck {
    EgorovCheck::Slope { limit: -0.8 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgorovConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub surface: usize,
    pub observable: Symbol,
    pub packets: Vec<Packet>,
    pub tau: f64,
    pub masses: Vec<f64>,
    pub n_points: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: f64,
    pub classical_dt: f64,
    #[serde(default = "default_hermite")]
    pub hermite_nodes: usize,
    #[serde(default = "default_check")]
    pub check: EgorovCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorConfig {
    pub hamiltonian: Symbol,
    pub observables: Vec<Symbol>,
    pub n_points: usize,
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub band: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: String,
}

/// A parsed configuration with the SHA-256 of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_bytes(&text)
    }

    pub fn from_bytes(text: &[u8]) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_slice(text)?;
        config.validate()?;
        Ok(LoadedConfig { config, sha256: sha256_hex(text) })
    }
}

impl RunConfig {
    /// Checks every section that is present.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.mollifier {
            positive("mollifier.epsilon", m.epsilon)?;
        }
        if let Some(p) = &self.particles {
            match &p.masses {
                MassesConfig::Uniform(m) => positive("particles.masses", *m)?,
                MassesConfig::Each(ms) => {
                    if ms.len() != p.positions.len() {
                        return Err(invalid("particles.masses", "need one mass per position"));
                    }
                    for m in ms {
                        positive("particles.masses", *m)?;
                    }
                }
            }
            if let Some(mom) = &p.momenta {
                if mom.len() != p.positions.len() {
                    return Err(invalid("particles.momenta", "need one momentum per position"));
                }
            }
            if let Some(t) = p.temperature {
                positive("particles.temperature", t)?;
            }
            if let Some(b) = &p.container {
                for c in 0..3 {
                    if !(b.hi[c] > b.lo[c]) {
                        return Err(invalid("particles.box", "hi must exceed lo on every axis"));
                    }
                    if !(b.kappa[c] >= 0.0) {
                        return Err(invalid("particles.box.kappa", "must be nonnegative"));
                    }
                }
            }
        }
        if let Some(d) = &self.dynamics {
            positive("dynamics.dt", d.dt)?;
            if let Some(m) = d.mass {
                positive("dynamics.mass", m)?;
            }
            if d.record_every == 0 {
                return Err(invalid("dynamics.record_every", "must be at least 1"));
            }
        }
        if let Some(p) = &self.probes {
            match (&p.lattice, &p.points) {
                (Some(l), None) => {
                    if l.counts.iter().any(|c| *c == 0) {
                        return Err(invalid("probes.lattice.counts", "must be positive"));
                    }
                }
                (None, Some(_)) => {}
                _ => return Err(invalid("probes", "give exactly one of `lattice` and `points`")),
            }
        }
        if let Some(e) = &self.ensemble {
            if let Some(t) = e.temperature {
                positive("ensemble.temperature", t)?;
            }
            if e.trajectories_per_surface == 0 {
                return Err(invalid("ensemble.trajectories_per_surface", "must be positive"));
            }
            if let Some(f) = e.eta_floor {
                positive("ensemble.eta_floor", f)?;
            }
            if let Some(fit) = &e.fit {
                positive("ensemble.fit.rel_tol", fit.rel_tol)?;
                if fit.n_samples == 0 {
                    return Err(invalid("ensemble.fit.n_samples", "must be positive"));
                }
            }
        }
        if let Some(c) = &self.conservation {
            positive("conservation.dt_check", c.dt_check)?;
            if let Some(t) = c.tolerance {
                positive("conservation.tolerance", t)?;
            }
        }
        if let Some(e) = &self.egorov {
            positive("egorov.tau", e.tau.max(f64::MIN_POSITIVE))?;
            positive("egorov.dt", e.dt)?;
            positive("egorov.classical_dt", e.classical_dt)?;
            for m in &e.masses {
                positive("egorov.masses", *m)?;
            }
            e.observable.validate().map_err(|err| core_invalid("egorov.observable", err))?;
        }
        if let Some(c) = &self.commutator {
            positive("commutator.mass", c.mass)?;
            c.hamiltonian.validate().map_err(|err| core_invalid("commutator.hamiltonian", err))?;
            for o in &c.observables {
                o.validate().map_err(|err| core_invalid("commutator.observables", err))?;
            }
        }
        Ok(())
    }

    pub fn require_model(&self) -> Result<&ModelConfig, ConfigError> {
        self.model.as_ref().ok_or(ConfigError::Missing("model"))
    }

    pub fn require_particles(&self) -> Result<&ParticlesConfig, ConfigError> {
        self.particles.as_ref().ok_or(ConfigError::Missing("particles"))
    }

    pub fn require_dynamics(&self) -> Result<&DynamicsConfig, ConfigError> {
        self.dynamics.as_ref().ok_or(ConfigError::Missing("dynamics"))
    }

    pub fn require_ensemble(&self) -> Result<&EnsembleConfig, ConfigError> {
        self.ensemble.as_ref().ok_or(ConfigError::Missing("ensemble"))
    }

    pub fn mollifier(&self) -> Result<Mollifier, ConfigError> {
        let m = self.mollifier.as_ref().ok_or(ConfigError::Missing("mollifier"))?;
        Mollifier::new(m.epsilon).map_err(|e| core_invalid("mollifier", e))
    }

    pub fn masses(&self) -> Result<Vec<f64>, ConfigError> {
        let p = self.require_particles()?;
        Ok(match &p.masses {
            MassesConfig::Uniform(m) => vec![*m; p.positions.len()],
            MassesConfig::Each(ms) => ms.clone(),
        })
    }

    /// Mass of the surface correction.
    pub fn correction_mass(&self) -> Result<f64, ConfigError> {
        if let Some(m) = self.require_dynamics()?.mass {
            return Ok(m);
        }
        let ms = self.masses()?;
        if ms.is_empty() {
            return Err(invalid("particles.positions", "need at least one particle"));
        }
        Ok(ms.iter().sum::<f64>() / ms.len() as f64)
    }

    /// Surface `j` of the model, corrected when `dynamics.corrected` is set.
    pub fn surface(&self, j: usize) -> Result<Box<dyn Surface>, ConfigError> {
        let pot = self.require_model()?.build()?;
        let corrected = self.dynamics.as_ref().is_some_and(|d| d.corrected);
        let s: Box<dyn Surface> = if corrected {
            let mass = self.correction_mass()?;
            Box::new(CorrectedSurface::new(pot, j, mass).map_err(|e| core_invalid("dynamics", e))?)
        } else {
            Box::new(AdiabaticSurface::new(pot, j).map_err(|e| core_invalid("dynamics", e))?)
        };
        Ok(s)
    }

    pub fn surface_count(&self) -> Result<usize, ConfigError> {
        Ok(self.require_model()?.build()?.dim())
    }

    /// Initial state from `particles`, on the dynamics surface.
    pub fn initial_state(&self) -> Result<PhaseState, ConfigError> {
        let p = self.require_particles()?;
        let x: Vec<Vec3> = p.positions.iter().map(|v| Vec3::from(*v)).collect();
        let masses = self.masses()?;
        let momenta = match (&p.momenta, p.temperature) {
            (Some(m), _) => m.iter().map(|v| Vec3::from(*v)).collect(),
            (None, Some(t)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                masses
                    .iter()
                    .map(|m| {
                        let sd = (m * t).sqrt();
                        Vec3::from_fn(|_, _| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    })
                    .collect()
            }
            (None, None) => vec![Vec3::zeros(); x.len()],
        };
        let surface = self.dynamics.as_ref().map_or(0, |d| d.surface);
        PhaseState::new(x, momenta, masses, surface).map_err(|e| core_invalid("particles", e))
    }

    pub fn confinement(&self) -> Result<Confinement, ConfigError> {
        let b = self.require_particles()?.container.as_ref().ok_or(ConfigError::Missing("particles.box"))?;
        let c = Confinement { lo: Vec3::from(b.lo), hi: Vec3::from(b.hi), kappa: Vec3::from(b.kappa) };
        c.validate().map_err(|e| core_invalid("particles.box", e))?;
        Ok(c)
    }

    pub fn probe_points(&self) -> Result<Vec<Vec3>, ConfigError> {
        let p = self.probes.as_ref().ok_or(ConfigError::Missing("probes"))?;
        Ok(match (&p.lattice, &p.points) {
            (Some(l), _) => probe_lattice(&Vec3::from(l.lo), &Vec3::from(l.hi), l.counts),
            (None, Some(pts)) => pts.iter().map(|v| Vec3::from(*v)).collect(),
            (None, None) => return Err(invalid("probes", "give exactly one of `lattice` and `points`")),
        })
    }

    pub fn sampler_options(&self) -> Result<SamplerOptions, ConfigError> {
        let s = &self.require_ensemble()?.sampler;
        let mut o = SamplerOptions::default();
        o.burn_in = s.burn_in;
        o.thin = s.thin;
        if let Some(step) = s.initial_step {
            positive("ensemble.sampler.initial_step", step)?;
            o.initial_step = step;
        }
        o.grand_canonical =
            s.grand_canonical.map(|g| GrandCanonical { n_max: g.n_max, move_fraction: g.move_fraction });
        Ok(o)
    }

    pub fn weight_method(&self) -> Result<WeightMethod, ConfigError> {
        Ok(match self.require_ensemble()?.weights {
            WeightConfig::Reweighting { n_samples } => WeightMethod::Reweighting { n_samples, seed: self.seed },
            WeightConfig::DirectQuadrature { points } => WeightMethod::DirectQuadrature { points },
        })
    }

    pub fn gibbs_mode(&self) -> Result<GibbsMode, ConfigError> {
        Ok(match self.require_ensemble()?.mode {
            ModeConfig::Uniform => GibbsMode::Uniform,
            ModeConfig::Local => GibbsMode::Local,
        })
    }

    pub fn egorov_setup(&self) -> Result<(EgorovSetup, Vec<f64>), ConfigError> {
        let e = self.egorov.as_ref().ok_or(ConfigError::Missing("egorov"))?;
        let setup = EgorovSetup {
            model: e.model.external_field()?,
            surface: e.surface,
            observable: e.observable.clone(),
            packets: e.packets.clone(),
            tau: e.tau,
            n_points: e.n_points,
            lo: e.lo,
            hi: e.hi,
            dt: e.dt,
            classical_dt: e.classical_dt,
            hermite_nodes: e.hermite_nodes,
            check: e.check,
        };
        Ok((setup, e.masses.clone()))
    }
}
