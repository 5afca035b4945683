//! Local grand-canonical Gibbs ensembles: sampling, electronic-state
//! probabilities and matching to prescribed density, momentum and energy.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{PhaseState, Surface};
use crate::mollifier::Mollifier;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, Vec3};

/// Largest tensor grid accepted by direct quadrature.
pub const MAX_QUADRATURE_POINTS: usize = 10_000_000;

/// Smallest effective sample size accepted by reweighting.
pub const MIN_ESS: f64 = 100.0;

const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GibbsMode {
    /// Every particle carries weight one.
    #[default]
    Uniform,
    /// Particle `n` carries weight `max(η(y − x^n), eta_floor)`.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSpec {
    pub temperature: f64,
    pub mu: f64,
    pub u0: Vec3,
    pub probe: Vec3,
    pub eta_floor: f64,
    pub mode: GibbsMode,
}

impl GibbsSpec {
    /// Uniform-mode spec with the default floor for `m`.
    pub fn new(temperature: f64, mu: f64, m: &Mollifier) -> Self {
        GibbsSpec {
            temperature,
            mu,
            u0: Vec3::zeros(),
            probe: Vec3::zeros(),
            eta_floor: default_eta_floor(m),
            mode: GibbsMode::Uniform,
        }
    }

    pub fn validate(&self, m: &Mollifier) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if !self.mu.is_finite() || self.u0.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("mu", "chemical potential and bulk velocity must be finite"));
        }
        let top = m.eval(&Vec3::zeros());
        if !(self.eta_floor > 0.0 && self.eta_floor <= top) {
            return Err(Error::invalid("eta_floor", "must lie in (0, η(0)]"));
        }
        Ok(())
    }

    /// `(λ₀, λ₁) = (μ/T, 1/T)`, the multipliers of the constrained entropy
    /// minimization that produce this density.
    pub fn lagrange_multipliers(&self) -> (f64, f64) {
        (self.mu / self.temperature, 1.0 / self.temperature)
    }
}

pub fn default_eta_floor(m: &Mollifier) -> f64 {
    m.eval(&Vec3::zeros()) * 1e-3
}

/// Particle weights `w_n` of the Gibbs energy.
pub fn particle_weights(spec: &GibbsSpec, m: &Mollifier, x: &[Vec3]) -> Vec<f64> {
    match spec.mode {
        GibbsMode::Uniform => alloc::vec![1.0; x.len()],
        GibbsMode::Local => x.iter().map(|xn| m.eval(&(spec.probe - xn)).max(spec.eta_floor)).collect(),
    }
}

/// `𝓗 = Σ_n w_n (|p^n − M_n u₀|²/(2M_n) + λ^n − M_n μ)`.
pub fn gibbs_energy(state: &PhaseState, spec: &GibbsSpec, m: &Mollifier, lambda_n: &[f64]) -> f64 {
    let w = particle_weights(spec, m, &state.x);
    (0..state.len())
        .map(|n| {
            let mass = state.masses[n];
            let k = (state.p[n] - spec.u0 * mass).norm_squared() / (2.0 * mass);
            w[n] * (k + lambda_n[n] - mass * spec.mu)
        })
        .sum()
}

/// Region the sampler keeps particles in. Axis `c` is periodic on
/// `[lo_c, hi_c]` when `kappa_c = 0` and otherwise carries a harmonic
/// restoring energy `κ_c (x_c − center_c)²/2` that enters sampling only.
#[derive(Debug, Clone, PartialEq)]
pub struct Confinement {
    pub lo: Vec3,
    pub hi: Vec3,
    pub kappa: Vec3,
}

impl Confinement {
    pub fn periodic_box(lo: Vec3, hi: Vec3) -> Result<Self> {
        let c = Confinement { lo, hi, kappa: Vec3::zeros() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            if !(self.hi[c] > self.lo[c]) {
                return Err(Error::invalid("box", "upper corner must exceed lower corner"));
            }
            if !(self.kappa[c] >= 0.0) || !self.kappa[c].is_finite() {
                return Err(Error::invalid("kappa", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    pub fn is_periodic(&self) -> bool {
        self.kappa.iter().all(|k| *k == 0.0)
    }

    /// Box volume when every axis is periodic.
    pub fn volume(&self) -> Option<f64> {
        self.is_periodic().then(|| (self.hi - self.lo).product())
    }

    pub fn energy(&self, x: &[Vec3]) -> f64 {
        let c = self.center();
        x.iter().map(|xn| 0.5 * (xn - c).component_mul(&(xn - c)).dot(&self.kappa)).sum()
    }

    fn wrap(&self, v: &mut Vec3) {
        for c in 0..3 {
            if self.kappa[c] == 0.0 {
                let len = self.hi[c] - self.lo[c];
                let t = (v[c] - self.lo[c]) / len;
                v[c] = self.lo[c] + (t - t.floor()) * len;
            }
        }
    }

    fn uniform_point<R: Rng>(&self, rng: &mut R) -> Vec3 {
        Vec3::from_fn(|c, _| self.lo[c] + (self.hi[c] - self.lo[c]) * rng.random::<f64>())
    }

    /// Integration range of each axis for direct quadrature.
    fn range(&self, c: usize, temperature: f64) -> (f64, f64) {
        if self.kappa[c] == 0.0 {
            (self.lo[c], self.hi[c])
        } else {
            let sd = (temperature / self.kappa[c]).sqrt();
            let mid = self.center()[c];
            (mid - 10.0 * sd, mid + 10.0 * sd)
        }
    }
}

/// Particle insertion and deletion with fugacity
/// `z = (2πMT)^{3/2} e^{Mμ/T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrandCanonical {
    pub n_max: usize,
    /// Fraction of proposals that are insertions or deletions.
    pub move_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOptions {
    /// Discarded proposals; `None` means `10·N·1000`.
    pub burn_in: Option<usize>,
    /// Proposals between recorded samples; `None` means `max(N, 1)`.
    pub thin: Option<usize>,
    pub initial_step: f64,
    pub grand_canonical: Option<GrandCanonical>,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { burn_in: None, thin: None, initial_step: 0.2, grand_canonical: None }
    }
}

/// Samples of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub states: Vec<PhaseState>,
    /// Acceptance rate of position moves after burn-in.
    pub acceptance: f64,
    pub step: f64,
    /// False when the acceptance left `[5%, 80%]` after tuning.
    pub acceptance_ok: bool,
}

/// Metropolis rule for a proposal whose target density ratio is
/// `exp(log_ratio)`.
pub fn metropolis_accept(log_ratio: f64, uniform: f64) -> bool {
    log_ratio >= 0.0 || uniform < log_ratio.exp()
}

/// Seed of the chain for `probe` and `surface`, decorrelated from `base`.
pub fn derive_seed(base: u64, probe: u64, surface: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(base ^ mix(probe.wrapping_mul(2).wrapping_add(1)) ^ mix(surface.wrapping_mul(2)))
}

/// A Gibbs sampling problem: surfaces, mollifier, container and the
/// particle template (initial positions and masses).
pub struct GibbsProblem<'a> {
    pub mollifier: &'a Mollifier,
    pub surfaces: Vec<&'a dyn Surface>,
    pub template: PhaseState,
    pub confinement: Confinement,
    pub sampler: SamplerOptions,
}

impl<'a> GibbsProblem<'a> {
    pub fn new(
        mollifier: &'a Mollifier,
        surfaces: Vec<&'a dyn Surface>,
        template: PhaseState,
        confinement: Confinement,
    ) -> Result<Self> {
        if surfaces.is_empty() {
            return Err(Error::invalid("surfaces", "need at least one surface"));
        }
        confinement.validate()?;
        Ok(GibbsProblem { mollifier, surfaces, template, confinement, sampler: SamplerOptions::default() })
    }

    /// `log` of the position density on surface `j`, up to a constant.
    fn log_density(&self, spec: &GibbsSpec, j: usize, x: &[Vec3], masses: &[f64]) -> Result<f64> {
        let t = spec.temperature;
        let container = self.confinement.energy(x);
        match spec.mode {
            GibbsMode::Uniform => {
                let e = if x.is_empty() { 0.0 } else { self.surfaces[j].energy(x)? };
                Ok(-(e + container) / t)
            }
            GibbsMode::Local => {
                let w = particle_weights(spec, self.mollifier, x);
                let lam = self.surfaces[j].partition(x)?;
                let mut h = container;
                let mut log_w = 0.0;
                for n in 0..x.len() {
                    h += w[n] * (lam[n] - masses[n] * spec.mu);
                    log_w += w[n].ln();
                }
                Ok(-h / t - 1.5 * log_w)
            }
        }
    }

    fn draw_momenta<R: Rng>(&self, spec: &GibbsSpec, x: &[Vec3], masses: &[f64], rng: &mut R) -> Vec<Vec3> {
        let w = particle_weights(spec, self.mollifier, x);
        (0..x.len())
            .map(|n| {
                let sd = (masses[n] * spec.temperature / w[n]).sqrt();
                let z = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                spec.u0 * masses[n] + z * sd
            })
            .collect()
    }

    /// Metropolis chain on surface `j`.
    pub fn sample_surface(&self, spec: &GibbsSpec, j: usize, n_samples: usize, seed: u64) -> Result<SampleSet> {
        spec.validate(self.mollifier)?;
        if j >= self.surfaces.len() {
            return Err(Error::invalid("surface", "index out of range"));
        }
        let gc = self.sampler.grand_canonical;
        let volume = match gc {
            Some(g) => {
                if spec.mode != GibbsMode::Uniform {
                    return Err(Error::invalid("grand_canonical", "particle moves need uniform mode"));
                }
                if !(0.0..1.0).contains(&g.move_fraction) {
                    return Err(Error::invalid("move_fraction", "must lie in [0, 1)"));
                }
                let first = self.template.masses.first().copied();
                if self.template.masses.iter().any(|m| Some(*m) != first) && !self.template.is_empty() {
                    return Err(Error::invalid("masses", "particle moves need equal masses"));
                }
                Some(self.confinement.volume().ok_or(Error::invalid(
                    "confinement",
                    "particle moves need a fully periodic box",
                ))?)
            }
            None => None,
        };
        let mass = self.template.masses.first().copied().unwrap_or(1.0);
        let t = spec.temperature;
        let log_z = 1.5 * (2.0 * core::f64::consts::PI * mass * t).ln() + mass * spec.mu / t;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.template.x.clone();
        for xn in x.iter_mut() {
            self.confinement.wrap(xn);
        }
        let mut masses = self.template.masses.clone();
        let mut logp = self.log_density(spec, j, &x, &masses)?;
        let n0 = x.len().max(1);
        let burn_in = self.sampler.burn_in.unwrap_or(10 * n0 * 1000);
        let thin = self.sampler.thin.unwrap_or(n0).max(1);
        let mut step = self.sampler.initial_step;
        let max_step = (self.confinement.hi - self.confinement.lo).max();

        let mut tried = 0usize;
        let mut accepted = 0usize;
        let propose = |x: &mut Vec<Vec3>,
                           masses: &mut Vec<f64>,
                           logp: &mut f64,
                           step: f64,
                           rng: &mut ChaCha8Rng,
                           tried: &mut usize,
                           accepted: &mut usize|
         -> Result<()> {
            if let (Some(g), Some(vol)) = (gc, volume) {
                if rng.random::<f64>() < g.move_fraction {
                    let insert = rng.random::<bool>();
                    if insert {
                        if x.len() >= g.n_max {
                            return Ok(());
                        }
                        x.push(self.confinement.uniform_point(rng));
                        masses.push(mass);
                        let new = self.log_density(spec, j, x, masses)?;
                        let log_acc = log_z + vol.ln() - (x.len() as f64).ln() + new - *logp;
                        if metropolis_accept(log_acc, rng.random()) {
                            *logp = new;
                        } else {
                            x.pop();
                            masses.pop();
                        }
                    } else {
                        if x.is_empty() {
                            return Ok(());
                        }
                        let n = rng.random_range(0..x.len());
                        let old = x.swap_remove(n);
                        let old_m = masses.swap_remove(n);
                        let new = self.log_density(spec, j, x, masses)?;
                        let log_acc = ((x.len() + 1) as f64).ln() - log_z - vol.ln() + new - *logp;
                        if metropolis_accept(log_acc, rng.random()) {
                            *logp = new;
                        } else {
                            x.push(old);
                            masses.push(old_m);
                            let last = x.len() - 1;
                            x.swap(n, last);
                            masses.swap(n, last);
                        }
                    }
                    return Ok(());
                }
            }
            if x.is_empty() {
                return Ok(());
            }
            let n = rng.random_range(0..x.len());
            let old = x[n];
            let mut moved = old + Vec3::from_fn(|_, _| step * (2.0 * rng.random::<f64>() - 1.0));
            self.confinement.wrap(&mut moved);
            x[n] = moved;
            let new = self.log_density(spec, j, x, masses)?;
            *tried += 1;
            if metropolis_accept(new - *logp, rng.random()) {
                *logp = new;
                *accepted += 1;
            } else {
                x[n] = old;
            }
            Ok(())
        };

        let block = 200;
        for i in 0..burn_in {
            propose(&mut x, &mut masses, &mut logp, step, &mut rng, &mut tried, &mut accepted)?;
            if (i + 1) % block == 0 && tried > 0 {
                let rate = accepted as f64 / tried as f64;
                if rate < 0.2 {
                    step *= 0.7;
                } else if rate > 0.5 {
                    step = (step * 1.3).min(max_step);
                }
                tried = 0;
                accepted = 0;
            }
        }
        tried = 0;
        accepted = 0;
        let mut states = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for _ in 0..thin {
                propose(&mut x, &mut masses, &mut logp, step, &mut rng, &mut tried, &mut accepted)?;
            }
            let p = self.draw_momenta(spec, &x, &masses, &mut rng);
            states.push(PhaseState { x: x.clone(), p, masses: masses.clone(), surface: j, time: 0.0 });
        }
        let acceptance = if tried > 0 { accepted as f64 / tried as f64 } else { 1.0 };
        Ok(SampleSet { states, acceptance, step, acceptance_ok: (0.05..=0.8).contains(&acceptance) })
    }

    /// Samples with surface labels drawn from `weights`; each surface runs
    /// its own chain seeded by [`derive_seed`].
    pub fn sample(&self, spec: &GibbsSpec, weights: &[f64], n_samples: usize, seed: u64) -> Result<Vec<SampleSet>> {
        if weights.len() != self.surfaces.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} weights for {} surfaces",
                weights.len(),
                self.surfaces.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, u64::MAX));
        let total: f64 = weights.iter().sum();
        let mut counts = alloc::vec![0usize; weights.len()];
        for _ in 0..n_samples {
            let mut r = rng.random::<f64>() * total;
            let mut j = 0;
            while j + 1 < weights.len() && r >= weights[j] {
                r -= weights[j];
                j += 1;
            }
            counts[j] += 1;
        }
        counts
            .iter()
            .enumerate()
            .map(|(j, &c)| self.sample_surface(spec, j, c, derive_seed(seed, 0, j as u64)))
            .collect()
    }

    /// Probability of each electronic state.
    pub fn surface_weights(&self, spec: &GibbsSpec, method: &WeightMethod) -> Result<SurfaceWeights> {
        spec.validate(self.mollifier)?;
        if self.surfaces.len() == 1 {
            return Ok(SurfaceWeights { q: alloc::vec![1.0], stderr: alloc::vec![0.0] });
        }
        match *method {
            WeightMethod::DirectQuadrature { points } => {
                let fine = self.quadrature_weights(spec, points)?;
                let coarse = self.quadrature_weights(spec, points.div_ceil(2).max(1))?;
                let stderr = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).collect();
                Ok(SurfaceWeights { q: fine, stderr })
            }
            WeightMethod::Reweighting { n_samples, seed } => self.reweighting_weights(spec, n_samples, seed),
        }
    }

    fn quadrature_weights(&self, spec: &GibbsSpec, points: usize) -> Result<Vec<f64>> {
        let n = self.template.len();
        let dims = 3 * n;
        let total = (points as f64).powi(dims as i32);
        if total > MAX_QUADRATURE_POINTS as f64 {
            return Err(Error::GridTooLarge { points: total as usize, limit: MAX_QUADRATURE_POINTS });
        }
        let gl = GaussLegendre::new(points);
        let axes: Vec<Vec<(f64, f64)>> = (0..dims)
            .map(|i| {
                let (a, b) = self.confinement.range(i % 3, spec.temperature);
                gl.mapped(a, b).collect()
            })
            .collect();
        let d = self.surfaces.len();
        let mut logs: Vec<Vec<(f64, f64)>> = alloc::vec![Vec::new(); d];
        let mut idx = alloc::vec![0usize; dims];
        let mut x = alloc::vec![Vec3::zeros(); n];
        loop {
            let mut log_w = 0.0;
            for (i, &k) in idx.iter().enumerate() {
                let (node, w) = axes[i][k];
                x[i / 3][i % 3] = node;
                log_w += w.ln();
            }
            for (j, l) in logs.iter_mut().enumerate() {
                l.push((log_w, self.log_density(spec, j, &x, &self.template.masses)?));
            }
            let mut c = 0;
            loop {
                if c == dims {
                    return Ok(normalize_logs(&logs));
                }
                idx[c] += 1;
                if idx[c] < points {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }

    fn reweighting_weights(&self, spec: &GibbsSpec, n_samples: usize, seed: u64) -> Result<SurfaceWeights> {
        let set = self.sample_surface(spec, 0, n_samples, derive_seed(seed, 0, 0))?;
        let d = self.surfaces.len();
        let mut deltas: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(n_samples); d];
        for s in &set.states {
            let base = self.log_density(spec, 0, &s.x, &s.masses)?;
            for (j, dj) in deltas.iter_mut().enumerate() {
                dj.push(if j == 0 { 0.0 } else { self.log_density(spec, j, &s.x, &s.masses)? - base });
            }
        }
        for dj in deltas.iter().skip(1) {
            let shift = dj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (s1, s2) = dj.iter().fold((0.0, 0.0), |(a, b), v| {
                let e = (v - shift).exp();
                (a + e, b + e * e)
            });
            let ess = s1 * s1 / s2;
            if !(ess >= MIN_ESS) {
                return Err(Error::InsufficientOverlap { ess });
            }
        }
        let estimate = |range: core::ops::Range<usize>| -> Vec<f64> {
            let logs: Vec<Vec<(f64, f64)>> =
                deltas.iter().map(|dj| dj[range.clone()].iter().map(|v| (0.0, *v)).collect()).collect();
            normalize_logs(&logs)
        };
        let q = estimate(0..n_samples);
        let batch = n_samples / BATCHES;
        let mut stderr = alloc::vec![0.0; d];
        if batch > 0 {
            let per: Vec<Vec<f64>> = (0..BATCHES).map(|b| estimate(b * batch..(b + 1) * batch)).collect();
            for (j, se) in stderr.iter_mut().enumerate() {
                let mean = per.iter().map(|p| p[j]).sum::<f64>() / BATCHES as f64;
                let var = per.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
                *se = (var / BATCHES as f64).sqrt();
            }
        }
        Ok(SurfaceWeights { q, stderr })
    }

    /// Mollified density, momentum and energy at the probe from samples.
    pub fn estimate(&self, sets: &[SampleSet], probe: &Vec3) -> Result<ThermoEstimate> {
        let mut rows: Vec<[f64; 5]> = Vec::new();
        for set in sets {
            for s in &set.states {
                let lam = if s.is_empty() { Vec::new() } else { self.surfaces[s.surface].partition(&s.x)? };
                let mut row = [0.0; 5];
                for n in 0..s.len() {
                    let eta = self.mollifier.eval(&(probe - s.x[n]));
                    if eta == 0.0 {
                        continue;
                    }
                    row[0] += eta * s.masses[n];
                    for c in 0..3 {
                        row[1 + c] += eta * s.p[n][c];
                    }
                    row[4] += eta * (s.p[n].norm_squared() / (2.0 * s.masses[n]) + lam[n]);
                }
                rows.push(row);
            }
        }
        if rows.is_empty() {
            return Err(Error::invalid("samples", "no samples to average"));
        }
        let (mean, se) = batch_means(&rows);
        Ok(ThermoEstimate {
            rho: mean[0],
            rho_u: Vec3::new(mean[1], mean[2], mean[3]),
            energy: mean[4],
            stderr_rho: se[0],
            stderr_rho_u: Vec3::new(se[1], se[2], se[3]),
            stderr_energy: se[4],
        })
    }

    fn evaluate(&self, spec: &GibbsSpec, opts: &MatchOptions) -> Result<(ThermoEstimate, SurfaceWeights)> {
        let weights = self.surface_weights(spec, &opts.weight_method)?;
        let sets = self.sample(spec, &weights.q, opts.n_samples, opts.seed)?;
        Ok((self.estimate(&sets, &spec.probe)?, weights))
    }

    /// Finds `T`, `μ` and `u₀` whose Gibbs ensemble reproduces the targets
    /// at `template.probe`.
    pub fn match_thermo(
        &self,
        targets: &ThermoTargets,
        template: &GibbsSpec,
        opts: &MatchOptions,
    ) -> Result<MatchResult> {
        template.validate(self.mollifier)?;
        if !(targets.rho > 0.0) || !targets.energy.is_finite() {
            return Err(Error::invalid("targets", "density must be positive and energy finite"));
        }
        let mut spec = template.clone();
        spec.u0 = targets.rho_u / targets.rho;
        let masses = &self.template.masses;
        let m_ref = if masses.is_empty() { 1.0 } else { masses.iter().sum::<f64>() / masses.len() as f64 };
        let tol = 0.25 * opts.rel_tol;
        let mut evaluations = 0usize;

        // inner solve: T for fixed μ, secant in ln T on the relative energy error
        let solve_t = |spec: &mut GibbsSpec, evaluations: &mut usize| -> Result<(ThermoEstimate, SurfaceWeights)> {
            let e_scale = targets.energy.abs().max(f64::MIN_POSITIVE);
            let residual = |est: &ThermoEstimate| (est.energy - targets.energy) / e_scale;
            let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
            let mut s0 = spec.temperature.ln().clamp(lo, hi);
            spec.temperature = s0.exp();
            let r0 = self.evaluate(spec, opts)?;
            *evaluations += 1;
            let mut f0 = residual(&r0.0);
            if f0.abs() <= tol {
                return Ok(r0);
            }
            let mut s1 = (s0 - 0.3 * f0.signum()).clamp(lo, hi);
            let mut pinned = 0;
            for _ in 0..opts.max_iter {
                spec.temperature = s1.exp();
                let r1 = self.evaluate(spec, opts)?;
                *evaluations += 1;
                let f1 = residual(&r1.0);
                if f1.abs() <= tol {
                    return Ok(r1);
                }
                let slope = (f1 - f0) / (s1 - s0);
                let mut next = if slope.is_finite() && slope > 0.0 { s1 - f1 / slope } else { s1 - 0.3 * f1.signum() };
                next = next.clamp(s1 - 1.5, s1 + 1.5).clamp(lo, hi);
                if next == s1 {
                    pinned += 1;
                    if pinned >= 2 {
                        return Err(Error::UnattainableTarget(alloc::format!(
                            "energy {} not reached for T in [1e-3, 1e3]",
                            targets.energy
                        )));
                    }
                }
                (s0, f0) = (s1, f1);
                s1 = next;
            }
            Err(Error::NoConvergence { iterations: opts.max_iter, change: f0.abs() })
        };

        // outer solve: μ, secant on ln ρ
        let rho_res = |est: &ThermoEstimate| {
            if est.rho > 0.0 {
                (est.rho / targets.rho).ln()
            } else {
                -50.0
            }
        };
        let mut mu0 = spec.mu;
        let mut f0 = rho_res(&solve_t(&mut spec, &mut evaluations)?.0);
        let mut iterations = 1;
        let mut mu1 = mu0 - f0.signum() * spec.temperature / m_ref;
        let mut pinned = 0;
        loop {
            if f0.abs() <= tol {
                spec.mu = mu0;
                let (achieved, weights) = self.evaluate(&spec, opts)?;
                evaluations += 1;
                return self.finish(spec, achieved, weights, targets, opts, iterations, evaluations);
            }
            if iterations > opts.max_iter {
                return Err(Error::NoConvergence { iterations, change: f0.abs() });
            }
            let bound = 50.0 * spec.temperature;
            mu1 = mu1.clamp(-bound, bound);
            spec.mu = mu1;
            let (est1, _) = solve_t(&mut spec, &mut evaluations)?;
            iterations += 1;
            let f1 = rho_res(&est1);
            let slope = (f1 - f0) / (mu1 - mu0);
            let step_cap = 10.0 * spec.temperature / m_ref;
            let mut next = if slope.is_finite() && slope > 0.0 {
                mu1 - f1 / slope
            } else {
                mu1 - f1.signum() * spec.temperature / m_ref
            };
            next = next.clamp(mu1 - step_cap, mu1 + step_cap);
            let bound = 50.0 * spec.temperature;
            if next.abs() > bound && mu1.abs() >= bound {
                pinned += 1;
                if pinned >= 2 {
                    return Err(Error::UnattainableTarget(alloc::format!(
                        "density {} not reached for mu in [-50T, 50T]",
                        targets.rho
                    )));
                }
            }
            (mu0, f0) = (mu1, f1);
            mu1 = next;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        spec: GibbsSpec,
        achieved: ThermoEstimate,
        weights: SurfaceWeights,
        targets: &ThermoTargets,
        opts: &MatchOptions,
        iterations: usize,
        evaluations: usize,
    ) -> Result<MatchResult> {
        let rel_rho = (achieved.rho - targets.rho).abs() / targets.rho;
        let rel_e = (achieved.energy - targets.energy).abs() / targets.energy.abs().max(f64::MIN_POSITIVE);
        if rel_rho > opts.rel_tol || rel_e > opts.rel_tol {
            return Err(Error::NoConvergence { iterations, change: rel_rho.max(rel_e) });
        }
        Ok(MatchResult { spec, achieved, weights, iterations, evaluations })
    }
}

/// How [`GibbsProblem::surface_weights`] integrates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMethod {
    /// Tensor Gauss–Legendre over all `3N` coordinates.
    DirectQuadrature { points: usize },
    /// Importance weights of samples drawn on the first surface.
    Reweighting { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceWeights {
    pub q: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoTargets {
    pub rho: f64,
    pub rho_u: Vec3,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoEstimate {
    pub rho: f64,
    pub rho_u: Vec3,
    pub energy: f64,
    pub stderr_rho: f64,
    pub stderr_rho_u: Vec3,
    pub stderr_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub weight_method: WeightMethod,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            n_samples: 100_000,
            seed: 0,
            rel_tol: 0.02,
            max_iter: 30,
            weight_method: WeightMethod::Reweighting { n_samples: 10_000, seed: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub spec: GibbsSpec,
    pub achieved: ThermoEstimate,
    pub weights: SurfaceWeights,
    pub iterations: usize,
    pub evaluations: usize,
}

/// `q_j ∝ Σ_s exp(a_s + b_s)` for `(a, b)` pairs of every surface.
fn normalize_logs(logs: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let shift = logs.iter().flatten().map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
    let sums: Vec<f64> = logs.iter().map(|l| l.iter().map(|(a, b)| (a + b - shift).exp()).sum()).collect();
    let total: f64 = sums.iter().sum();
    sums.iter().map(|s| s / total).collect()
}

/// Column means and batch-means standard errors.
pub fn batch_means<const K: usize>(rows: &[[f64; K]]) -> ([f64; K], [f64; K]) {
    let n = rows.len();
    let mut mean = [0.0; K];
    for r in rows {
        for k in 0..K {
            mean[k] += r[k] / n as f64;
        }
    }
    let mut se = [0.0; K];
    let batch = n / BATCHES;
    if batch == 0 {
        return (mean, se);
    }
    let mut bm = alloc::vec![[0.0; K]; BATCHES];
    for (b, m) in bm.iter_mut().enumerate() {
        for r in &rows[b * batch..(b + 1) * batch] {
            for k in 0..K {
                m[k] += r[k] / batch as f64;
            }
        }
    }
    for k in 0..K {
        let mu = bm.iter().map(|m| m[k]).sum::<f64>() / BATCHES as f64;
        let var = bm.iter().map(|m| (m[k] - mu).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        se[k] = (var / BATCHES as f64).sqrt();
    }
    (mean, se)
}
