//! Strang splitting for `i ħ ∂_τ Φ = (p̂²/2 + V(x)) Φ`.

use molfield_core::potential::MatrixPotential;
use molfield_core::{Error, Result, Vec3};
use rustfft::num_complex::Complex64;

use super::{QuantumGrid, Spinor};

/// Steps between resolution checks.
const CHECK_EVERY: usize = 256;

/// Real symmetric `d × d` potential at every grid point, point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPotential {
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridPotential {
    /// Samples `pot` for one particle at `(x, 0, 0)`.
    pub fn from_model(grid: &QuantumGrid, pot: &dyn MatrixPotential) -> Self {
        let d = pot.dim();
        let mut values = Vec::with_capacity(grid.n_points() * d * d);
        for x in grid.xs() {
            let v = pot.eval(&[Vec3::new(x, 0.0, 0.0)]);
            for a in 0..d {
                for b in 0..d {
                    values.push(v[(a, b)]);
                }
            }
        }
        GridPotential { components: d, values }
    }

    /// Scalar potential `v(x)`.
    pub fn scalar<F: Fn(f64) -> f64>(grid: &QuantumGrid, v: F) -> Self {
        GridPotential { components: 1, values: grid.xs().into_iter().map(v).collect() }
    }

    pub fn at(&self, i: usize, a: usize, b: usize) -> f64 {
        let d = self.components;
        self.values[i * d * d + a * d + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Precomputed half-step potential propagators and the kinetic phase.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: QuantumGrid,
    components: usize,
    dt: f64,
    /// Row-major `exp(−i dt V/(2ħ))` per point.
    half: Vec<[Complex64; 4]>,
    kinetic: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: &QuantumGrid, potential: &GridPotential, dt: f64) -> Result<Self> {
        let d = potential.components;
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidParameter { name: "components", reason: "only d ∈ {1, 2} is supported".into() });
        }
        if potential.values.len() != grid.n_points() * d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} potential values for {} points",
                potential.values.len(),
                grid.n_points()
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
        }
        let hbar = grid.hbar();
        let theta = dt / (2.0 * hbar);
        let half = (0..grid.n_points())
            .map(|i| {
                if d == 1 {
                    let z = Complex64::from_polar(1.0, -theta * potential.at(i, 0, 0));
                    [z, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]
                } else {
                    let (v00, v01, v11) = (potential.at(i, 0, 0), potential.at(i, 0, 1), potential.at(i, 1, 1));
                    let mean = 0.5 * (v00 + v11);
                    let bz = 0.5 * (v00 - v11);
                    let bx = v01;
                    let r = bx.hypot(bz);
                    let phase = Complex64::from_polar(1.0, -theta * mean);
                    let c = (theta * r).cos();
                    // sin(θr)/r, finite at r = 0
                    let s = if r > 0.0 { (theta * r).sin() / r } else { theta };
                    let i_s = Complex64::new(0.0, -s);
                    [
                        phase * (Complex64::new(c, 0.0) + i_s * bz),
                        phase * i_s * bx,
                        phase * i_s * bx,
                        phase * (Complex64::new(c, 0.0) - i_s * bz),
                    ]
                }
            })
            .collect();
        let kinetic = (0..grid.n_points())
            .map(|m| Complex64::from_polar(1.0, -dt * grid.momentum_power(m, 2) / (2.0 * hbar)))
            .collect();
        Ok(Propagator { grid: grid.clone(), components: d, dt, half, kinetic })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential_half(&self, psi: &mut Spinor) {
        let n = self.grid.n_points();
        if self.components == 1 {
            for (z, u) in psi.values.iter_mut().zip(&self.half) {
                *z *= u[0];
            }
        } else {
            let (a, b) = psi.values.split_at_mut(n);
            for i in 0..n {
                let u = &self.half[i];
                let (x, y) = (a[i], b[i]);
                a[i] = u[0] * x + u[1] * y;
                b[i] = u[2] * x + u[3] * y;
            }
        }
    }

    pub fn step(&self, psi: &mut Spinor) {
        self.potential_half(psi);
        for c in 0..self.components {
            let v = psi.component_mut(c);
            self.grid.fft(v);
            for (z, k) in v.iter_mut().zip(&self.kinetic) {
                *z *= k;
            }
            self.grid.ifft(v);
        }
        self.potential_half(psi);
    }

    /// `steps` steps with periodic resolution checks.
    pub fn run(&self, psi: &mut Spinor, steps: usize) -> Result<()> {
        if psi.components != self.components || psi.n_points() != self.grid.n_points() {
            return Err(Error::DimensionMismatch("wavefunction does not match the grid".into()));
        }
        psi.check_resolution(&self.grid)?;
        for s in 0..steps {
            self.step(psi);
            if (s + 1) % CHECK_EVERY == 0 {
                psi.check_resolution(&self.grid)?;
            }
        }
        psi.check_resolution(&self.grid)
    }

    /// `dt·max|V|/ħ`; values above 0.1 mean the potential phase per step is
    /// not small somewhere on the grid.
    pub fn phase_per_step(grid: &QuantumGrid, potential: &GridPotential, dt: f64) -> f64 {
        dt * potential.max_abs() / grid.hbar()
    }
}

/// `Φ(τ)` with `⌈τ/dt⌉` equal steps ending exactly at `τ`.
pub fn propagate(grid: &QuantumGrid, potential: &GridPotential, psi: &Spinor, tau: f64, dt: f64) -> Result<Spinor> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter { name: "tau", reason: "must be nonnegative".into() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
    }
    let steps = (tau / dt).ceil() as usize;
    let mut out = psi.clone();
    if steps == 0 {
        out.check_resolution(grid)?;
        return Ok(out);
    }
    let prop = Propagator::new(grid, potential, tau / steps as f64)?;
    prop.run(&mut out, steps)?;
    Ok(out)
}
