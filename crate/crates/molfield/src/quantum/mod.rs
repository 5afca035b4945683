//! Grid quantum dynamics for one nuclear coordinate with `d ≤ 2` electronic
//! states, at effective Planck constant `ħ = M^{-1/2}`.

mod commutator;
mod egorov;
mod propagate;
mod weyl;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use molfield_core::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub use commutator::{commutator_check, CommutatorReport, COMMUTATOR_TOL, CONTROL_FLOOR};
pub use egorov::{egorov_test, EgorovCheck, EgorovReport, EgorovRow, EgorovSetup, Packet};
pub use propagate::{propagate, GridPotential, Propagator};
pub use weyl::{
    poisson_bracket, weyl_quantize, weyl_quantize_matrix, Coefficient, GridSymbol, Symbol, SymbolPath, WeylApplier,
};

/// Largest grid assembled as dense matrices.
pub const DENSE_LIMIT: usize = 1024;
/// Momentum support allowed below this fraction of Nyquist.
pub const RESOLUTION_FRACTION: f64 = 0.8;
/// Norm fraction tolerated above [`RESOLUTION_FRACTION`].
pub const RESOLUTION_TOL: f64 = 1e-10;

/// Periodic grid on `[lo, hi)` with `n` points.
#[derive(Clone)]
pub struct QuantumGrid {
    n: usize,
    lo: f64,
    hi: f64,
    mass: f64,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for QuantumGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumGrid")
            .field("n", &self.n)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("mass", &self.mass)
            .finish()
    }
}

impl QuantumGrid {
    pub fn new(n: usize, lo: f64, hi: f64, mass: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter { name: "n_points", reason: "must be a power of two ≥ 4".into() });
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter { name: "box", reason: "need finite lo < hi".into() });
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter { name: "mass", reason: "must be positive".into() });
        }
        let len = hi - lo;
        let k = (0..n)
            .map(|m| {
                let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * m / len
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(QuantumGrid {
            n,
            lo,
            hi,
            mass,
            k,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.mass.powf(-0.5)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    /// Index of the Nyquist mode, which every power of `p̂` annihilates.
    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    pub fn fft(&self, v: &mut [Complex64]) {
        self.fwd.process(v);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn ifft(&self, v: &mut [Complex64]) {
        self.inv.process(v);
        let s = 1.0 / self.n as f64;
        for z in v.iter_mut() {
            *z *= s;
        }
    }

    /// Fourier multiplier of `p̂^power`.
    pub fn momentum_power(&self, m: usize, power: u32) -> f64 {
        if power > 0 && m == self.nyquist_index() {
            return 0.0;
        }
        (self.hbar() * self.k[m]).powi(power as i32)
    }

    /// `v ← p̂^power v`.
    pub fn apply_momentum(&self, v: &mut [Complex64], power: u32) {
        if power == 0 {
            return;
        }
        self.fft(v);
        for (m, z) in v.iter_mut().enumerate() {
            *z *= self.momentum_power(m, power);
        }
        self.ifft(v);
    }
}

/// `d` complex components per grid point, stored component by component.
#[derive(Debug, Clone, PartialEq)]
pub struct Spinor {
    pub components: usize,
    pub values: Vec<Complex64>,
}

impl Spinor {
    pub fn zeros(components: usize, n: usize) -> Self {
        Spinor { components, values: vec![Complex64::new(0.0, 0.0); components * n] }
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.components.max(1)
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.n_points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.n_points();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// `h Σ conj(self)·other`.
    pub fn inner(&self, other: &Spinor, grid: &QuantumGrid) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * grid.spacing()
    }

    pub fn norm(&self, grid: &QuantumGrid) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.spacing()).sqrt()
    }

    pub fn normalize(&mut self, grid: &QuantumGrid) -> Result<()> {
        let n = self.norm(grid);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter { name: "wavefunction", reason: "zero or non-finite norm".into() });
        }
        for z in self.values.iter_mut() {
            *z /= n;
        }
        Ok(())
    }

    /// Fraction of the norm above [`RESOLUTION_FRACTION`] of Nyquist.
    pub fn high_frequency_fraction(&self, grid: &QuantumGrid) -> f64 {
        let cut = RESOLUTION_FRACTION * grid.nyquist();
        let (mut high, mut total) = (0.0, 0.0);
        for c in 0..self.components {
            let mut v = self.component(c).to_vec();
            grid.fft(&mut v);
            for (m, z) in v.iter().enumerate() {
                let w = z.norm_sqr();
                total += w;
                if grid.wavenumbers()[m].abs() > cut {
                    high += w;
                }
            }
        }
        if total > 0.0 {
            high / total
        } else {
            0.0
        }
    }

    pub fn check_resolution(&self, grid: &QuantumGrid) -> Result<()> {
        let fraction = self.high_frequency_fraction(grid);
        if fraction > RESOLUTION_TOL {
            return Err(Error::Resolution { fraction });
        }
        Ok(())
    }
}

/// `(πħ)^{-1/4} exp(−(x−x₀)²/(2ħ) + i p₀(x−x₀)/ħ)` sampled on the grid.
pub fn coherent_packet(grid: &QuantumGrid, x0: f64, p0: f64) -> Vec<Complex64> {
    let hbar = grid.hbar();
    let norm = (PI * hbar).powf(-0.25);
    grid.xs()
        .iter()
        .map(|x| {
            let d = x - x0;
            Complex64::from_polar(norm * (-d * d / (2.0 * hbar)).exp(), p0 * d / hbar)
        })
        .collect()
}
