//! `i M^{1/2}[Ĥ, Â]` against the quantized Poisson bracket `Op({H, A})`.

use molfield_core::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::Serialize;

use super::weyl::{poisson_bracket, quantize_dense, GridSymbol};
use super::{QuantumGrid, Symbol, DENSE_LIMIT};

/// Relative discrepancy accepted for momentum degree ≤ 2.
pub const COMMUTATOR_TOL: f64 = 1e-8;
/// Discrepancy the degree-3 control must reach.
pub const CONTROL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub mass: f64,
    pub hbar: f64,
    pub n_points: usize,
    pub lo: f64,
    pub hi: f64,
    /// Trial functions are the Fourier modes `|m| ≤ band`.
    pub band: usize,
    /// Momentum degree of `A`.
    pub degree: usize,
    /// `‖(C − B)Q‖ / ‖BQ‖`, or the absolute norm when `BQ = 0`.
    pub discrepancy: f64,
    pub bracket_norm: f64,
    /// Upper bound for degree ≤ 2, lower bound for the degree-3 control.
    pub tolerance: f64,
    pub control: bool,
    pub pass: bool,
}

fn spectral_norm(x: &DMatrix<Complex64>) -> f64 {
    let gram = x.adjoint() * x;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt()
}

/// Orthonormal Fourier modes `e^{ik_m x}/√n`, `|m| ≤ band`.
fn band_basis(grid: &QuantumGrid, band: usize) -> DMatrix<Complex64> {
    let n = grid.n_points();
    let len = grid.bounds().1 - grid.bounds().0;
    let modes: Vec<i64> = (-(band as i64)..=band as i64).collect();
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, modes.len(), |i, c| {
        let k = 2.0 * std::f64::consts::PI * modes[c] as f64 / len;
        Complex64::from_polar(s, k * (grid.x(i) - grid.bounds().0))
    })
}

/// Compares `i M^{1/2}[Ĥ, Â]` with `Op({H, A})` on band-limited trial
/// functions. `band` defaults to `n/4`.
pub fn commutator_check(h: &Symbol, a: &Symbol, grid: &QuantumGrid, band: Option<usize>) -> Result<CommutatorReport> {
    h.validate()?;
    a.validate()?;
    let n = grid.n_points();
    if n > DENSE_LIMIT {
        return Err(Error::GridTooLarge { points: n, limit: DENSE_LIMIT });
    }
    if h.degree() > 2 {
        return Err(Error::UnsupportedSymbol { degree: h.degree() });
    }
    let degree = a.degree();
    if degree > 3 {
        return Err(Error::UnsupportedSymbol { degree });
    }
    let band = band.unwrap_or(n / 4);
    if band == 0 || band >= n / 2 {
        return Err(Error::InvalidParameter { name: "band", reason: format!("must lie in [1, {})", n / 2) });
    }
    let hm = quantize_dense(grid, &GridSymbol::sample(h, grid));
    let am = quantize_dense(grid, &GridSymbol::sample(a, grid));
    let bm = quantize_dense(grid, &poisson_bracket(h, a, grid));
    let q = band_basis(grid, band);
    let aq = &am * &q;
    let hq = &hm * &q;
    let i_over_hbar = Complex64::new(0.0, 1.0 / grid.hbar());
    let cq = (&hm * aq - &am * hq) * i_over_hbar;
    let bq = &bm * &q;
    let bracket_norm = spectral_norm(&bq);
    let diff = spectral_norm(&(cq - &bq));
    let discrepancy = if bracket_norm > 0.0 { diff / bracket_norm } else { diff };
    let control = degree > 2;
    let (tolerance, pass) =
        if control { (CONTROL_FLOOR, discrepancy >= CONTROL_FLOOR) } else { (COMMUTATOR_TOL, discrepancy <= COMMUTATOR_TOL) };
    let (lo, hi) = grid.bounds();
    Ok(CommutatorReport {
        mass: grid.mass(),
        hbar: grid.hbar(),
        n_points: n,
        lo,
        hi,
        band,
        degree,
        discrepancy,
        bracket_norm,
        tolerance,
        control,
        pass,
    })
}
