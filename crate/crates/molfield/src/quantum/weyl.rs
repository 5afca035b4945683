//! Weyl quantization of symbols `Σ_k a_k(x) p^k` on a periodic grid.

use std::f64::consts::PI;

use molfield_core::mollifier::Mollifier;
use molfield_core::{Error, Result, Vec3};
use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{QuantumGrid, DENSE_LIMIT};

/// Position-dependent coefficient `a(x)` of a symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Zero,
    /// `Σ_i c_i x^i`
    Polynomial { coeffs: Vec<f64> },
    /// `c + Σ_m (a_m cos(2πmx/L) + b_m sin(2πmx/L))`, `m ≥ 1`
    Fourier { period: f64, constant: f64, cos: Vec<f64>, sin: Vec<f64> },
    /// `η(center − x)` along the first axis.
    Bump { center: f64, epsilon: f64 },
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Polynomial { coeffs: vec![c] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidParameter { name: "symbol", reason: reason.into() });
        match self {
            Coefficient::Zero => Ok(()),
            Coefficient::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                bad("polynomial coefficients must be finite")
            }
            Coefficient::Polynomial { .. } => Ok(()),
            Coefficient::Fourier { period, .. } if !(*period > 0.0) => bad("period must be positive"),
            Coefficient::Fourier { constant, cos, sin, .. }
                if !constant.is_finite() || cos.iter().chain(sin).any(|c| !c.is_finite()) =>
            {
                bad("Fourier coefficients must be finite")
            }
            Coefficient::Fourier { .. } => Ok(()),
            Coefficient::Bump { center, epsilon } => {
                if !center.is_finite() {
                    return bad("bump center must be finite");
                }
                Mollifier::new(*epsilon).map(|_| ())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Zero => true,
            Coefficient::Polynomial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            Coefficient::Fourier { constant, cos, sin, .. } => {
                *constant == 0.0 && cos.iter().chain(sin).all(|c| *c == 0.0)
            }
            Coefficient::Bump { .. } => false,
        }
    }

    /// `(a(x), a'(x))`.
    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            Coefficient::Zero => (0.0, 0.0),
            Coefficient::Polynomial { coeffs } => {
                let (mut v, mut d) = (0.0, 0.0);
                for c in coeffs.iter().rev() {
                    d = d * x + v;
                    v = v * x + c;
                }
                (v, d)
            }
            Coefficient::Fourier { period, constant, cos, sin } => {
                let w = 2.0 * PI / period;
                let (mut v, mut d) = (*constant, 0.0);
                for m in 0..cos.len().max(sin.len()) {
                    let q = w * (m + 1) as f64;
                    let (s, c) = (q * x).sin_cos();
                    let a = cos.get(m).copied().unwrap_or(0.0);
                    let b = sin.get(m).copied().unwrap_or(0.0);
                    v += a * c + b * s;
                    d += q * (b * c - a * s);
                }
                (v, d)
            }
            Coefficient::Bump { center, epsilon } => {
                let m = Mollifier::new(*epsilon).expect("validated epsilon");
                let y = Vec3::new(center - x, 0.0, 0.0);
                (m.eval(&y), -m.grad(&y)[0])
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_and_derivative(x).0
    }
}

/// `Σ_k terms[k](x) p^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Symbol {
    pub terms: Vec<Coefficient>,
}

impl Symbol {
    pub fn new(terms: Vec<Coefficient>) -> Self {
        Symbol { terms }
    }

    /// `p²/2 + v(x)`.
    pub fn hamiltonian(v: Coefficient) -> Self {
        Symbol::new(vec![v, Coefficient::Zero, Coefficient::constant(0.5)])
    }

    /// `a(x) p^k`.
    pub fn monomial(a: Coefficient, k: usize) -> Self {
        let mut terms = vec![Coefficient::Zero; k + 1];
        terms[k] = a;
        Symbol::new(terms)
    }

    pub fn validate(&self) -> Result<()> {
        self.terms.iter().try_for_each(Coefficient::validate)
    }

    /// Highest power of `p` with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.terms.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
    }

    pub fn eval(&self, x: f64, p: f64) -> f64 {
        self.terms.iter().rev().fold(0.0, |acc, c| acc * p + c.value(x))
    }
}

/// Symbol coefficients sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSymbol {
    pub terms: Vec<Vec<f64>>,
}

impl GridSymbol {
    pub fn sample(symbol: &Symbol, grid: &QuantumGrid) -> Self {
        let xs = grid.xs();
        GridSymbol { terms: symbol.terms.iter().map(|c| xs.iter().map(|x| c.value(*x)).collect()).collect() }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().rposition(|t| t.iter().any(|v| *v != 0.0)).unwrap_or(0)
    }
}

/// `{H, A} = ∂_pH ∂_xA − ∂_xH ∂_pA` sampled on the grid, with analytic
/// coefficient derivatives.
pub fn poisson_bracket(h: &Symbol, a: &Symbol, grid: &QuantumGrid) -> GridSymbol {
    let xs = grid.xs();
    let n = xs.len();
    let eval = |s: &Symbol| -> Vec<Vec<(f64, f64)>> {
        s.terms.iter().map(|c| xs.iter().map(|x| c.value_and_derivative(*x)).collect()).collect()
    };
    let (hv, av) = (eval(h), eval(a));
    let len = (hv.len() + av.len()).saturating_sub(1).max(1);
    let mut terms = vec![vec![0.0; n]; len];
    for (k, hk) in hv.iter().enumerate() {
        for (l, al) in av.iter().enumerate() {
            if k + l == 0 {
                continue;
            }
            let t = &mut terms[k + l - 1];
            for i in 0..n {
                t[i] += k as f64 * hk[i].0 * al[i].1 - l as f64 * hk[i].1 * al[i].0;
            }
        }
    }
    GridSymbol { terms }
}

/// Which momentum degrees [`weyl_quantize`] accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolPath {
    /// Degree ≤ 2, the conservation observables.
    Standard,
    /// Any degree; used for the degree-3 negative control.
    NegativeControl,
}

fn binomial(k: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

fn check_degree(degree: usize, path: SymbolPath) -> Result<()> {
    if degree > 2 && path == SymbolPath::Standard {
        return Err(Error::UnsupportedSymbol { degree });
    }
    Ok(())
}

fn check_dense(grid: &QuantumGrid) -> Result<()> {
    if grid.n_points() > DENSE_LIMIT {
        return Err(Error::GridTooLarge { points: grid.n_points(), limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Dense `p̂ = −iħ∂_x` in the spectral sense.
pub(crate) fn momentum_matrix(grid: &QuantumGrid) -> DMatrix<Complex64> {
    let n = grid.n_points();
    let mut p = DMatrix::zeros(n, n);
    for l in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[l] = Complex64::new(1.0, 0.0);
        grid.apply_momentum(&mut e, 1);
        for (i, z) in e.into_iter().enumerate() {
            p[(i, l)] = z;
        }
    }
    p
}

/// `Op(b p^k) = 2^{-k} Σ_j C(k,j) p̂^j b p̂^{k−j}` summed over terms.
pub(crate) fn quantize_dense(grid: &QuantumGrid, symbol: &GridSymbol) -> DMatrix<Complex64> {
    let n = grid.n_points();
    let degree = symbol.degree();
    let mut out = DMatrix::zeros(n, n);
    let p = momentum_matrix(grid);
    let mut pows = vec![DMatrix::identity(n, n)];
    for j in 1..=degree {
        let next = &pows[j - 1] * &p;
        pows.push(next);
    }
    for (k, b) in symbol.terms.iter().enumerate().take(degree + 1) {
        if b.iter().all(|v| *v == 0.0) {
            continue;
        }
        if b.iter().all(|v| *v == b[0]) {
            out += &pows[k] * Complex64::new(b[0], 0.0);
            continue;
        }
        let scale = 0.5f64.powi(k as i32);
        for j in 0..=k {
            let c = Complex64::new(scale * binomial(k, j), 0.0);
            // b p̂^{k−j}, rows scaled by b
            let mut right = pows[k - j].clone();
            for (i, bi) in b.iter().enumerate() {
                right.row_mut(i).scale_mut(*bi);
            }
            if j == 0 {
                out += right * c;
            } else {
                out += &pows[j] * right * c;
            }
        }
    }
    out
}

/// Dense Weyl operator of a scalar symbol.
pub fn weyl_quantize(grid: &QuantumGrid, symbol: &Symbol, path: SymbolPath) -> Result<DMatrix<Complex64>> {
    symbol.validate()?;
    check_dense(grid)?;
    check_degree(symbol.degree(), path)?;
    Ok(quantize_dense(grid, &GridSymbol::sample(symbol, grid)))
}

/// Dense Weyl operator of a `d × d` matrix symbol, quantized entrywise;
/// block `(r, c)` acts from component `c` to component `r`.
pub fn weyl_quantize_matrix(
    grid: &QuantumGrid,
    entries: &[Vec<Symbol>],
    path: SymbolPath,
) -> Result<DMatrix<Complex64>> {
    let d = entries.len();
    if d == 0 || entries.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionMismatch("matrix symbol must be square".into()));
    }
    check_dense(grid)?;
    let n = grid.n_points();
    let mut out = DMatrix::zeros(n * d, n * d);
    for (r, row) in entries.iter().enumerate() {
        for (c, sym) in row.iter().enumerate() {
            let block = weyl_quantize(grid, sym, path)?;
            out.view_mut((r * n, c * n), (n, n)).copy_from(&block);
        }
    }
    Ok(out)
}

/// Matrix-free Weyl operator for grids of any size.
#[derive(Debug, Clone)]
pub struct WeylApplier {
    grid: QuantumGrid,
    symbol: GridSymbol,
}

impl WeylApplier {
    pub fn new(grid: &QuantumGrid, symbol: &Symbol, path: SymbolPath) -> Result<Self> {
        symbol.validate()?;
        check_degree(symbol.degree(), path)?;
        Ok(WeylApplier { grid: grid.clone(), symbol: GridSymbol::sample(symbol, grid) })
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_points();
        let degree = self.symbol.degree();
        let mut pv = vec![v.to_vec()];
        for j in 1..=degree {
            let mut w = pv[j - 1].clone();
            self.grid.apply_momentum(&mut w, 1);
            pv.push(w);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, b) in self.symbol.terms.iter().enumerate().take(degree + 1) {
            if b.iter().all(|x| *x == 0.0) {
                continue;
            }
            let scale = 0.5f64.powi(k as i32);
            for j in 0..=k {
                let mut w: Vec<Complex64> = pv[k - j].iter().zip(b).map(|(z, bi)| z * bi).collect();
                self.grid.apply_momentum(&mut w, j as u32);
                let c = scale * binomial(k, j);
                for (o, z) in out.iter_mut().zip(&w) {
                    *o += z * c;
                }
            }
        }
        out
    }

    /// `⟨v, Â v⟩` with the grid measure.
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let av = self.apply(v);
        v.iter().zip(&av).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.spacing()
    }
}
