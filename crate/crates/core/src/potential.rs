//! Matrix-valued potentials, their adiabatic surfaces and the per-particle
//! split of each surface.
//!
//! Matrices are real symmetric. Coordinates are addressed either per
//! particle (`&[Vec3]`) or by the flat index `i = 3·particle + component`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::pairs;
use crate::{Error, Result, Vec3};

/// Smallest adjacent eigenvalue gap accepted by [`eigendecompose`].
pub const GAP_TOL: f64 = 1e-10;

/// Hermitian `d × d` potential `V(x)` with a per-particle split
/// `V = Σ_n V^n`. The particle count is taken from `x`.
pub trait MatrixPotential: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[Vec3]) -> DMatrix<f64>;

    /// The share `V^n(x)` of particle `n`.
    fn eval_part(&self, x: &[Vec3], n: usize) -> DMatrix<f64>;

    /// `∂V/∂x_i` for the flat coordinate `i`.
    fn eval_deriv(&self, x: &[Vec3], i: usize) -> DMatrix<f64>;

    /// `∂V^n/∂x_i`.
    fn eval_part_deriv(&self, x: &[Vec3], n: usize, i: usize) -> DMatrix<f64>;

    /// All `∂V/∂x_i`, `i = 0..3N`.
    fn eval_derivs(&self, x: &[Vec3]) -> Vec<DMatrix<f64>> {
        (0..3 * x.len()).map(|i| self.eval_deriv(x, i)).collect()
    }

    /// All `∂V^n/∂x_i`, indexed `[n][i]`.
    fn eval_part_derivs(&self, x: &[Vec3]) -> Vec<Vec<DMatrix<f64>>> {
        (0..x.len()).map(|n| (0..3 * x.len()).map(|i| self.eval_part_deriv(x, n, i)).collect()).collect()
    }
}

impl<P: MatrixPotential + ?Sized> MatrixPotential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[Vec3]) -> DMatrix<f64> {
        (**self).eval(x)
    }
    fn eval_part(&self, x: &[Vec3], n: usize) -> DMatrix<f64> {
        (**self).eval_part(x, n)
    }
    fn eval_deriv(&self, x: &[Vec3], i: usize) -> DMatrix<f64> {
        (**self).eval_deriv(x, i)
    }
    fn eval_part_deriv(&self, x: &[Vec3], n: usize, i: usize) -> DMatrix<f64> {
        (**self).eval_part_deriv(x, n, i)
    }
    fn eval_derivs(&self, x: &[Vec3]) -> Vec<DMatrix<f64>> {
        (**self).eval_derivs(x)
    }
    fn eval_part_derivs(&self, x: &[Vec3]) -> Vec<Vec<DMatrix<f64>>> {
        (**self).eval_part_derivs(x)
    }
}

impl<P: MatrixPotential + ?Sized> MatrixPotential for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[Vec3]) -> DMatrix<f64> {
        (**self).eval(x)
    }
    fn eval_part(&self, x: &[Vec3], n: usize) -> DMatrix<f64> {
        (**self).eval_part(x, n)
    }
    fn eval_deriv(&self, x: &[Vec3], i: usize) -> DMatrix<f64> {
        (**self).eval_deriv(x, i)
    }
    fn eval_part_deriv(&self, x: &[Vec3], n: usize, i: usize) -> DMatrix<f64> {
        (**self).eval_part_deriv(x, n, i)
    }
    fn eval_derivs(&self, x: &[Vec3]) -> Vec<DMatrix<f64>> {
        (**self).eval_derivs(x)
    }
    fn eval_part_derivs(&self, x: &[Vec3]) -> Vec<Vec<DMatrix<f64>>> {
        (**self).eval_part_derivs(x)
    }
}

/// Radial pair function `φ(r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairFunction {
    Zero,
    Constant(f64),
    /// `κ (r − r₀)² / 2`
    Harmonic { k: f64, r0: f64 },
    /// `D (1 − e^{−a(r−r₀)})² − D`
    Morse { depth: f64, a: f64, r0: f64 },
    /// `4ε((σ/r)¹² − (σ/r)⁶)`, continued below `r_inner` by its second-order
    /// Taylor polynomial so that it stays finite at contact.
    LennardJones { epsilon: f64, sigma: f64, r_inner: f64 },
    /// `c₀ exp(−(r − r_c)²/w²)`
    Gaussian { amplitude: f64, center: f64, width: f64 },
    Sum(Vec<PairFunction>),
}

impl PairFunction {
    /// `(φ(r), φ'(r))`.
    pub fn value_and_derivative(&self, r: f64) -> (f64, f64) {
        match self {
            PairFunction::Zero => (0.0, 0.0),
            PairFunction::Constant(c) => (*c, 0.0),
            PairFunction::Harmonic { k, r0 } => (0.5 * k * (r - r0).powi(2), k * (r - r0)),
            PairFunction::Morse { depth, a, r0 } => {
                let e = (-a * (r - r0)).exp();
                (depth * (1.0 - e).powi(2) - depth, 2.0 * depth * a * e * (1.0 - e))
            }
            PairFunction::LennardJones { epsilon, sigma, r_inner } => {
                let lj = |r: f64| {
                    let s6 = (sigma / r).powi(6);
                    let s12 = s6 * s6;
                    (
                        4.0 * epsilon * (s12 - s6),
                        4.0 * epsilon * (-12.0 * s12 + 6.0 * s6) / r,
                        4.0 * epsilon * (156.0 * s12 - 42.0 * s6) / (r * r),
                    )
                };
                if r >= *r_inner {
                    let (v, d, _) = lj(r);
                    (v, d)
                } else {
                    let (v, d, dd) = lj(*r_inner);
                    let h = r - r_inner;
                    (v + d * h + 0.5 * dd * h * h, d + dd * h)
                }
            }
            PairFunction::Gaussian { amplitude, center, width } => {
                let z = (r - center) / width;
                let g = amplitude * (-z * z).exp();
                (g, -2.0 * z / width * g)
            }
            PairFunction::Sum(parts) => parts.iter().fold((0.0, 0.0), |(v, d), p| {
                let (pv, pd) = p.value_and_derivative(r);
                (v + pv, d + pd)
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PairFunction::Morse { depth, a, r0 } => {
                if !(*depth > 0.0) {
                    return Err(Error::invalid("depth", "Morse depth must be positive"));
                }
                if !(*a > 0.0) {
                    return Err(Error::invalid("a", "Morse width must be positive"));
                }
                if !(*r0 > 0.0) {
                    return Err(Error::invalid("r0", "Morse equilibrium distance must be positive"));
                }
            }
            PairFunction::Harmonic { k, r0 } => {
                if !(*k > 0.0) || !(*r0 >= 0.0) {
                    return Err(Error::invalid("k", "harmonic stiffness must be positive"));
                }
            }
            PairFunction::LennardJones { epsilon, sigma, r_inner } => {
                if !(*epsilon > 0.0 && *sigma > 0.0 && *r_inner > 0.0) {
                    return Err(Error::invalid("lennard_jones", "epsilon, sigma and r_inner must be positive"));
                }
            }
            PairFunction::Gaussian { width, .. } => {
                if !(*width > 0.0) {
                    return Err(Error::invalid("width", "Gaussian width must be positive"));
                }
            }
            PairFunction::Sum(parts) => {
                for p in parts {
                    p.validate()?;
                }
            }
            PairFunction::Zero | PairFunction::Constant(_) => {}
        }
        Ok(())
    }
}

/// `V(x) = N·S + Σ_{n<k} Φ(r^{nk})` with a symmetric matrix `Φ` of pair
/// functions and a constant site matrix `S`. Each particle owns its site
/// term and half of every pair term touching it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrixModel {
    d: usize,
    site: DMatrix<f64>,
    /// Upper triangle `(a, b)`, `a ≤ b`, row-major.
    entries: Vec<(usize, usize, PairFunction)>,
}

impl PairMatrixModel {
    pub fn new(site: DMatrix<f64>, entries: Vec<(usize, usize, PairFunction)>) -> Result<Self> {
        let d = site.nrows();
        if d == 0 || site.ncols() != d {
            return Err(Error::invalid("site", "must be a nonempty square matrix"));
        }
        if (&site - site.transpose()).amax() > 0.0 {
            return Err(Error::invalid("site", "must be symmetric"));
        }
        for (a, b, f) in &entries {
            if *a > *b || *b >= d {
                return Err(Error::invalid("entries", format!("entry ({a},{b}) outside upper triangle")));
            }
            f.validate()?;
        }
        let entries = entries.into_iter().filter(|(_, _, f)| *f != PairFunction::Zero).collect();
        Ok(PairMatrixModel { d, site, entries })
    }

    /// Scalar `λ(x) = Σ_{n<k} φ(r^{nk})`.
    pub fn scalar(phi: PairFunction) -> Result<Self> {
        Self::new(DMatrix::zeros(1, 1), alloc::vec![(0, 0, phi)])
    }

    /// Free particles.
    pub fn zero(d: usize) -> Self {
        PairMatrixModel { d, site: DMatrix::zeros(d, d), entries: Vec::new() }
    }

    pub fn two_state(p: &TwoStateParams) -> Result<Self> {
        if !(p.site_gap >= 0.0) || !(p.gap_floor >= 0.0) || !(p.gap_bump >= 0.0) {
            return Err(Error::invalid("gap", "gap parameters must be nonnegative"));
        }
        if p.site_gap <= 0.0 && p.gap_floor <= 0.0 {
            return Err(Error::invalid("gap", "guaranteed minimum gap must be positive"));
        }
        let mut site = DMatrix::zeros(2, 2);
        site[(1, 1)] = p.site_gap;
        let mut upper = alloc::vec![p.phi.clone()];
        if p.gap_floor > 0.0 {
            upper.push(PairFunction::Constant(p.gap_floor));
        }
        if p.gap_bump > 0.0 {
            upper.push(PairFunction::Gaussian { amplitude: p.gap_bump, center: p.gap_center, width: p.gap_width });
        }
        let coupling = match p.coupling_width {
            Some(width) => PairFunction::Gaussian { amplitude: p.coupling, center: p.coupling_center, width },
            None => PairFunction::Constant(p.coupling),
        };
        Self::new(
            site,
            alloc::vec![(0, 0, p.phi.clone()), (0, 1, coupling), (1, 1, PairFunction::Sum(upper))],
        )
    }

    /// Guaranteed lower bound on the adiabatic gap for `n` particles: the
    /// diagonal splitting bounds the eigenvalue splitting from below.
    pub fn guaranteed_gap(p: &TwoStateParams, n: usize) -> f64 {
        n as f64 * p.site_gap + crate::geometry::pair_count(n) as f64 * p.gap_floor
    }

    /// `v += scale·Φ(r)` without allocating.
    fn add_pair_values(&self, r: f64, scale: f64, v: &mut DMatrix<f64>) {
        for (a, b, f) in &self.entries {
            let fv = scale * f.value_and_derivative(r).0;
            v[(*a, *b)] += fv;
            if a != b {
                v[(*b, *a)] += fv;
            }
        }
    }

    fn pair_matrix(&self, r: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut v = DMatrix::zeros(self.d, self.d);
        let mut dv = DMatrix::zeros(self.d, self.d);
        for (a, b, f) in &self.entries {
            let (fv, fd) = f.value_and_derivative(r);
            v[(*a, *b)] += fv;
            dv[(*a, *b)] += fd;
            if a != b {
                v[(*b, *a)] += fv;
                dv[(*b, *a)] += fd;
            }
        }
        (v, dv)
    }

    /// Pair values `Φ(r)`, derivatives `Φ'(r)` and unit directions.
    fn pair_terms(&self, x: &[Vec3]) -> Vec<(usize, usize, DMatrix<f64>, DMatrix<f64>, Vec3)> {
        pairs(x.len())
            .map(|(i, j)| {
                let d = x[i] - x[j];
                let r = d.norm();
                let e = if r > 0.0 { d / r } else { Vec3::zeros() };
                let (v, dv) = self.pair_matrix(r);
                (i, j, v, dv, e)
            })
            .collect()
    }
}

/// Parameters of the diabatic two-state model
/// `V = [[Σφ, Σc], [Σc, Σφ + Σg + NΔ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateParams {
    pub phi: PairFunction,
    /// On-site splitting `Δ` per particle.
    pub site_gap: f64,
    /// Constant part of the pair gap profile `g(r)`.
    pub gap_floor: f64,
    /// Gaussian bump added to `g(r)`.
    pub gap_bump: f64,
    pub gap_center: f64,
    pub gap_width: f64,
    /// Coupling amplitude `c₀`.
    pub coupling: f64,
    pub coupling_center: f64,
    /// `None` makes the coupling constant in `r`.
    pub coupling_width: Option<f64>,
}

impl Default for TwoStateParams {
    fn default() -> Self {
        TwoStateParams {
            phi: PairFunction::Morse { depth: 1.0, a: 1.2, r0: 1.5 },
            site_gap: 0.5,
            gap_floor: 0.0,
            gap_bump: 0.3,
            gap_center: 1.5,
            gap_width: 0.8,
            coupling: 0.15,
            coupling_center: 1.5,
            coupling_width: Some(0.7),
        }
    }
}

impl MatrixPotential for PairMatrixModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[Vec3]) -> DMatrix<f64> {
        let mut v = &self.site * x.len() as f64;
        if self.entries.is_empty() {
            return v;
        }
        for (i, j) in pairs(x.len()) {
            self.add_pair_values((x[i] - x[j]).norm(), 1.0, &mut v);
        }
        v
    }

    fn eval_part(&self, x: &[Vec3], n: usize) -> DMatrix<f64> {
        let mut v = self.site.clone();
        if self.entries.is_empty() {
            return v;
        }
        for k in (0..x.len()).filter(|&k| k != n) {
            self.add_pair_values((x[n] - x[k]).norm(), 0.5, &mut v);
        }
        v
    }

    fn eval_deriv(&self, x: &[Vec3], i: usize) -> DMatrix<f64> {
        let (a, c) = (i / 3, i % 3);
        let mut out = DMatrix::zeros(self.d, self.d);
        for k in (0..x.len()).filter(|&k| k != a) {
            let d = x[a] - x[k];
            let r = d.norm();
            if r > 0.0 {
                out += self.pair_matrix(r).1 * (d[c] / r);
            }
        }
        out
    }

    fn eval_part_deriv(&self, x: &[Vec3], n: usize, i: usize) -> DMatrix<f64> {
        let (a, c) = (i / 3, i % 3);
        let mut out = DMatrix::zeros(self.d, self.d);
        let mut add = |k: usize| {
            let d = x[a] - x[k];
            let r = d.norm();
            if r > 0.0 {
                out += self.pair_matrix(r).1 * (0.5 * d[c] / r);
            }
        };
        if a == n {
            for k in (0..x.len()).filter(|&k| k != n) {
                add(k);
            }
        } else {
            add(n);
        }
        out
    }

    fn eval_derivs(&self, x: &[Vec3]) -> Vec<DMatrix<f64>> {
        let mut out = alloc::vec![DMatrix::zeros(self.d, self.d); 3 * x.len()];
        for (i, j, _, dv, e) in self.pair_terms(x) {
            for c in 0..3 {
                out[3 * i + c] += &dv * e[c];
                out[3 * j + c] -= &dv * e[c];
            }
        }
        out
    }

    fn eval_part_derivs(&self, x: &[Vec3]) -> Vec<Vec<DMatrix<f64>>> {
        let n = x.len();
        let mut out = alloc::vec![alloc::vec![DMatrix::zeros(self.d, self.d); 3 * n]; n];
        for (i, j, _, dv, e) in self.pair_terms(x) {
            // the pair term enters V^i and V^j with weight one half each
            for owner in [i, j] {
                for c in 0..3 {
                    out[owner][3 * i + c] += &dv * (0.5 * e[c]);
                    out[owner][3 * j + c] -= &dv * (0.5 * e[c]);
                }
            }
        }
        out
    }
}

/// One-body field `f(x)` acting on each particle.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldFunction {
    Constant(f64),
    /// `Σ_k c_k (x_axis − center)^k`
    Polynomial { axis: usize, center: f64, coeffs: Vec<f64> },
    /// `Σ_c κ_c (x_c − center_c)² / 2`
    Harmonic { kappa: Vec3, center: Vec3 },
    /// `a exp(−(x_axis − center)²/w²)`
    Gaussian { axis: usize, amplitude: f64, center: f64, width: f64 },
    Sum(Vec<FieldFunction>),
}

impl FieldFunction {
    /// `(f(x), ∇f(x))`.
    pub fn value_and_gradient(&self, x: &Vec3) -> (f64, Vec3) {
        match self {
            FieldFunction::Constant(c) => (*c, Vec3::zeros()),
            FieldFunction::Polynomial { axis, center, coeffs } => {
                let t = x[*axis] - center;
                let (mut v, mut d) = (0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    d = d * t + v;
                    v = v * t + c;
                }
                let mut g = Vec3::zeros();
                g[*axis] = d;
                (v, g)
            }
            FieldFunction::Harmonic { kappa, center } => {
                let dx = x - center;
                let g = kappa.component_mul(&dx);
                (0.5 * g.dot(&dx), g)
            }
            FieldFunction::Gaussian { axis, amplitude, center, width } => {
                let z = (x[*axis] - center) / width;
                let v = amplitude * (-z * z).exp();
                let mut g = Vec3::zeros();
                g[*axis] = -2.0 * z / width * v;
                (v, g)
            }
            FieldFunction::Sum(parts) => parts.iter().fold((0.0, Vec3::zeros()), |(v, g), p| {
                let (pv, pg) = p.value_and_gradient(x);
                (v + pv, g + pg)
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FieldFunction::Polynomial { axis, .. } if *axis > 2 => Err(Error::invalid("axis", "must be 0, 1 or 2")),
            FieldFunction::Gaussian { axis, width, .. } => {
                if *axis > 2 || !(*width > 0.0) {
                    return Err(Error::invalid("gaussian", "axis must be 0..2 and width positive"));
                }
                Ok(())
            }
            FieldFunction::Harmonic { kappa, .. } if kappa.iter().any(|k| !(*k >= 0.0)) => {
                Err(Error::invalid("kappa", "must be nonnegative"))
            }
            FieldFunction::Sum(parts) => parts.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }
}

/// `V(x) = Σ_n F(x^n)` for a symmetric matrix `F` of one-body fields; each
/// particle owns its own term.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFieldModel {
    d: usize,
    entries: Vec<(usize, usize, FieldFunction)>,
}

impl ExternalFieldModel {
    pub fn new(d: usize, entries: Vec<(usize, usize, FieldFunction)>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        for (a, b, f) in &entries {
            if *a > *b || *b >= d {
                return Err(Error::invalid("entries", format!("entry ({a},{b}) outside upper triangle")));
            }
            f.validate()?;
        }
        Ok(ExternalFieldModel { d, entries })
    }

    /// `F(x)` and `∂F/∂x_c`.
    pub fn field(&self, x: &Vec3) -> (DMatrix<f64>, [DMatrix<f64>; 3]) {
        let mut v = DMatrix::zeros(self.d, self.d);
        let mut g = [v.clone(), v.clone(), v.clone()];
        for (a, b, f) in &self.entries {
            let (fv, fg) = f.value_and_gradient(x);
            let slots: &[(usize, usize)] = if a == b { &[(*a, *b)] } else { &[(*a, *b), (*b, *a)] };
            for &slot in slots {
                v[slot] += fv;
                for c in 0..3 {
                    g[c][slot] += fg[c];
                }
            }
        }
        (v, g)
    }
}

impl MatrixPotential for ExternalFieldModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[Vec3]) -> DMatrix<f64> {
        x.iter().fold(DMatrix::zeros(self.d, self.d), |acc, xn| acc + self.field(xn).0)
    }

    fn eval_part(&self, x: &[Vec3], n: usize) -> DMatrix<f64> {
        self.field(&x[n]).0
    }

    fn eval_deriv(&self, x: &[Vec3], i: usize) -> DMatrix<f64> {
        let [g0, g1, g2] = self.field(&x[i / 3]).1;
        [g0, g1, g2].into_iter().nth(i % 3).expect("component below 3")
    }

    fn eval_part_deriv(&self, x: &[Vec3], n: usize, i: usize) -> DMatrix<f64> {
        if i / 3 == n {
            self.eval_deriv(x, i)
        } else {
            DMatrix::zeros(self.d, self.d)
        }
    }
}

/// Eigen-decomposition of `V(x)` with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    pub lambdas: DVector<f64>,
    /// Orthogonal; column `k` is `Ψ_k`.
    pub psi: DMatrix<f64>,
    pub gap_min: f64,
}

impl EigenData {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// Flips column signs to maximize overlap with `reference`; used to keep
    /// eigenvectors continuous along a path.
    pub fn align_to(&mut self, reference: &DMatrix<f64>) {
        for k in 0..self.dim() {
            if self.psi.column(k).dot(&reference.column(k)) < 0.0 {
                self.psi.column_mut(k).neg_mut();
            }
        }
    }
}

/// Sorted eigenpairs; each eigenvector's largest-magnitude entry is made
/// positive. Fails when two eigenvalues are closer than [`GAP_TOL`].
pub fn eigendecompose(v: &DMatrix<f64>) -> Result<EigenData> {
    let d = v.nrows();
    if d == 0 || v.ncols() != d {
        return Err(Error::DimensionMismatch(format!("{}x{} potential matrix", v.nrows(), v.ncols())));
    }
    let eig = SymmetricEigen::new(v.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambdas = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut psi = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let src = eig.eigenvectors.column(k);
        let big = src.iter().copied().fold(0.0, |m: f64, a| if a.abs() > m.abs() { a } else { m });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        psi.set_column(col, &(src * sign));
    }
    let mut gap_min = f64::INFINITY;
    for k in 1..d {
        let gap = lambdas[k] - lambdas[k - 1];
        if gap < GAP_TOL {
            return Err(Error::DegenerateSpectrum { index: k - 1, gap });
        }
        gap_min = gap_min.min(gap);
    }
    Ok(EigenData { lambdas, psi, gap_min })
}

/// First-order eigenvector sensitivity to a perturbation `dv`:
/// column `k` is `Σ_{ℓ≠k} Ψ_ℓ (Ψ_ℓᵀ dv Ψ_k)/(λ_k − λ_ℓ)`.
pub fn eigenvector_derivative_from(eig: &EigenData, dv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = eig.dim();
    let coupling = eig.psi.transpose() * dv * &eig.psi;
    let mut coeff = DMatrix::zeros(d, d);
    for k in 0..d {
        for l in (0..d).filter(|&l| l != k) {
            let gap = eig.lambdas[k] - eig.lambdas[l];
            if gap.abs() < GAP_TOL {
                return Err(Error::DegenerateSpectrum { index: k.min(l), gap: gap.abs() });
            }
            coeff[(l, k)] = coupling[(l, k)] / gap;
        }
    }
    Ok(&eig.psi * coeff)
}

/// `∂Ψ/∂x_i`.
pub fn eigenvector_derivative(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    eig: &EigenData,
    i: usize,
) -> Result<DMatrix<f64>> {
    eigenvector_derivative_from(eig, &pot.eval_deriv(x, i))
}

/// `λ_k^n = Ψ_kᵀ V^n Ψ_k`, stored as an `N × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePartition {
    pub per_particle: DMatrix<f64>,
}

impl SurfacePartition {
    /// `Σ_n λ_k^n`.
    pub fn total(&self, k: usize) -> f64 {
        self.per_particle.column(k).sum()
    }
}

pub fn surface_partition(pot: &dyn MatrixPotential, x: &[Vec3], eig: &EigenData) -> SurfacePartition {
    let n = x.len();
    let d = eig.dim();
    let mut per = DMatrix::zeros(n, d);
    for p in 0..n {
        let vn = pot.eval_part(x, p);
        for k in 0..d {
            let psi = eig.psi.column(k);
            per[(p, k)] = psi.dot(&(&vn * psi));
        }
    }
    SurfacePartition { per_particle: per }
}

/// Hellmann–Feynman gradient `∂_iλ_k = Ψ_kᵀ ∂_iV Ψ_k`.
pub fn surface_gradient(pot: &dyn MatrixPotential, x: &[Vec3], eig: &EigenData, k: usize) -> Vec<Vec3> {
    let psi = eig.psi.column(k);
    let derivs = pot.eval_derivs(x);
    (0..x.len())
        .map(|p| Vec3::from_fn(|c, _| psi.dot(&(&derivs[3 * p + c] * psi))))
        .collect()
}

/// `∇λ_k^n`, the gradient of particle `n`'s share, over all coordinates.
pub fn per_particle_gradient(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    eig: &EigenData,
    k: usize,
    n: usize,
) -> Result<Vec<Vec3>> {
    let all = per_particle_gradients(pot, x, eig, k)?;
    Ok(all.into_iter().nth(n).expect("particle index in range"))
}

/// `∇_{x^m} λ_k^n` for all `n` (outer) and `m` (inner):
/// `∂_iλ_k^n = 2 Ψ_kᵀ V^n ∂_iΨ_k + Ψ_kᵀ ∂_iV^n Ψ_k`.
pub fn per_particle_gradients(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    eig: &EigenData,
    k: usize,
) -> Result<Vec<Vec<Vec3>>> {
    let n = x.len();
    let psi = eig.psi.column(k).into_owned();
    let derivs = pot.eval_derivs(x);
    let part_derivs = pot.eval_part_derivs(x);
    let dpsi: Vec<DVector<f64>> = if eig.dim() > 1 {
        derivs
            .iter()
            .map(|dv| eigenvector_derivative_from(eig, dv).map(|m| m.column(k).into_owned()))
            .collect::<Result<_>>()?
    } else {
        alloc::vec![DVector::zeros(1); 3 * n]
    };
    let mut out = alloc::vec![alloc::vec![Vec3::zeros(); n]; n];
    for (p, row) in out.iter_mut().enumerate() {
        let vn_psi = pot.eval_part(x, p) * &psi;
        for (m, g) in row.iter_mut().enumerate() {
            for c in 0..3 {
                let i = 3 * m + c;
                g[c] = 2.0 * vn_psi.dot(&dpsi[i]) + psi.dot(&(&part_derivs[p][i] * &psi));
            }
        }
    }
    Ok(out)
}
