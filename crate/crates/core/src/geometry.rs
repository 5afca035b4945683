//! Pair-distance coordinates.
//!
//! Pairs are always ordered lexicographically, `(0,1), (0,2), …, (0,N-1),
//! (1,2), …, (N-2,N-1)`, and every module indexes them through
//! [`pair_index`].

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, SVD};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, Vec3};

/// Relative singular-value cutoff of the pseudoinverse used by
/// [`lift_gradient_to_distances`].
pub const SVD_CUTOFF: f64 = 1e-10;

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of pair `(i, j)`, `i < j`, among `n` particles.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Pairs in canonical order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// One real value per particle pair, in canonical order. Holds both pair
/// distances `r` and pair derivatives `∂_r λ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVector {
    n: usize,
    values: Vec<f64>,
}

impl PairVector {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != pair_count(n) {
            return Err(Error::DimensionMismatch(format!(
                "{} pair values for {} particles",
                values.len(),
                n
            )));
        }
        Ok(PairVector { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        PairVector { n, values: alloc::vec![0.0; pair_count(n)] }
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    /// Value for the unordered pair `{i, j}`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.values[pair_index(a, b, self.n)]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for PairVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for PairVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

pub fn pair_distances(x: &[Vec3]) -> PairVector {
    let n = x.len();
    let values = pairs(n).map(|(i, j)| (x[i] - x[j]).norm()).collect();
    PairVector { n, values }
}

/// `∇_{x^n} |x^n − x^k| = (x^n − x^k)/|x^n − x^k|`.
pub fn pair_direction_derivative(x: &[Vec3], n: usize, k: usize) -> Result<Vec3> {
    let d = x[n] - x[k];
    let r = d.norm();
    if n == k || r == 0.0 {
        return Err(Error::CoincidentPoints(n.min(k), n.max(k)));
    }
    Ok(d / r)
}

/// `∂r/∂x` as a `P × 3N` matrix.
pub fn distance_jacobian(x: &[Vec3]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(pair_count(n), 3 * n);
    for (row, (i, j)) in pairs(n).enumerate() {
        let e = pair_direction_derivative(x, i, j)?;
        for c in 0..3 {
            jac[(row, 3 * i + c)] = e[c];
            jac[(row, 3 * j + c)] = -e[c];
        }
    }
    Ok(jac)
}

/// Minimal-norm solution `v` of `(∂r/∂x)^T v = g`.
///
/// The system is underdetermined and, because of rigid-motion invariance,
/// rank deficient; the pseudoinverse drops singular values below
/// `SVD_CUTOFF · σ_max`. Fails when `g` is not reproduced, i.e. it was not
/// the gradient of an invariant function.
pub fn lift_gradient_to_distances(x: &[Vec3], g: &[Vec3]) -> Result<PairVector> {
    let n = x.len();
    if g.len() != n {
        return Err(Error::DimensionMismatch(format!("{} gradients for {} particles", g.len(), n)));
    }
    let a = distance_jacobian(x)?.transpose();
    let b = DVector::from_iterator(3 * n, g.iter().flat_map(|v| v.iter().copied()));
    let gnorm = b.norm();
    if gnorm == 0.0 || n < 2 {
        return Ok(PairVector::zeros(n));
    }
    let v = pseudo_solve(&a, &b);
    let residual = (&a * &v - &b).norm();
    let bound = 1e-10 * gnorm.max(1.0);
    if residual > bound {
        return Err(Error::ResidualTooLarge { residual, bound });
    }
    Ok(PairVector { n, values: v.iter().copied().collect() })
}

/// Minimal-norm least-squares solution of `a v = b`.
///
/// Identically zero rows and columns (collinear and planar geometries) are
/// dropped first and the decomposition is taken of the orientation with no
/// more rows than columns; nalgebra's bidiagonalization loses accuracy on
/// these sparse Jacobians otherwise.
const REFINE_STEPS: usize = 3;

fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let rows: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).iter().any(|v| *v != 0.0)).collect();
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| a.column(j).iter().any(|v| *v != 0.0)).collect();
    let mut out = DVector::zeros(a.ncols());
    if rows.is_empty() || cols.is_empty() {
        return out;
    }
    let sub = a.select_rows(&rows).select_columns(&cols);
    let rhs = b.select_rows(&rows);
    let wide = sub.nrows() <= sub.ncols();
    let svd = SVD::new(if wide { sub.clone() } else { sub.transpose() }, true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = SVD_CUTOFF * smax;
    let inv = svd.singular_values.map(|s| if s > cut { 1.0 / s } else { 0.0 });
    let apply = |r: &DVector<f64>| {
        if wide {
            // sub = U S Vᵀ
            vt.transpose() * (u.transpose() * r).component_mul(&inv)
        } else {
            // sub = V S Uᵀ
            u * (vt * r).component_mul(&inv)
        }
    };
    let mut v = apply(&rhs);
    // iterative refinement against the inexact factorization
    for _ in 0..REFINE_STEPS {
        let r = &rhs - &sub * &v;
        v += apply(&r);
    }
    for (k, &j) in cols.iter().enumerate() {
        out[j] = v[k];
    }
    out
}

/// `(∂r/∂x)^T v`, the Cartesian gradient belonging to pair derivatives `v`.
pub fn chain_rule(x: &[Vec3], v: &PairVector) -> Result<Vec<Vec3>> {
    let n = x.len();
    let mut g = alloc::vec![Vec3::zeros(); n];
    for ((i, j), vij) in pairs(n).zip(v.iter()) {
        let e = pair_direction_derivative(x, i, j)?;
        g[i] += e * *vij;
        g[j] -= e * *vij;
    }
    Ok(g)
}

/// Positions realizing the pair distances `r`, by classical
/// multidimensional scaling truncated to rank three.
pub fn reconstruct_positions(r: &PairVector) -> Result<Vec<Vec3>> {
    let n = r.particles();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d2 = DMatrix::zeros(n, n);
    for (i, j) in pairs(n) {
        let v = r.get(i, j).powi(2);
        d2[(i, j)] = v;
        d2[(j, i)] = v;
    }
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let gram = (&centering * d2 * &centering) * -0.5;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let tol = 1e-8 * top.abs().max(1.0);
    let bottom = eig.eigenvalues[order[n - 1]];
    if bottom < -tol {
        return Err(Error::NotRealizable(format!("Gram matrix eigenvalue {bottom:e} < 0")));
    }
    if n > 3 && eig.eigenvalues[order[3]] > tol {
        return Err(Error::NotRealizable(format!(
            "embedding needs rank > 3 (fourth eigenvalue {:e})",
            eig.eigenvalues[order[3]]
        )));
    }
    let mut out = alloc::vec![Vec3::zeros(); n];
    for (c, &k) in order.iter().take(3).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        for (i, p) in out.iter_mut().enumerate() {
            p[c] = eig.eigenvectors[(i, k)] * scale;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidAlignment {
    /// Orthogonal; `det = -1` when a reflection fits better.
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    /// Root-mean-square of `x^i − Q y^i − α`.
    pub rms: f64,
}

/// Least-squares `(Q, α) ∈ O(3) × ℝ³` with `x^i ≈ Q y^i + α` (Kabsch
/// without the determinant correction).
pub fn align_rigid(x: &[Vec3], y: &[Vec3]) -> Result<RigidAlignment> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} points", x.len(), y.len())));
    }
    let n = x.len().max(1) as f64;
    let cx = x.iter().fold(Vec3::zeros(), |a, b| a + b) / n;
    let cy = y.iter().fold(Vec3::zeros(), |a, b| a + b) / n;
    let mut h = Matrix3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += (b - cy) * (a - cx).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let rotation = vt.transpose() * u.transpose();
    let translation = cx - rotation * cy;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - rotation * b - translation).norm_squared()).sum();
    Ok(RigidAlignment { rotation, translation, rms: (ss / n).sqrt() })
}
