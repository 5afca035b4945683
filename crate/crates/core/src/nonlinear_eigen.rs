//! Mass-corrected adiabatic surfaces: the self-consistent solution of
//! `(V + (1/4M) Ψ ∇Ψᵀ·∇Ψ Ψᵀ) Ψ = Ψ Λ̄`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::potential::{eigendecompose, eigenvector_derivative_from, EigenData, MatrixPotential};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max change of `Λ̄` between iterations.
    pub tol: f64,
    /// Smallest accepted mass.
    pub mass_min: f64,
    /// Residual bound relative to `‖V‖`.
    pub residual_rel: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 50, tol: 1e-12, mass_min: 10.0, residual_rel: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSurfaces {
    pub lambdas_bar: DVector<f64>,
    pub psi_bar: DMatrix<f64>,
    /// `λ̄_k^n`, `N × d`.
    pub per_particle_bar: DMatrix<f64>,
    pub mass: f64,
    /// `‖(V + B/4M)Ψ − ΨΛ̄‖` (Frobenius).
    pub residual_norm: f64,
    pub iterations: usize,
    /// Uncorrected eigenvalues of `V(x)`.
    pub lambdas: DVector<f64>,
}

impl CorrectedSurfaces {
    pub fn dim(&self) -> usize {
        self.lambdas_bar.len()
    }
}

/// `∂_iΨ` for every coordinate, from the eigenpairs `eig` of the effective
/// matrix perturbed by `∂_iV`.
fn psi_derivatives(eig: &EigenData, dv: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    dv.iter().map(|d| eigenvector_derivative_from(eig, d)).collect()
}

/// `G = Σ_i ∂_iΨᵀ ∂_iΨ` over the given coordinates.
fn gram(dpsi: &[DMatrix<f64>], d: usize, coords: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    for i in coords {
        g += dpsi[i].transpose() * &dpsi[i];
    }
    g
}

pub fn solve_nonlinear_eigen(pot: &dyn MatrixPotential, x: &[Vec3], mass: f64) -> Result<CorrectedSurfaces> {
    solve_with(pot, x, mass, &SolverOptions::default())
}

/// Fixed-point iteration: diagonalize `V + B(Ψ)/4M`, rebuild `B` from the
/// new eigenpairs, repeat until `Λ̄` settles.
pub fn solve_with(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    mass: f64,
    opts: &SolverOptions,
) -> Result<CorrectedSurfaces> {
    if !(mass >= opts.mass_min) || !mass.is_finite() {
        return Err(Error::invalid("mass", alloc::format!("must be at least {}", opts.mass_min)));
    }
    let d = pot.dim();
    let v = pot.eval(x);
    let dv = pot.eval_derivs(x);
    let base = eigendecompose(&v)?;
    let eps = 0.25 / mass;
    let mut eig = base.clone();
    let mut dpsi = psi_derivatives(&eig, &dv)?;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        if iterations >= opts.max_iter {
            let next = effective_eigen(&v, &eig, &dpsi, eps)?;
            let change = (&next.lambdas - &eig.lambdas).amax();
            return Err(Error::NoConvergence { iterations, change });
        }
        iterations += 1;
        let mut next = effective_eigen(&v, &eig, &dpsi, eps)?;
        next.align_to(&eig.psi);
        let change = (&next.lambdas - &eig.lambdas).amax();
        eig = next;
        dpsi = psi_derivatives(&eig, &dv)?;
        // one extra sweep after convergence keeps Λ̄(x) smooth to roundoff,
        // which finite-difference forces rely on
        if converged || (change <= opts.tol && iterations >= opts.max_iter) {
            break;
        }
        converged = change <= opts.tol;
    }
    let g = gram(&dpsi, d, 0..dv.len());
    let b = &eig.psi * &g * eig.psi.transpose();
    let w = &v + b * eps;
    let per_particle_bar = partition_from(pot, x, &eig, &dpsi, eps);
    // Rayleigh quotients of the final effective matrix; they equal the
    // partition sums exactly
    for k in 0..d {
        eig.lambdas[k] = per_particle_bar.column(k).sum();
    }
    let lambda_bar = DMatrix::from_diagonal(&eig.lambdas);
    let residual_norm = (&w * &eig.psi - &eig.psi * lambda_bar).norm();
    let bound = opts.residual_rel * v.norm();
    if residual_norm > bound && residual_norm > 1e-300 {
        return Err(Error::ResidualTooLarge { residual: residual_norm, bound });
    }
    Ok(CorrectedSurfaces {
        lambdas_bar: eig.lambdas,
        psi_bar: eig.psi,
        per_particle_bar,
        mass,
        residual_norm,
        iterations,
        lambdas: base.lambdas,
    })
}

fn effective_eigen(v: &DMatrix<f64>, eig: &EigenData, dpsi: &[DMatrix<f64>], eps: f64) -> Result<EigenData> {
    let g = gram(dpsi, eig.dim(), 0..dpsi.len());
    eigendecompose(&(v + &eig.psi * g * eig.psi.transpose() * eps))
}

fn partition_from(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    eig: &EigenData,
    dpsi: &[DMatrix<f64>],
    eps: f64,
) -> DMatrix<f64> {
    let d = eig.dim();
    let mut out = DMatrix::zeros(x.len(), d);
    for n in 0..x.len() {
        let vn = pot.eval_part(x, n);
        for k in 0..d {
            let psi = eig.psi.column(k);
            let corr: f64 = (3 * n..3 * n + 3).map(|i| dpsi[i].column(k).norm_squared()).sum();
            out[(n, k)] = psi.dot(&(&vn * psi)) + eps * corr;
        }
    }
    out
}

/// `λ̄_k^n` with `∂Ψ` recomputed from the converged eigenpairs.
pub fn corrected_partition(cs: &CorrectedSurfaces, pot: &dyn MatrixPotential, x: &[Vec3]) -> Result<DMatrix<f64>> {
    let eig = EigenData { lambdas: cs.lambdas_bar.clone(), psi: cs.psi_bar.clone(), gap_min: 0.0 };
    let dpsi = psi_derivatives(&eig, &pot.eval_derivs(x))?;
    Ok(partition_from(pot, x, &eig, &dpsi, 0.25 / cs.mass))
}

/// `λ̄_k^n` with caller-supplied `∂_iΨ` (one matrix per flat coordinate).
pub fn corrected_partition_with(
    cs: &CorrectedSurfaces,
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    dpsi: &[DMatrix<f64>],
) -> DMatrix<f64> {
    let eig = EigenData { lambdas: cs.lambdas_bar.clone(), psi: cs.psi_bar.clone(), gap_min: 0.0 };
    partition_from(pot, x, &eig, dpsi, 0.25 / cs.mass)
}

/// Integrates the ε-flow of the eigenpairs from `ε = 0` to `1/4M` with
/// `steps` RK4 steps. `∂Ψ` is recomputed from the current eigenpairs at
/// every stage.
pub fn solve_continuation(
    pot: &dyn MatrixPotential,
    x: &[Vec3],
    mass: f64,
    steps: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(mass > 0.0) || steps == 0 {
        return Err(Error::invalid("mass", "mass and step count must be positive"));
    }
    let dv = pot.eval_derivs(x);
    let base = eigendecompose(&pot.eval(x))?;
    let d = base.dim();
    let rhs = |lam: &DVector<f64>, psi: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eig = EigenData { lambdas: lam.clone(), psi: psi.clone(), gap_min: 0.0 };
        let dpsi = psi_derivatives(&eig, &dv)?;
        let g = gram(&dpsi, d, 0..dv.len());
        let dlam = g.diagonal();
        let mut coeff = DMatrix::zeros(d, d);
        for k in 0..d {
            for l in (0..d).filter(|&l| l != k) {
                let gap = lam[k] - lam[l];
                if gap.abs() < crate::potential::GAP_TOL {
                    return Err(Error::DegenerateSpectrum { index: k.min(l), gap: gap.abs() });
                }
                coeff[(l, k)] = g[(l, k)] / gap;
            }
        }
        Ok((dlam, psi * coeff))
    };
    let h = 0.25 / mass / steps as f64;
    let mut lam = base.lambdas;
    let mut psi = base.psi;
    for _ in 0..steps {
        let (l1, p1) = rhs(&lam, &psi)?;
        let (l2, p2) = rhs(&(&lam + &l1 * (0.5 * h)), &(&psi + &p1 * (0.5 * h)))?;
        let (l3, p3) = rhs(&(&lam + &l2 * (0.5 * h)), &(&psi + &p2 * (0.5 * h)))?;
        let (l4, p4) = rhs(&(&lam + &l3 * h), &(&psi + &p3 * h))?;
        lam += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        psi += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
    }
    Ok((lam, psi))
}
