//! Gauss–Legendre and Gauss–Hermite rules.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

#[allow(unused_imports)]
use num_traits::Float;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// `∫_a^b f` with this rule mapped onto `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// Nodes and weights for `∫ e^{−ξ²} f(ξ) dξ`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigenpairs of the Jacobi matrix of the Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussHermite { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    /// `E[f(X)]` for `X ~ N(mean, sd²)`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut f: F) -> f64 {
        let s = core::f64::consts::SQRT_2 * sd;
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mean + s * x)).sum::<f64>() / PI.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let gl = GaussLegendre::new(16);
        // degree 31 is integrated exactly
        let v = gl.integrate(0.0, 2.0, |x| x.powi(31));
        let exact = 2f64.powi(32) / 32.0;
        assert!((v - exact).abs() / exact < 1e-13);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let gl = GaussLegendre::new(5);
        assert!(gl.nodes[2].abs() < 1e-15);
        assert!((gl.integrate(-1.0, 1.0, |x| x.cos()) - 2.0 * 1f64.sin()).abs() < 2e-9);
    }

    #[test]
    fn hermite_moments() {
        let gh = GaussHermite::new(12);
        let total: f64 = gh.weights.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-13);
        // E[X⁴] = 3σ⁴, E[X⁶] = 15σ⁶
        assert!((gh.expect_normal(0.0, 0.7, |x| x.powi(4)) - 3.0 * 0.7f64.powi(4)).abs() < 1e-13);
        assert!((gh.expect_normal(1.0, 0.5, |x| (x - 1.0).powi(6)) - 15.0 * 0.5f64.powi(6)).abs() < 1e-13);
    }
}
