//! Compactly supported smoothing kernel and its line integrals.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dual::Dual3;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, Vec3};

/// Absolute tolerance of [`Mollifier::bond_integral`].
pub const BOND_TOLERANCE: f64 = 1e-12;
const BOND_POINTS: usize = 16;
const MAX_DEPTH: u32 = 40;

/// `η(y) = C ε⁻³ exp(−1/(1 − |y/ε|²))` inside the ball of radius `ε`,
/// zero outside, normalized to unit integral.
#[derive(Debug, Clone)]
pub struct Mollifier {
    epsilon: f64,
    /// `C ε⁻³`
    prefactor: f64,
    rule: GaussLegendre,
}

/// `∫_{|u|<1} exp(−1/(1−|u|²)) du` by composite radial Gauss–Legendre.
pub fn unit_bump_integral() -> f64 {
    let gl = GaussLegendre::new(BOND_POINTS);
    let panels = 64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 / panels as f64;
        let b = (k + 1) as f64 / panels as f64;
        total += gl.integrate(a, b, |r| r * r * bump(r * r));
    }
    4.0 * PI * total
}

fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", "must be positive and finite"));
        }
        let c = 1.0 / unit_bump_integral();
        Ok(Mollifier { epsilon, prefactor: c / epsilon.powi(3), rule: GaussLegendre::new(BOND_POINTS) })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, y: &Vec3) -> f64 {
        let s = y.norm_squared() / (self.epsilon * self.epsilon);
        if s >= 1.0 {
            return 0.0;
        }
        self.prefactor * bump(s)
    }

    pub fn grad(&self, y: &Vec3) -> Vec3 {
        self.eval_dual(y).grad
    }

    /// `η(y)` together with `∇η(y)`.
    pub fn eval_dual(&self, y: &Vec3) -> Dual3 {
        let e2 = self.epsilon * self.epsilon;
        let s = y.norm_squared() / e2;
        if s >= 1.0 {
            return Dual3::ZERO;
        }
        let v = self.prefactor * bump(s);
        let w = 1.0 - s;
        Dual3::new(v, y * (-2.0 * v / (e2 * w * w)))
    }

    /// `∫₀¹ η(y − s a − (1−s) b) ds` and its gradient in `y`.
    pub fn bond_integral(&self, y: &Vec3, a: &Vec3, b: &Vec3) -> Dual3 {
        let c = y - b;
        let d = a - b;
        let dd = d.norm_squared();
        let e2 = self.epsilon * self.epsilon;
        if dd == 0.0 {
            return self.eval_dual(&c);
        }
        // |c − s d|² < ε² on an interval of s
        let cd = c.dot(&d);
        let disc = cd * cd - dd * (c.norm_squared() - e2);
        if disc <= 0.0 {
            return Dual3::ZERO;
        }
        let root = disc.sqrt();
        let lo = ((cd - root) / dd).max(0.0);
        let hi = ((cd + root) / dd).min(1.0);
        if lo >= hi {
            return Dual3::ZERO;
        }
        let f = |s: f64| self.eval_dual(&(c - d * s));
        let whole = self.segment(&f, lo, hi);
        self.adaptive(&f, lo, hi, whole, BOND_TOLERANCE, 0)
    }

    fn segment<F: Fn(f64) -> Dual3>(&self, f: &F, a: f64, b: f64) -> Dual3 {
        let mut acc = Dual3::ZERO;
        for (s, w) in self.rule.mapped(a, b) {
            acc += f(s) * w;
        }
        acc
    }

    fn adaptive<F: Fn(f64) -> Dual3>(&self, f: &F, a: f64, b: f64, whole: Dual3, tol: f64, depth: u32) -> Dual3 {
        let m = 0.5 * (a + b);
        let left = self.segment(f, a, m);
        let right = self.segment(f, m, b);
        let both = left + right;
        let err = (both.value - whole.value).abs() + (both.grad - whole.grad).amax();
        if err <= tol || depth >= MAX_DEPTH {
            return both;
        }
        self.adaptive(f, a, m, left, 0.5 * tol, depth + 1) + self.adaptive(f, m, b, right, 0.5 * tol, depth + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_outside_support() {
        let m = Mollifier::new(0.7).unwrap();
        let y = Vec3::new(1.5 * 0.7, 0.0, 0.0);
        assert_eq!(m.eval(&y), 0.0);
        assert_eq!(m.grad(&y), Vec3::zeros());
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(Mollifier::new(-1.0).is_err());
        assert!(Mollifier::new(0.0).is_err());
    }

    #[test]
    fn degenerate_bond_is_point_value() {
        let m = Mollifier::new(1.0).unwrap();
        let a = Vec3::new(0.2, -0.1, 0.3);
        let y = Vec3::new(0.1, 0.1, 0.1);
        let b = m.bond_integral(&y, &a, &a);
        assert_eq!(b.value, m.eval(&(y - a)));
    }

    #[test]
    fn far_bond_is_zero() {
        let m = Mollifier::new(0.5).unwrap();
        let b = m.bond_integral(&Vec3::new(0.0, 3.0, 0.0), &Vec3::zeros(), &Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(b, Dual3::ZERO);
    }
}
