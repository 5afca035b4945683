//! Scalars carrying their gradient with respect to the probe point `y`.
//!
//! Field estimators are written once in terms of [`Dual3`]; the divergence
//! of any flux then comes out exactly instead of by differencing in `y`.

use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual3 {
    pub value: f64,
    pub grad: Vec3,
}

impl Dual3 {
    pub const ZERO: Dual3 = Dual3 { value: 0.0, grad: Vec3::new(0.0, 0.0, 0.0) };

    pub fn new(value: f64, grad: Vec3) -> Self {
        Dual3 { value, grad }
    }

    pub fn constant(value: f64) -> Self {
        Dual3 { value, grad: Vec3::zeros() }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.value;
        Dual3 { value: inv, grad: -self.grad * (inv * inv) }
    }

    pub fn scale(self, s: f64) -> Self {
        Dual3 { value: self.value * s, grad: self.grad * s }
    }
}

impl From<f64> for Dual3 {
    fn from(v: f64) -> Self {
        Dual3::constant(v)
    }
}

impl Add for Dual3 {
    type Output = Dual3;
    fn add(self, o: Dual3) -> Dual3 {
        Dual3 { value: self.value + o.value, grad: self.grad + o.grad }
    }
}

impl Sub for Dual3 {
    type Output = Dual3;
    fn sub(self, o: Dual3) -> Dual3 {
        Dual3 { value: self.value - o.value, grad: self.grad - o.grad }
    }
}

impl Mul for Dual3 {
    type Output = Dual3;
    fn mul(self, o: Dual3) -> Dual3 {
        Dual3 { value: self.value * o.value, grad: self.grad * o.value + o.grad * self.value }
    }
}

impl Div for Dual3 {
    type Output = Dual3;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Dual3) -> Dual3 {
        self * o.recip()
    }
}

impl Mul<f64> for Dual3 {
    type Output = Dual3;
    fn mul(self, s: f64) -> Dual3 {
        self.scale(s)
    }
}

impl Neg for Dual3 {
    type Output = Dual3;
    fn neg(self) -> Dual3 {
        Dual3 { value: -self.value, grad: -self.grad }
    }
}

impl AddAssign for Dual3 {
    fn add_assign(&mut self, o: Dual3) {
        self.value += o.value;
        self.grad += o.grad;
    }
}

impl SubAssign for Dual3 {
    fn sub_assign(&mut self, o: Dual3) {
        self.value -= o.value;
        self.grad -= o.grad;
    }
}

impl MulAssign<f64> for Dual3 {
    fn mul_assign(&mut self, s: f64) {
        self.value *= s;
        self.grad *= s;
    }
}

/// A 3-vector of [`Dual3`]; component `i` carries `∂_y` of itself.
pub type DualVec = [Dual3; 3];
/// Row-major 3×3 tensor of [`Dual3`].
pub type DualMat = [[Dual3; 3]; 3];

pub const DUAL_VEC_ZERO: DualVec = [Dual3::ZERO; 3];
pub const DUAL_MAT_ZERO: DualMat = [[Dual3::ZERO; 3]; 3];

/// `Σ_ℓ ∂_{y_ℓ} f_ℓ`.
pub fn divergence(f: &DualVec) -> f64 {
    f[0].grad[0] + f[1].grad[1] + f[2].grad[2]
}

/// Row divergence `Σ_ℓ ∂_{y_ℓ} t[ℓ][j]`, returned per column `j`.
pub fn divergence_rows(t: &DualMat) -> Vec3 {
    let mut out = Vec3::zeros();
    for j in 0..3 {
        for (l, row) in t.iter().enumerate() {
            out[j] += row[j].grad[l];
        }
    }
    out
}

pub fn values(v: &DualVec) -> Vec3 {
    Vec3::new(v[0].value, v[1].value, v[2].value)
}

pub fn mat_values(t: &DualMat) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::from_fn(|i, j| t[i][j].value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_rule() {
        let a = Dual3::new(2.0, Vec3::new(1.0, 0.0, -1.0));
        let b = Dual3::new(4.0, Vec3::new(0.5, 2.0, 0.0));
        let q = a / b;
        assert!((q.value - 0.5).abs() < 1e-15);
        let expect = (a.grad * b.value - b.grad * a.value) / (b.value * b.value);
        assert!((q.grad - expect).norm() < 1e-15);
    }
}
