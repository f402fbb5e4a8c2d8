//! Scalar abstraction for the network math. Forward and backward passes are
//! written once, generic over `Scalar`; instantiating with `Dual` turns the
//! hand-written gradient into an exact Hessian-vector product (forward mode
//! over reverse mode), which the second-order meta update needs.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Lifts a plain constant; its tangent is zero.
    fn c(v: f64) -> Self;
    /// Value part, tangent discarded.
    fn v(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn c(v: f64) -> f64 {
        v
    }
    #[inline]
    fn v(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> f64 {
        1.0 / (1.0 + f64::exp(-self))
    }
}

/// Value plus directional derivative along one fixed tangent direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub fn var(v: f64, t: f64) -> Dual {
        Dual { v, t }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, t: self.t + o.t }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, t: self.t - o.t }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, t: self.t * o.v + self.v * o.t }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, t: (self.t * o.v - self.v * o.t) / (o.v * o.v) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual { v: -self.v, t: -self.t }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        *self = *self - o;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Scalar for Dual {
    #[inline]
    fn c(v: f64) -> Dual {
        Dual { v, t: 0.0 }
    }
    #[inline]
    fn v(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Dual {
        let e = self.v.exp();
        Dual { v: e, t: self.t * e }
    }
    #[inline]
    fn ln(self) -> Dual {
        Dual { v: self.v.ln(), t: self.t / self.v }
    }
    #[inline]
    fn tanh(self) -> Dual {
        let th = self.v.tanh();
        Dual { v: th, t: self.t * (1.0 - th * th) }
    }
    #[inline]
    fn sigmoid(self) -> Dual {
        let s = 1.0 / (1.0 + (-self.v).exp());
        Dual { v: s, t: self.t * s * (1.0 - s) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(x) = sigmoid(tanh(x) * x + ln(x)); f'(x) by hand:
    //   g = tanh(x), u = g*x + ln(x), f = sigmoid(u)
    //   u' = (1 - g^2) x + g + 1/x, f' = f (1 - f) u'
    #[test]
    fn dual_matches_hand_derivative() {
        let x = 0.7_f64;
        let d = Dual::var(x, 1.0);
        let f = (d.tanh() * d + d.ln()).sigmoid();
        let g = x.tanh();
        let u = g * x + x.ln();
        let fv = 1.0 / (1.0 + (-u).exp());
        let fp = fv * (1.0 - fv) * ((1.0 - g * g) * x + g + 1.0 / x);
        assert!((f.v - fv).abs() < 1e-15);
        assert!((f.t - fp).abs() < 1e-15);
    }

    #[test]
    fn dual_division_quotient_rule() {
        let a = Dual::var(2.0, 1.0);
        let b = Dual::var(3.0, 0.5);
        let q = a / b;
        assert!((q.v - 2.0 / 3.0).abs() < 1e-15);
        // (a/b)' = (a' b - a b') / b^2 = (3 - 1) / 9
        assert!((q.t - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn constants_have_zero_tangent() {
        let c = Dual::c(5.0);
        let x = Dual::var(1.5, 1.0);
        assert_eq!((c * x).t, 5.0);
        assert_eq!((c + c).t, 0.0);
    }

    #[test]
    fn f64_sigmoid_is_stable_at_extremes() {
        assert_eq!(Scalar::sigmoid(-1000.0_f64), 0.0);
        assert_eq!(Scalar::sigmoid(1000.0_f64), 1.0);
        let s = Scalar::sigmoid(0.0_f64);
        assert!((s - 0.5).abs() < 1e-15);
    }
}
