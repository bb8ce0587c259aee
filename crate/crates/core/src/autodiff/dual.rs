use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::scalar::{Real, Scalar};

/// First-order dual number `value + deriv·ε` with `ε² = 0`.
///
/// Generic over any [`Scalar`], so `Dual<Dual<f64>>` carries second
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<S> {
    pub value: S,
    pub deriv: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(value: S, deriv: S) -> Self {
        Dual { value, deriv }
    }

    /// A seeded variable: derivative part one.
    pub fn variable(value: S) -> Self {
        Dual {
            value,
            deriv: S::one(),
        }
    }

    pub fn constant(value: S) -> Self {
        Dual {
            value,
            deriv: S::zero(),
        }
    }

    // f(v + dε) = f(v) + f'(v)·d ε
    #[inline]
    fn chain(self, fv: S, dfv: S) -> Self {
        Dual {
            value: fv,
            deriv: dfv * self.deriv,
        }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual {
            value: self.value + rhs.value,
            deriv: self.deriv + rhs.deriv,
        }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual {
            value: self.value - rhs.value,
            deriv: self.deriv - rhs.deriv,
        }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual {
            value: self.value * rhs.value,
            deriv: self.value * rhs.deriv + self.deriv * rhs.value,
        }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.value.recip();
        let value = self.value * inv;
        Dual {
            value,
            deriv: (self.deriv - value * rhs.deriv) * inv,
        }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    type Real = S::Real;

    #[inline]
    fn cst(v: S::Real) -> Self {
        Dual::constant(S::cst(v))
    }

    #[inline]
    fn value(&self) -> S::Real {
        self.value.value()
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, (s + s).recip())
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        self.chain(self.value.ln(), self.value.recip())
    }

    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            _ => {
                let lower = self.value.powi(n - 1);
                self.chain(
                    lower * self.value,
                    lower.scale(<S::Real as Real>::lit(n as f64)),
                )
            }
        }
    }

    fn powf(self, p: S::Real) -> Self {
        let lower = self.value.powf(p - num_traits::One::one());
        self.chain(lower * self.value, lower.scale(p))
    }

    fn recip(self) -> Self {
        let inv = self.value.recip();
        self.chain(inv, -(inv * inv))
    }
}
