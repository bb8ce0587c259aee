//! Scalar abstractions.
//!
//! [`Real`] is the floating-point base type (`f32` or `f64`) every model is
//! parameterized over. [`Scalar`] is anything a smooth map can be evaluated on:
//! the base reals themselves, first-order [`Dual`](crate::Dual) numbers and
//! the nested [`Jet`](crate::Jet) numbers used for repeated Lie derivatives.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point base type: f32 or f64
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A number system closed under the arithmetic and elementary functions used
/// by smooth maps.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    type Real: Real;

    /// Lifts a constant (all derivative parts zero).
    fn cst(v: Self::Real) -> Self;

    /// The value component.
    fn value(&self) -> Self::Real;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: Self::Real) -> Self;
    fn recip(self) -> Self;

    fn lit(v: f64) -> Self {
        Self::cst(<Self::Real as Real>::lit(v))
    }

    fn zero() -> Self {
        Self::cst(<Self::Real as num_traits::Zero>::zero())
    }

    fn one() -> Self {
        Self::cst(<Self::Real as num_traits::One>::one())
    }

    fn square(self) -> Self {
        self * self
    }

    fn scale(self, k: Self::Real) -> Self {
        self * Self::cst(k)
    }
}

impl<T: Real> Scalar for T {
    type Real = T;

    #[inline]
    fn cst(v: T) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> T {
        *self
    }
    fn sqrt(self) -> Self {
        Float::sqrt(self)
    }
    fn exp(self) -> Self {
        Float::exp(self)
    }
    fn ln(self) -> Self {
        Float::ln(self)
    }
    fn sin(self) -> Self {
        Float::sin(self)
    }
    fn cos(self) -> Self {
        Float::cos(self)
    }
    fn powi(self, n: i32) -> Self {
        Float::powi(self, n)
    }
    fn powf(self, p: T) -> Self {
        Float::powf(self, p)
    }
    fn recip(self) -> Self {
        Float::recip(self)
    }
}

/// Euclidean norm of a real vector.
pub fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&a| a * a).sum::<T>().sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean distance between two points.
pub fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}
