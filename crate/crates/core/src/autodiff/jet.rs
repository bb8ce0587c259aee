use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::scalar::{Real, Scalar};

/// Maximum number of nilpotent generators a [`Jet`] can carry.
pub const MAX_JET_DEPTH: usize = 4;
const CAPACITY: usize = 1 << MAX_JET_DEPTH;

/// Multi-dual number with a runtime number of independent nilpotent
/// generators `ε₀ … ε_{d−1}` (each `εᵢ² = 0`).
///
/// Coefficient `k` multiplies the product of the generators whose bits are
/// set in `k`. A jet of depth `d+1` is a dual number over jets of depth `d`
/// (generator `d` is the high bit), which makes the type closed under
/// differentiation at a depth chosen at runtime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T> {
    coef: [T; CAPACITY],
    depth: u8,
}

impl<T: Real> Jet<T> {
    pub fn constant(v: T) -> Self {
        let mut coef = [T::zero(); CAPACITY];
        coef[0] = v;
        Jet { coef, depth: 0 }
    }

    /// Builds a jet from explicit coefficients; `coefs.len()` must be `2^depth`.
    pub fn from_coefficients(depth: usize, coefs: &[T]) -> Self {
        assert!(
            depth <= MAX_JET_DEPTH,
            "jet depth {depth} exceeds {MAX_JET_DEPTH}"
        );
        assert_eq!(coefs.len(), 1 << depth);
        let mut coef = [T::zero(); CAPACITY];
        coef[..coefs.len()].copy_from_slice(coefs);
        Jet {
            coef,
            depth: depth as u8,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coef[..1 << self.depth]
    }

    /// Coefficient of the monomial whose generators are the set bits of `mask`.
    pub fn coefficient(&self, mask: usize) -> T {
        if mask < (1 << self.depth) {
            self.coef[mask]
        } else {
            T::zero()
        }
    }

    /// `lower + upper·ε_d` at depth `d + 1`; both parts must have depth ≤ `d`.
    pub fn extend(lower: Self, upper: Self, d: usize) -> Self {
        assert!(
            d < MAX_JET_DEPTH,
            "jet depth {} exceeds {MAX_JET_DEPTH}",
            d + 1
        );
        debug_assert!(lower.depth() <= d && upper.depth() <= d);
        let half = 1 << d;
        let mut coef = [T::zero(); CAPACITY];
        coef[..half].copy_from_slice(&lower.coef[..half]);
        coef[half..2 * half].copy_from_slice(&upper.coef[..half]);
        Jet {
            coef,
            depth: (d + 1) as u8,
        }
    }

    /// Inverse of [`Jet::extend`]: splits off generator `d`, returning the
    /// value part and the coefficient of `ε_d`, both at depth `d`.
    pub fn split(&self, d: usize) -> (Self, Self) {
        let half = 1 << d;
        let mut lower = [T::zero(); CAPACITY];
        let mut upper = [T::zero(); CAPACITY];
        let len = 1 << self.depth.max(d as u8);
        lower[..half].copy_from_slice(&self.coef[..half]);
        if self.depth() > d {
            upper[..half].copy_from_slice(&self.coef[half..len.min(2 * half)]);
        }
        (
            Jet {
                coef: lower,
                depth: d as u8,
            },
            Jet {
                coef: upper,
                depth: d as u8,
            },
        )
    }

    // Σ_{j=0}^{d} taylor[j]·n^j where n is the nilpotent part of self.
    fn compose(self, taylor: &[T]) -> Self {
        let d = self.depth();
        let mut nil = self;
        nil.coef[0] = T::zero();
        let mut acc = Jet::constant(taylor[d]);
        for j in (0..d).rev() {
            acc = acc * nil;
            acc.coef[0] = acc.coef[0] + taylor[j];
        }
        acc.depth = acc.depth.max(self.depth);
        acc
    }

    fn zip_with(self, rhs: Self, op: impl Fn(T, T) -> T) -> Self {
        let depth = self.depth.max(rhs.depth);
        let mut coef = [T::zero(); CAPACITY];
        for (k, c) in coef.iter_mut().enumerate().take(1 << depth) {
            *c = op(self.coef[k], rhs.coef[k]);
        }
        Jet { coef, depth }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let depth = self.depth.max(rhs.depth);
        let mut coef = [T::zero(); CAPACITY];
        // c[S] = Σ_{A ⊆ S} a[A]·b[S∖A]
        for s in 0..(1usize << depth) {
            let mut acc = T::zero();
            let mut a = s;
            loop {
                acc = acc + self.coef[a] * rhs.coef[s ^ a];
                if a == 0 {
                    break;
                }
                a = (a - 1) & s;
            }
            coef[s] = acc;
        }
        Jet { coef, depth }
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for c in self.coef.iter_mut().take(1 << self.depth) {
            *c = -*c;
        }
        self
    }
}

impl<T: Real> AddAssign for Jet<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Jet<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> MulAssign for Jet<T> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

// Taylor coefficients f^(j)(a)/j! for j = 0..=d.
fn falling_power_series<T: Real>(a: T, p: T, d: usize, pow: impl Fn(T, usize) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(d + 1);
    let mut binom = T::one();
    for j in 0..=d {
        out.push(binom * pow(a, j));
        binom = binom * (p - T::lit(j as f64)) / T::lit((j + 1) as f64);
    }
    out
}

impl<T: Real> Scalar for Jet<T> {
    type Real = T;

    fn cst(v: T) -> Self {
        Jet::constant(v)
    }

    fn value(&self) -> T {
        self.coef[0]
    }

    fn sqrt(self) -> Self {
        self.powf(T::lit(0.5))
    }

    fn exp(self) -> Self {
        let e = self.coef[0].exp();
        let mut taylor = Vec::with_capacity(self.depth() + 1);
        let mut fact = T::one();
        for j in 0..=self.depth() {
            if j > 0 {
                fact = fact * T::lit(j as f64);
            }
            taylor.push(e / fact);
        }
        self.compose(&taylor)
    }

    fn ln(self) -> Self {
        let a = self.coef[0];
        let mut taylor = vec![a.ln()];
        for j in 1..=self.depth() {
            let sign = if j % 2 == 1 { T::one() } else { -T::one() };
            taylor.push(sign / (T::lit(j as f64) * a.powi(j as i32)));
        }
        self.compose(&taylor)
    }

    fn sin(self) -> Self {
        let a = self.coef[0];
        let cycle = [a.sin(), a.cos(), -a.sin(), -a.cos()];
        let mut fact = T::one();
        let taylor: Vec<T> = (0..=self.depth())
            .map(|j| {
                if j > 0 {
                    fact = fact * T::lit(j as f64);
                }
                cycle[j % 4] / fact
            })
            .collect();
        self.compose(&taylor)
    }

    fn cos(self) -> Self {
        let a = self.coef[0];
        let cycle = [a.cos(), -a.sin(), -a.cos(), a.sin()];
        let mut fact = T::one();
        let taylor: Vec<T> = (0..=self.depth())
            .map(|j| {
                if j > 0 {
                    fact = fact * T::lit(j as f64);
                }
                cycle[j % 4] / fact
            })
            .collect();
        self.compose(&taylor)
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Jet {
                coef: Jet::constant(T::one()).coef,
                depth: self.depth,
            };
        }
        let a = self.coef[0];
        let taylor = falling_power_series(a, T::lit(n as f64), self.depth(), |a, j| {
            let e = n - j as i32;
            if e == 0 {
                T::one()
            } else {
                a.powi(e)
            }
        });
        self.compose(&taylor)
    }

    fn powf(self, p: T) -> Self {
        let a = self.coef[0];
        let taylor = falling_power_series(a, p, self.depth(), |a, j| a.powf(p - T::lit(j as f64)));
        self.compose(&taylor)
    }

    fn recip(self) -> Self {
        self.powi(-1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;
    use approx::assert_relative_eq;

    fn var(v: f64, gens: &[usize], depth: usize) -> Jet<f64> {
        let mut c = vec![0.0; 1 << depth];
        c[0] = v;
        for &g in gens {
            c[1 << g] = 1.0;
        }
        Jet::from_coefficients(depth, &c)
    }

    #[test]
    fn depth_one_matches_dual() {
        let x = var(0.9, &[0], 1);
        let dx = Dual::variable(0.9);
        let funcs: Vec<(Jet<f64>, Dual<f64>)> = vec![
            (x.sin() * x.exp(), dx.sin() * dx.exp()),
            (x.ln() / x.sqrt(), dx.ln() / dx.sqrt()),
            (x.powf(1.7) - x.cos(), dx.powf(1.7) - dx.cos()),
            (x.powi(-3) + x.recip(), dx.powi(-3) + dx.recip()),
        ];
        for (j, d) in funcs {
            assert_relative_eq!(j.coefficient(0), d.value, epsilon = 1e-14);
            assert_relative_eq!(j.coefficient(1), d.deriv, epsilon = 1e-13);
        }
    }

    #[test]
    fn mixed_partials_of_product() {
        // f(x, y) = x² y³ with x on ε₀ and y on ε₁
        let x = var(1.5, &[0], 2);
        let y = Jet::from_coefficients(2, &[0.5, 0.0, 1.0, 0.0]);
        let f = x.powi(2) * y.powi(3);
        assert_relative_eq!(f.coefficient(0b00), 2.25 * 0.125);
        assert_relative_eq!(f.coefficient(0b01), 2.0 * 1.5 * 0.125);
        assert_relative_eq!(f.coefficient(0b10), 2.25 * 3.0 * 0.25);
        assert_relative_eq!(f.coefficient(0b11), 2.0 * 1.5 * 3.0 * 0.25);
    }

    #[test]
    fn repeated_generators_give_higher_derivatives() {
        // x seeded on three generators: coefficient of ε₀ε₁ε₂ is f'''(x)
        let x0 = 0.4;
        let x = var(x0, &[0, 1, 2], 3);
        let f = x.exp() * x.sin();
        let third = 2.0 * x0.exp() * (x0.cos() - x0.sin());
        assert_relative_eq!(f.coefficient(0b111), third, epsilon = 1e-13);
        let g = x.powf(2.5);
        assert_relative_eq!(
            g.coefficient(0b111),
            2.5 * 1.5 * 0.5 * x0.powf(-0.5),
            epsilon = 1e-12
        );
        let l = x.ln();
        assert_relative_eq!(l.coefficient(0b111), 2.0 / x0.powi(3), epsilon = 1e-11);
        let c = x.cos();
        assert_relative_eq!(c.coefficient(0b011), -x0.cos(), epsilon = 1e-14);
        assert_relative_eq!(c.coefficient(0b111), x0.sin(), epsilon = 1e-14);
    }

    #[test]
    fn extend_and_split_are_inverse() {
        let lower = Jet::from_coefficients(1, &[1.0, 2.0]);
        let upper = Jet::from_coefficients(1, &[3.0, 4.0]);
        let e = Jet::extend(lower, upper, 1);
        assert_eq!(e.coefficients(), &[1.0, 2.0, 3.0, 4.0]);
        let (l, u) = e.split(1);
        assert_eq!(l, lower);
        assert_eq!(u, upper);
    }

    #[test]
    fn constants_broadcast_against_deeper_jets() {
        let x = var(2.0, &[0, 1], 2);
        let y = x * Jet::constant(3.0) + Jet::constant(1.0);
        assert_eq!(y.coefficients(), &[7.0, 3.0, 3.0, 0.0]);
        assert_eq!(Jet::<f64>::constant(5.0).powi(0).coefficients(), &[1.0]);
    }

    #[test]
    fn jet_matches_nested_dual() {
        let x0 = 0.3;
        let x = var(x0, &[0, 1], 2);
        let xd = Dual::new(Dual::variable(x0), Dual::new(1.0, 0.0));
        let jf = (x * x.cos()).exp() / (x + Jet::constant(2.0));
        let df = (xd * xd.cos()).exp() / (xd + Dual::cst(2.0));
        assert_relative_eq!(jf.coefficient(0b11), df.deriv.deriv, epsilon = 1e-13);
        assert_relative_eq!(jf.coefficient(0b01), df.value.deriv, epsilon = 1e-14);
    }
}
