//! Concrete smooth maps: affine plants and quadratic objective/constraint
//! functions.

use crate::autodiff::{Carrier, Dims, GenericMap};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// `f(x, u) = A x + B u`.
#[derive(Debug, Clone)]
pub struct AffinePlant<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Real> AffinePlant<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>) -> Self {
        assert_eq!(a.rows(), a.cols(), "A must be square");
        assert_eq!(a.rows(), b.rows(), "A and B row counts differ");
        AffinePlant { a, b }
    }
}

impl<T: Real> GenericMap<T> for AffinePlant<T> {
    fn dims(&self) -> Dims {
        Dims::new(self.a.cols(), self.b.cols(), self.a.rows())
    }

    fn apply<S: Carrier<Real = T>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        (0..self.a.rows())
            .map(|i| {
                let mut acc = S::zero();
                for (j, &xj) in x.iter().enumerate() {
                    let c = self.a[(i, j)];
                    if c != T::zero() {
                        acc += xj.scale(c);
                    }
                }
                for (j, &uj) in u.iter().enumerate() {
                    let c = self.b[(i, j)];
                    if c != T::zero() {
                        acc += uj.scale(c);
                    }
                }
                acc
            })
            .collect()
    }
}

/// Which argument a single-argument map reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arg {
    X,
    U,
}

/// `offset + sign · (z − center)ᵀ W (z − center)` where `z` is either `x` or `u`.
#[derive(Debug, Clone)]
pub struct Quadratic<T> {
    pub arg: Arg,
    pub center: Vec<T>,
    pub weight: Matrix<T>,
    pub offset: T,
    pub sign: T,
}

impl<T: Real> Quadratic<T> {
    /// `(z − target)ᵀ W (z − target)`
    pub fn cost(arg: Arg, target: Vec<T>, weight: Matrix<T>) -> Self {
        Self::checked(arg, target, weight, T::zero(), T::one())
    }

    /// `level − (z − center)ᵀ S (z − center)`, nonnegative inside the ellipsoid.
    pub fn ellipsoid(arg: Arg, center: Vec<T>, shape: Matrix<T>, level: T) -> Self {
        Self::checked(arg, center, shape, level, -T::one())
    }

    /// `radius² − ‖z‖²`
    pub fn ball(arg: Arg, dim: usize, radius_sq: T) -> Self {
        Self::ellipsoid(arg, vec![T::zero(); dim], Matrix::identity(dim), radius_sq)
    }

    fn checked(arg: Arg, center: Vec<T>, weight: Matrix<T>, offset: T, sign: T) -> Self {
        assert_eq!(weight.rows(), center.len());
        assert_eq!(weight.cols(), center.len());
        Quadratic {
            arg,
            center,
            weight,
            offset,
            sign,
        }
    }
}

impl<T: Real> GenericMap<T> for Quadratic<T> {
    fn dims(&self) -> Dims {
        let k = self.center.len();
        match self.arg {
            Arg::X => Dims::new(k, 0, 1),
            Arg::U => Dims::new(0, k, 1),
        }
    }

    fn apply<S: Carrier<Real = T>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let z = match self.arg {
            Arg::X => x,
            Arg::U => u,
        };
        let d: Vec<S> = z
            .iter()
            .zip(&self.center)
            .map(|(&zi, &ci)| zi - S::cst(ci))
            .collect();
        let mut acc = S::zero();
        for (i, &di) in d.iter().enumerate() {
            let mut row = S::zero();
            for (j, &dj) in d.iter().enumerate() {
                let w = self.weight[(i, j)];
                if w != T::zero() {
                    row += dj.scale(w);
                }
            }
            acc += di * row;
        }
        vec![S::cst(self.offset) + acc.scale(self.sign)]
    }
}

/// Map with constant output, ignoring its inputs.
#[derive(Debug, Clone)]
pub struct ConstantMap<T> {
    pub dims: Dims,
    pub value: Vec<T>,
}

impl<T: Real> GenericMap<T> for ConstantMap<T> {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn apply<S: Carrier<Real = T>>(&self, _x: &[S], _u: &[S]) -> Vec<S> {
        self.value.iter().map(|&v| S::cst(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad, jacobian, SmoothMap};
    use approx::assert_relative_eq;

    fn ellipse_h() -> Quadratic<f64> {
        Quadratic::ellipsoid(Arg::X, vec![0.2, 0.3], Matrix::diagonal(&[0.25, 1.0]), 1.0)
    }

    #[test]
    fn ellipse_values() {
        let h = ellipse_h();
        assert_relative_eq!(h.eval(&[0.0, 0.0], &[])[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(
            h.eval(&[1.775, 0.9], &[])[0],
            1.0 - 1.575f64.powi(2) / 4.0 - 0.36,
            epsilon = 1e-15
        );
        assert_eq!(grad(&h, &[0.2, 0.3]).unwrap(), vec![0.0, 0.0]);
        let g = grad(&h, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(g[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn affine_jacobians() {
        let a = Matrix::from_rows(&[[-1.6, -0.1], [-1.0, -0.8]]);
        let f = AffinePlant::new(a.clone(), Matrix::identity(2));
        let (jx, ju) = jacobian(&f, &[0.3, -2.0], &[4.0, 1.0]).unwrap();
        assert_eq!(jx, a);
        assert_eq!(ju, Matrix::identity(2));
    }

    #[test]
    fn constant_map_has_zero_jacobians() {
        let c = ConstantMap {
            dims: Dims::new(2, 1, 2),
            value: vec![1.0, -3.0],
        };
        let (jx, ju) = jacobian(&c, &[0.5, 0.5], &[2.0]).unwrap();
        assert_eq!(jx.max_abs(), 0.0);
        assert_eq!(ju.max_abs(), 0.0);
    }

    #[test]
    fn ball_gradient() {
        let b = Quadratic::ball(Arg::U, 2, 16.0);
        assert_eq!(b.eval(&[], &[0.0, 0.0])[0], 16.0);
        assert_eq!(grad(&b, &[1.0, 2.0]).unwrap(), vec![-2.0, -4.0]);
    }
}
