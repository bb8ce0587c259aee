use std::sync::Arc;

use crate::autodiff::{Dual, Jet};
use crate::scalar::{Real, Scalar};

/// Input/output dimensions of a map `(x, u) ↦ y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub x: usize,
    pub u: usize,
    pub out: usize,
}

impl Dims {
    pub fn new(x: usize, u: usize, out: usize) -> Self {
        Dims { x, u, out }
    }

    pub fn inputs(&self) -> usize {
        self.x + self.u
    }
}

/// A vector-valued smooth function of `(x, u)` that can be evaluated on
/// plain reals, first-order duals and nested jets.
///
/// Implement [`GenericMap`] instead of this trait; the blanket
/// implementation provides all three evaluation paths from one generic
/// evaluation rule.
pub trait SmoothMap<T: Real>: Send + Sync {
    fn dims(&self) -> Dims;
    fn eval(&self, x: &[T], u: &[T]) -> Vec<T>;
    fn eval_dual(&self, x: &[Dual<T>], u: &[Dual<T>]) -> Vec<Dual<T>>;
    fn eval_jet(&self, x: &[Jet<T>], u: &[Jet<T>]) -> Vec<Jet<T>>;
}

/// Shared handle to a type-erased smooth map.
pub type MapRef<T> = Arc<dyn SmoothMap<T>>;

/// Scalar types a [`SmoothMap`] can be evaluated on.
pub trait Carrier: Scalar {
    /// Dispatches to the matching `SmoothMap::eval*` method.
    fn call(map: &dyn SmoothMap<Self::Real>, x: &[Self], u: &[Self]) -> Vec<Self>;

    /// Number of nilpotent generators in use.
    fn depth(&self) -> usize;

    fn into_jet(self) -> Jet<Self::Real>;

    /// Converts back from a jet of depth at most `self.depth()`.
    fn from_jet(j: Jet<Self::Real>) -> Self;
}

impl<T: Real> Carrier for T {
    fn call(map: &dyn SmoothMap<T>, x: &[T], u: &[T]) -> Vec<T> {
        map.eval(x, u)
    }
    fn depth(&self) -> usize {
        0
    }
    fn into_jet(self) -> Jet<T> {
        Jet::constant(self)
    }
    fn from_jet(j: Jet<T>) -> Self {
        debug_assert!(j.depth() == 0);
        j.coefficient(0)
    }
}

impl<T: Real> Carrier for Dual<T> {
    fn call(map: &dyn SmoothMap<T>, x: &[Self], u: &[Self]) -> Vec<Self> {
        map.eval_dual(x, u)
    }
    fn depth(&self) -> usize {
        1
    }
    fn into_jet(self) -> Jet<T> {
        Jet::from_coefficients(1, &[self.value, self.deriv])
    }
    fn from_jet(j: Jet<T>) -> Self {
        debug_assert!(j.depth() <= 1);
        Dual::new(j.coefficient(0), j.coefficient(1))
    }
}

impl<T: Real> Carrier for Jet<T> {
    fn call(map: &dyn SmoothMap<T>, x: &[Self], u: &[Self]) -> Vec<Self> {
        map.eval_jet(x, u)
    }
    fn depth(&self) -> usize {
        Jet::depth(self)
    }
    fn into_jet(self) -> Jet<T> {
        self
    }
    fn from_jet(j: Jet<T>) -> Self {
        j
    }
}

/// A smooth map written once, generically over the evaluation scalar.
pub trait GenericMap<T: Real>: Send + Sync {
    fn dims(&self) -> Dims;
    fn apply<S: Carrier<Real = T>>(&self, x: &[S], u: &[S]) -> Vec<S>;
}

impl<T: Real, G: GenericMap<T>> SmoothMap<T> for G {
    fn dims(&self) -> Dims {
        GenericMap::dims(self)
    }
    fn eval(&self, x: &[T], u: &[T]) -> Vec<T> {
        self.apply(x, u)
    }
    fn eval_dual(&self, x: &[Dual<T>], u: &[Dual<T>]) -> Vec<Dual<T>> {
        self.apply(x, u)
    }
    fn eval_jet(&self, x: &[Jet<T>], u: &[Jet<T>]) -> Vec<Jet<T>> {
        self.apply(x, u)
    }
}

/// Largest jet depth among a set of carrier values.
pub fn max_depth<S: Carrier>(x: &[S], u: &[S]) -> usize {
    x.iter().chain(u).map(Carrier::depth).max().unwrap_or(0)
}

/// Evaluates a scalar-valued map on plain reals.
pub fn eval_scalar<T: Real>(map: &dyn SmoothMap<T>, x: &[T], u: &[T]) -> T {
    map.eval(x, u)[0]
}
