use thiserror::Error;

use crate::autodiff::{Dual, SmoothMap};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutodiffError {
    #[error("dimension mismatch: {what} has length {got}, map expects {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("gradient requested for a map with {0} outputs")]
    NotScalar(usize),
}

fn check(what: &'static str, got: usize, expected: usize) -> Result<(), AutodiffError> {
    if got == expected {
        Ok(())
    } else {
        Err(AutodiffError::Dimension {
            what,
            got,
            expected,
        })
    }
}

/// Exact gradient of a scalar map with respect to all of its inputs; `point`
/// is `x` followed by `u`.
pub fn grad<T: Real>(map: &dyn SmoothMap<T>, point: &[T]) -> Result<Vec<T>, AutodiffError> {
    let dims = map.dims();
    if dims.out != 1 {
        return Err(AutodiffError::NotScalar(dims.out));
    }
    check("point", point.len(), dims.inputs())?;
    let (x, u) = point.split_at(dims.x);
    let (jx, ju) = jacobian_unchecked(map, x, u);
    Ok(jx.row(0).iter().chain(ju.row(0)).copied().collect())
}

/// Exact partial Jacobians `(∂F/∂x, ∂F/∂u)`; one dual pass per input coordinate.
pub fn jacobian<T: Real>(
    map: &dyn SmoothMap<T>,
    x: &[T],
    u: &[T],
) -> Result<(Matrix<T>, Matrix<T>), AutodiffError> {
    let dims = map.dims();
    check("x", x.len(), dims.x)?;
    check("u", u.len(), dims.u)?;
    Ok(jacobian_unchecked(map, x, u))
}

pub(crate) fn jacobian_unchecked<T: Real>(
    map: &dyn SmoothMap<T>,
    x: &[T],
    u: &[T],
) -> (Matrix<T>, Matrix<T>) {
    let dims = map.dims();
    let mut jx = Matrix::zeros(dims.out, dims.x);
    let mut ju = Matrix::zeros(dims.out, dims.u);
    let mut xd: Vec<Dual<T>> = x.iter().map(|&v| Dual::constant(v)).collect();
    let mut ud: Vec<Dual<T>> = u.iter().map(|&v| Dual::constant(v)).collect();
    for j in 0..dims.x {
        xd[j].deriv = T::one();
        let col: Vec<T> = map.eval_dual(&xd, &ud).iter().map(|d| d.deriv).collect();
        jx.set_column(j, &col);
        xd[j].deriv = T::zero();
    }
    for j in 0..dims.u {
        ud[j].deriv = T::one();
        let col: Vec<T> = map.eval_dual(&xd, &ud).iter().map(|d| d.deriv).collect();
        ju.set_column(j, &col);
        ud[j].deriv = T::zero();
    }
    (jx, ju)
}

/// Gradient of a scalar map of `x` alone (`dims.u == 0`).
pub(crate) fn grad_x<T: Real>(map: &dyn SmoothMap<T>, x: &[T]) -> Vec<T> {
    let (jx, _) = jacobian_unchecked(map, x, &[]);
    jx.row(0).to_vec()
}

/// Gradient of a scalar map of `u` alone (`dims.x == 0`).
pub(crate) fn grad_u<T: Real>(map: &dyn SmoothMap<T>, u: &[T]) -> Vec<T> {
    let (_, ju) = jacobian_unchecked(map, &[], u);
    ju.row(0).to_vec()
}

/// Directional derivative `∂F/∂x·dx + ∂F/∂u·du` in a single dual pass.
pub fn directional<T: Real>(
    map: &dyn SmoothMap<T>,
    x: &[T],
    u: &[T],
    dx: &[T],
    du: &[T],
) -> Result<Vec<T>, AutodiffError> {
    let dims = map.dims();
    check("x", x.len(), dims.x)?;
    check("u", u.len(), dims.u)?;
    check("dx", dx.len(), dims.x)?;
    check("du", du.len(), dims.u)?;
    let xd: Vec<Dual<T>> = x.iter().zip(dx).map(|(&v, &d)| Dual::new(v, d)).collect();
    let ud: Vec<Dual<T>> = u.iter().zip(du).map(|(&v, &d)| Dual::new(v, d)).collect();
    Ok(map.eval_dual(&xd, &ud).iter().map(|d| d.deriv).collect())
}
