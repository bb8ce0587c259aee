use serde::Serialize;

use crate::analysis::certificate::max_margin;
use crate::analysis::kkt::ACTIVE_TOL;
use crate::hocbf::HocbfStack;
use crate::linalg::Matrix;
use crate::problem::{steady_state, SteadyStateOptions};
use crate::qp::{controller_field, ControllerError, ControllerParams};
use crate::scalar::{norm, Real};

/// Relative eigen-residual accepted as an exact eigenvector.
pub const EIGEN_TOL: f64 = 1e-6;
/// Relative eigen-residuals in `(EIGEN_TOL, EIGEN_BAND]` are inconclusive.
pub const EIGEN_BAND: f64 = 1e-4;
/// `h(x) >` this counts as strictly interior.
pub const INTERIOR_TOL: f64 = 1e-8;
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenStatus {
    /// Eigenvector with `e^r < 0`.
    Holds,
    /// Eigenvector, but `e^r ≥ 0`.
    WrongSign,
    NotEigenvector,
    /// Residual between the acceptance tolerance and the rejection band.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenTest {
    pub status: EigenStatus,
    /// Rayleigh-quotient eigenvalue; present only for accepted eigenvectors.
    pub eigenvalue: Option<f64>,
    /// `‖Mv − ev‖ / ‖v‖`
    pub residual: f64,
}

impl EigenTest {
    pub fn holds(&self) -> bool {
        self.status == EigenStatus::Holds
    }

    fn classify<T: Real>(e: T, residual: T, r: usize) -> Self {
        let res = residual.to_f64_lossy();
        if !res.is_finite() || res > EIGEN_BAND {
            return EigenTest {
                status: EigenStatus::NotEigenvector,
                eigenvalue: None,
                residual: res,
            };
        }
        if res > EIGEN_TOL {
            return EigenTest {
                status: EigenStatus::Inconclusive,
                eigenvalue: None,
                residual: res,
            };
        }
        let e = e.to_f64_lossy();
        let status = if e.powi(r as i32) < 0.0 {
            EigenStatus::Holds
        } else {
            EigenStatus::WrongSign
        };
        EigenTest {
            status,
            eigenvalue: Some(e),
            residual: res,
        }
    }
}

/// Sufficient conditions under which equilibria of the closed loop are
/// exactly the critical points of the steady-state problem.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryEquilibriumReport {
    /// `h(x) > INTERIOR_TOL`
    pub condition1: bool,
    /// `∇h(x)` is a right eigenvector of `∂f/∂x` with eigenvalue `e`, `e^r < 0`.
    pub condition2: EigenTest,
    /// `(∂w/∂u)ᵀ` is a left eigenvector of `∂f/∂x` with eigenvalue `e`, `e^r < 0`.
    pub condition3: EigenTest,
    /// Mangasarian–Fromovitz spot check on the active reduced constraints.
    pub cq_ok: bool,
    pub warnings: Vec<String>,
}

impl BoundaryEquilibriumReport {
    pub fn any_holds(&self) -> bool {
        self.condition1 || self.condition2.holds() || self.condition3.holds()
    }
}

/// Right-eigenvector test of `v` against `M` by Rayleigh quotient.
pub fn right_eigen_test<T: Real>(m: &Matrix<T>, v: &[T], r: usize) -> EigenTest {
    let nv = norm(v);
    if nv == T::zero() {
        return EigenTest {
            status: EigenStatus::NotEigenvector,
            eigenvalue: None,
            residual: f64::INFINITY,
        };
    }
    let mv = m.mul_vec(v);
    let e = crate::scalar::dot(v, &mv) / (nv * nv);
    let res: Vec<T> = mv.iter().zip(v).map(|(&a, &b)| a - e * b).collect();
    EigenTest::classify(e, norm(&res) / nv, r)
}

/// Left-eigenvector test `Lᵀ M = e Lᵀ` for the rows of `Lᵀ`, i.e. columns of `l`.
pub fn left_eigen_test<T: Real>(m: &Matrix<T>, l: &Matrix<T>, r: usize) -> EigenTest {
    let lt = l.transpose();
    let nl = lt.frobenius();
    if nl == T::zero() {
        return EigenTest {
            status: EigenStatus::NotEigenvector,
            eigenvalue: None,
            residual: f64::INFINITY,
        };
    }
    let ltm = lt.matmul(m);
    let mut inner = T::zero();
    for i in 0..lt.rows() {
        inner = inner + crate::scalar::dot(ltm.row(i), lt.row(i));
    }
    let e = inner / (nl * nl);
    EigenTest::classify(e, ltm.sub(&lt.scaled(e)).frobenius() / nl, r)
}

pub fn boundary_equilibrium_conditions<T: Real>(
    stack: &HocbfStack<T>,
    x: &[T],
    u: &[T],
) -> BoundaryEquilibriumReport {
    let spec = stack.spec();
    let r = spec.relative_degree();
    let mut warnings = Vec::new();
    let fnorm = norm(&spec.f(x, u)).to_f64_lossy();
    if fnorm > EQUILIBRIUM_TOL {
        warnings.push(format!("(x, u) is not a steady state: |f| = {fnorm:.3e}"));
    }
    let (jx, _) = spec.plant_jacobians(x, u);
    let grad_h = spec.grad_h(x);
    let condition1 = spec.h(x).to_f64_lossy() > INTERIOR_TOL;
    let condition2 = right_eigen_test(&jx, &grad_h, r);
    let (condition3, cq_ok) = match steady_state(spec, u, Some(x), SteadyStateOptions::default()) {
        Ok(ss) => {
            let cond3 = left_eigen_test(&jx, &ss.sensitivity, r);
            let mut rows = Vec::new();
            if spec.h(x).to_f64_lossy() <= ACTIVE_TOL {
                rows.push((ss.sensitivity.tr_mul_vec(&grad_h), T::zero()));
            }
            if spec.b(u).to_f64_lossy() <= ACTIVE_TOL {
                rows.push((spec.grad_b(u), T::zero()));
            }
            let cq = rows.is_empty() || max_margin(&rows, T::one()).0 > T::lit(1e-12);
            (cond3, cq)
        }
        Err(e) => {
            warnings.push(format!("steady state unavailable: {e}"));
            (
                EigenTest {
                    status: EigenStatus::NotEigenvector,
                    eigenvalue: None,
                    residual: f64::NAN,
                },
                false,
            )
        }
    };
    if !(condition1 || condition2.holds() || condition3.holds()) {
        warnings.push("none of the sufficient conditions holds; a boundary equilibrium here need not be critical".into());
    }
    BoundaryEquilibriumReport {
        condition1,
        condition2,
        condition3,
        cq_ok,
        warnings,
    }
}

/// Whether `(x, u)` is an equilibrium of the closed loop.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub f_norm: f64,
    pub g_norm: f64,
    pub is_equilibrium: bool,
}

pub fn equilibrium_check<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    x: &[T],
    u: &[T],
) -> Result<EquilibriumReport, ControllerError> {
    let f_norm = norm(&stack.spec().f(x, u)).to_f64_lossy();
    let g_norm = norm(&controller_field(stack, params, x, u, Some(x))?.g).to_f64_lossy();
    Ok(EquilibriumReport {
        f_norm,
        g_norm,
        is_equilibrium: f_norm <= EQUILIBRIUM_TOL && g_norm <= EQUILIBRIUM_TOL,
    })
}
