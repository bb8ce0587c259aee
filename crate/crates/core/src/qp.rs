//! The controller QP
//!
//! ```text
//! min_q ½‖q + c‖²   s.t.   a_bᵀq + s_b ≥ 0,   a_hᵀq + s_h ≥ 0
//! ```
//!
//! solved exactly by enumerating the four candidate active sets, and the
//! controller vector field built on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hocbf::HocbfStack;
use crate::problem::{steady_state, ProblemError, SteadyStateOptions, SteadyStateResult};
use crate::scalar::{dot, norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    #[serde(rename = "b")]
    Input,
    #[serde(rename = "h")]
    State,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Constraint::Input => "b",
            Constraint::State => "h",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("controller QP is infeasible: constraint {constraint} violated by {violation:e} at the unconstrained minimizer")]
    Infeasible {
        constraint: Constraint,
        violation: f64,
    },
    #[error("controller QP has degenerate geometry: nearly parallel constraint normals and no single active constraint is optimal")]
    Degenerate,
    #[error("QP data is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    SteadyState(#[from] ProblemError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Which constraint rows the QP carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Input constraint and the high-order barrier row on `h_r`.
    #[default]
    Hocbf,
    /// Input constraint only (state constraint ignored).
    InputOnly,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hocbf" => Ok(Mode::Hocbf),
            "input_only" | "input-only" => Ok(Mode::InputOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected hocbf or input_only)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hocbf => "hocbf",
            Mode::InputOnly => "input_only",
        })
    }
}

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 5.0;

/// Controller gains: gradient step `ε`, input-barrier rate `α` and
/// state-barrier rate `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ControllerParams<T> {
    pub epsilon: T,
    pub alpha: T,
    pub gamma: T,
    pub mode: Mode,
}

impl<T: Real> Default for ControllerParams<T> {
    fn default() -> Self {
        ControllerParams {
            epsilon: T::lit(DEFAULT_EPSILON),
            alpha: T::lit(DEFAULT_ALPHA),
            gamma: T::lit(DEFAULT_GAMMA),
            mode: Mode::Hocbf,
        }
    }
}

impl<T: Real> ControllerParams<T> {
    /// Defaults, with the instance's suggested `ε` when it has one.
    pub fn for_problem(spec: &crate::problem::ProblemSpec<T>) -> Self {
        let d = Self::default();
        ControllerParams {
            epsilon: spec.suggested_epsilon().unwrap_or(d.epsilon),
            ..d
        }
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        ControllerParams { mode, ..self }
    }

    pub fn with_epsilon(self, epsilon: T) -> Self {
        ControllerParams { epsilon, ..self }
    }

    /// All gains must be positive and finite.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// One inequality row `aᵀq + s ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row<T> {
    pub a: Vec<T>,
    pub s: T,
}

impl<T: Real> Row<T> {
    pub fn new(a: Vec<T>, s: T) -> Self {
        Row { a, s }
    }

    pub fn slack(&self, q: &[T]) -> T {
        dot(&self.a, q) + self.s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPData<T> {
    /// `ε (∂w/∂u)ᵀ ∇Φ(x)`
    pub c: Vec<T>,
    /// `∇b(u)ᵀ q + α b(u) ≥ 0`
    pub b: Row<T>,
    /// `∂h_r/∂u q + ∂h_r/∂x f + γ h_r ≥ 0`; absent in input-only mode.
    pub h: Option<Row<T>>,
}

impl<T: Real> QPData<T> {
    pub fn is_finite(&self) -> bool {
        let row_ok = |r: &Row<T>| r.s.is_finite() && r.a.iter().all(|v| v.is_finite());
        self.c.iter().all(|v| v.is_finite())
            && row_ok(&self.b)
            && self.h.as_ref().map_or(true, row_ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveSet {
    Empty,
    B,
    H,
    Both,
}

impl ActiveSet {
    pub fn has_b(self) -> bool {
        matches!(self, ActiveSet::B | ActiveSet::Both)
    }

    pub fn has_h(self) -> bool {
        matches!(self, ActiveSet::H | ActiveSet::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPSolution<T> {
    pub q: Vec<T>,
    pub lambda_b: T,
    pub lambda_h: T,
    pub active_set: ActiveSet,
    pub kkt_residual: T,
}

/// Largest violation among stationarity, primal feasibility and
/// complementary slackness.
pub fn kkt_residual<T: Real>(data: &QPData<T>, q: &[T], lambda_b: T, lambda_h: T) -> T {
    let mut stat: Vec<T> = q.iter().zip(&data.c).map(|(&qi, &ci)| qi + ci).collect();
    let mut worst = T::zero();
    let mut row = |r: &Row<T>, lam: T, stat: &mut Vec<T>| {
        for (s, &a) in stat.iter_mut().zip(&r.a) {
            *s = *s - lam * a;
        }
        let slack = r.slack(q);
        worst = worst.max(-slack).max((lam * slack).abs()).max(-lam);
    };
    row(&data.b, lambda_b, &mut stat);
    if let Some(h) = &data.h {
        row(h, lambda_h, &mut stat);
    }
    worst.max(norm(&stat))
}

struct Candidate<T> {
    q: Vec<T>,
    lambda_b: T,
    lambda_h: T,
    active_set: ActiveSet,
}

fn tolerance<T: Real>(scale: T) -> T {
    T::lit(1e-11).max(T::epsilon() * T::lit(1e3)) * (T::one() + scale)
}

fn single<T: Real>(c: &[T], row: &Row<T>) -> Option<(Vec<T>, T)> {
    let aa = dot(&row.a, &row.a);
    if aa == T::zero() {
        return None;
    }
    let mu = (dot(&row.a, c) - row.s) / aa;
    let q = c
        .iter()
        .zip(&row.a)
        .map(|(&ci, &ai)| -ci + mu * ai)
        .collect();
    Some((q, mu))
}

fn feasible<T: Real>(row: &Row<T>, q: &[T]) -> bool {
    row.slack(q) >= -tolerance(row.s.abs() + norm(&row.a) * norm(q))
}

fn nonneg<T: Real>(mu: T, scale: T) -> bool {
    mu >= -tolerance(scale)
}

/// Exact minimizer of the controller QP.
///
/// Active sets are tried in the order `∅, {b}, {h}, {b, h}`; the first whose
/// multipliers are nonnegative and whose inactive rows hold is returned, so
/// ties resolve to the smaller set.
pub fn solve_qp<T: Real>(data: &QPData<T>) -> Result<QPSolution<T>, QpError> {
    if !data.is_finite() {
        return Err(QpError::NonFinite);
    }
    let c = &data.c;
    let cscale = norm(c);
    let finish = |cand: Candidate<T>| {
        let lambda_b = cand.lambda_b.max(T::zero());
        let lambda_h = cand.lambda_h.max(T::zero());
        let kkt = kkt_residual(data, &cand.q, lambda_b, lambda_h);
        QPSolution {
            q: cand.q,
            lambda_b,
            lambda_h,
            active_set: cand.active_set,
            kkt_residual: kkt,
        }
    };

    let q0: Vec<T> = c.iter().map(|&v| -v).collect();
    if feasible(&data.b, &q0) && data.h.as_ref().map_or(true, |h| feasible(h, &q0)) {
        return Ok(finish(Candidate {
            q: q0,
            lambda_b: T::zero(),
            lambda_h: T::zero(),
            active_set: ActiveSet::Empty,
        }));
    }
    if let Some((q, mu)) = single(c, &data.b) {
        if nonneg(mu, cscale) && data.h.as_ref().map_or(true, |h| feasible(h, &q)) {
            return Ok(finish(Candidate {
                q,
                lambda_b: mu,
                lambda_h: T::zero(),
                active_set: ActiveSet::B,
            }));
        }
    }
    let Some(h) = &data.h else {
        return Err(infeasible(data, &q0));
    };
    if let Some((q, mu)) = single(c, h) {
        if nonneg(mu, cscale) && feasible(&data.b, &q) {
            return Ok(finish(Candidate {
                q,
                lambda_b: T::zero(),
                lambda_h: mu,
                active_set: ActiveSet::H,
            }));
        }
    }

    let (ab, ah) = (&data.b.a, &h.a);
    let (gbb, gbh, ghh) = (dot(ab, ab), dot(ab, ah), dot(ah, ah));
    let det = gbb * ghh - gbh * gbh;
    let det_floor = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    if det > det_floor * gbb * ghh && det > T::zero() {
        let solve2 = |rb: T, rh: T| ((ghh * rb - gbh * rh) / det, (gbb * rh - gbh * rb) / det);
        let (mut mu_b, mut mu_h) = solve2(dot(ab, c) - data.b.s, dot(ah, c) - h.s);
        let combine = |mu_b: T, mu_h: T| -> Vec<T> {
            (0..c.len())
                .map(|i| -c[i] + mu_b * ab[i] + mu_h * ah[i])
                .collect()
        };
        let mut q = combine(mu_b, mu_h);
        // One refinement step on the active rows; the multipliers can be
        // large when the normals are nearly parallel.
        let (db, dh) = solve2(-data.b.slack(&q), -h.slack(&q));
        mu_b += db;
        mu_h += dh;
        q = combine(mu_b, mu_h);
        if nonneg(mu_b, cscale) && nonneg(mu_h, cscale) {
            return Ok(finish(Candidate {
                q,
                lambda_b: mu_b,
                lambda_h: mu_h,
                active_set: ActiveSet::Both,
            }));
        }
    }
    if geometrically_infeasible(data, h) {
        Err(infeasible(data, &q0))
    } else {
        Err(QpError::Degenerate)
    }
}

// Two halfspaces (or a halfspace with zero normal) have an empty intersection
// only when a zero row has negative offset or the normals are antiparallel
// and the offsets are contradictory.
fn geometrically_infeasible<T: Real>(data: &QPData<T>, h: &Row<T>) -> bool {
    let (nb, nh) = (norm(&data.b.a), norm(&h.a));
    if nb == T::zero() || nh == T::zero() {
        return (nb == T::zero() && data.b.s < T::zero()) || (nh == T::zero() && h.s < T::zero());
    }
    let cos = dot(&data.b.a, &h.a) / (nb * nh);
    cos < T::zero() && data.b.s / nb + h.s / nh < T::zero()
}

fn infeasible<T: Real>(data: &QPData<T>, q0: &[T]) -> QpError {
    let vb = data.b.slack(q0);
    let vh = data.h.as_ref().map(|h| h.slack(q0));
    match vh {
        Some(vh) if vh < vb => QpError::Infeasible {
            constraint: Constraint::State,
            violation: vh.to_f64_lossy(),
        },
        _ => QpError::Infeasible {
            constraint: Constraint::Input,
            violation: vb.to_f64_lossy(),
        },
    }
}

/// QP data at `(x, u)` together with the steady state used for `∂w/∂u`.
pub fn build_qp<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    x: &[T],
    u: &[T],
    guess: Option<&[T]>,
) -> Result<(QPData<T>, SteadyStateResult<T>), ProblemError> {
    let spec = stack.spec();
    let ss = steady_state(spec, u, guess, SteadyStateOptions::default())?;
    let grad_phi = spec.grad_phi(x);
    let c: Vec<T> = ss
        .sensitivity
        .tr_mul_vec(&grad_phi)
        .into_iter()
        .map(|v| params.epsilon * v)
        .collect();
    let b = Row::new(spec.grad_b(u), params.alpha * spec.b(u));
    let h = match params.mode {
        Mode::InputOnly => None,
        Mode::Hocbf => {
            let (dx, du) = stack.hr_partials(x, u);
            let f = spec.f(x, u);
            Some(Row::new(du, dot(&dx, &f) + params.gamma * stack.top(x, u)))
        }
    };
    Ok((QPData { c, b, h }, ss))
}

/// Controller output at one point.
#[derive(Debug, Clone)]
pub struct FieldEval<T> {
    pub g: Vec<T>,
    pub solution: QPSolution<T>,
    pub steady_state: SteadyStateResult<T>,
}

/// `g_{ε,α,γ}(x, u)`: the QP minimizer.
pub fn controller_field<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    x: &[T],
    u: &[T],
    guess: Option<&[T]>,
) -> Result<FieldEval<T>, ControllerError> {
    let (data, steady_state) = build_qp(stack, params, x, u, guess)?;
    let solution = solve_qp(&data)?;
    Ok(FieldEval {
        g: solution.q.clone(),
        solution,
        steady_state,
    })
}
