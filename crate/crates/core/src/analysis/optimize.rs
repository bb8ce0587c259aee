use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::kkt::{kkt_steady_state, KKTReport};
use crate::hocbf::{default_sample_box, SampleBox};
use crate::linalg::Matrix;
use crate::problem::{steady_state, ProblemSpec, SteadyStateOptions};
use crate::qp::{solve_qp, QPData, Row};
use crate::scalar::{dot, norm, Real};

/// Feasibility slack accepted for a final point.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("no start reached a feasible point ({starts} starts)")]
    NoFeasiblePoint { starts: usize },
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions<T> {
    /// Box over `u` the starts are drawn from; the first start is its center.
    pub region: SampleBox<T>,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl<T: Real> OptimizeOptions<T> {
    pub fn for_problem(spec: &ProblemSpec<T>) -> Self {
        let full = default_sample_box(spec);
        let n = spec.n();
        OptimizeOptions {
            region: SampleBox::new(full.lo[n..].to_vec(), full.hi[n..].to_vec()),
            starts: 16,
            seed: 0,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub h: f64,
    pub b: f64,
    pub kkt: KKTReport,
    pub starts: usize,
    pub feasible_starts: usize,
}

struct Local<T> {
    u: Vec<T>,
    x: Vec<T>,
    objective: T,
    feasible: bool,
}

/// Values and gradients of the reduced problem in `u`.
struct Reduced<T> {
    x: Vec<T>,
    f: T,
    grad_f: Vec<T>,
    h: T,
    grad_h: Vec<T>,
    b: T,
    grad_b: Vec<T>,
}

fn reduced<T: Real>(spec: &ProblemSpec<T>, u: &[T], guess: Option<&[T]>) -> Option<Reduced<T>> {
    let ss = steady_state(spec, u, guess, SteadyStateOptions::default()).ok()?;
    let x = ss.x_ss;
    let s = &ss.sensitivity;
    Some(Reduced {
        f: spec.phi(&x),
        grad_f: s.tr_mul_vec(&spec.grad_phi(&x)),
        h: spec.h(&x),
        grad_h: s.tr_mul_vec(&spec.grad_h(&x)),
        b: spec.b(u),
        grad_b: spec.grad_b(u),
        x,
    })
}

fn violation<T: Real>(r: &Reduced<T>) -> T {
    (-r.h).max(T::zero()) + (-r.b).max(T::zero())
}

// Central differences of the exact reduced gradient, symmetrized.
fn hessian<T: Real>(spec: &ProblemSpec<T>, u: &[T], x: &[T]) -> Option<Matrix<T>> {
    let m = u.len();
    let mut hess = Matrix::zeros(m, m);
    for j in 0..m {
        let step = T::lit(1e-5) * (T::one() + u[j].abs());
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[j] = up[j] + step;
        dn[j] = dn[j] - step;
        let gp = reduced(spec, &up, Some(x))?.grad_f;
        let gm = reduced(spec, &dn, Some(x))?.grad_f;
        for i in 0..m {
            hess[(i, j)] = (gp[i] - gm[i]) / (step + step);
        }
    }
    Some(hess.sub(&hess.sub(&hess.transpose()).scaled(T::lit(0.5))))
}

// Newton-type SQP step: min ∇Fᵀd + ½dᵀBd over the linearized constraints,
// with B the Hessian shifted until positive definite. The substitution
// y = Lᵀd turns it into the identity-metric controller QP.
fn local_solve<T: Real>(spec: &ProblemSpec<T>, u0: &[T], max_iter: usize) -> Option<Local<T>> {
    let mut u = u0.to_vec();
    let mut cur = reduced(spec, &u, None)?;
    let mut rho = T::one();
    for _ in 0..max_iter {
        let hess = hessian(spec, &u, &cur.x)?;
        let scale = hess.max_abs().max(T::one());
        let mut shift = T::zero();
        let chol = loop {
            let mut shifted = hess.clone();
            for i in 0..u.len() {
                shifted[(i, i)] = shifted[(i, i)] + shift;
            }
            if let Some(c) = shifted.cholesky() {
                break c;
            }
            shift = if shift == T::zero() {
                T::lit(1e-8) * scale
            } else {
                shift * T::lit(4.0)
            };
        };
        let data = QPData {
            c: chol.solve_lower(&cur.grad_f),
            b: Row::new(chol.solve_lower(&cur.grad_b), cur.b),
            h: Some(Row::new(chol.solve_lower(&cur.grad_h), cur.h)),
        };
        let sol = solve_qp(&data).ok()?;
        let d = chol.solve_upper(&sol.q);
        if norm(&d) <= T::lit(1e-13) * (T::one() + norm(&u)) {
            break;
        }
        rho = rho.max(T::lit(2.0) * sol.lambda_b.max(sol.lambda_h) + T::one());
        let merit = |r: &Reduced<T>| r.f + rho * violation(r);
        let m0 = merit(&cur);
        let slope = dot(&cur.grad_f, &d) - rho * violation(&cur);
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<T> = u.iter().zip(&d).map(|(&a, &b)| a + t * b).collect();
            if let Some(r) = reduced(spec, &trial, Some(&cur.x)) {
                if merit(&r) <= m0 + T::lit(1e-4) * t * slope.min(T::zero()) {
                    accepted = Some((trial, r));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        match accepted {
            Some((trial, r)) => {
                u = trial;
                cur = r;
            }
            None => break,
        }
    }
    let tol = T::lit(FEASIBILITY_TOL);
    Some(Local {
        feasible: cur.h >= -tol && cur.b >= -tol,
        objective: cur.f,
        x: cur.x,
        u,
    })
}

fn lex_less<T: Real>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Multistart local solves of `min Φ(w(u))  s.t.  h(w(u)) ≥ 0, b(u) ≥ 0`.
///
/// Starts run concurrently; the best feasible point wins, ties broken by
/// the lexicographically smaller `u`.
pub fn offline_optimize<T: Real>(
    spec: &ProblemSpec<T>,
    opts: &OptimizeOptions<T>,
) -> Result<OptimizeResult, OptimizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let region = &opts.region;
    let mut starts: Vec<Vec<T>> = vec![region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(&l, &h)| (l + h) * T::lit(0.5))
        .collect()];
    while starts.len() < opts.starts.max(1) {
        starts.push(region.draw(&mut rng));
    }
    let locals: Vec<Option<Local<T>>> = starts
        .par_iter()
        .map(|u0| local_solve(spec, u0, opts.max_iter))
        .collect();
    let feasible: Vec<&Local<T>> = locals.iter().flatten().filter(|l| l.feasible).collect();
    let best = feasible
        .iter()
        .copied()
        .reduce(|a, b| {
            if b.objective < a.objective || (b.objective == a.objective && lex_less(&b.u, &a.u)) {
                b
            } else {
                a
            }
        })
        .ok_or(OptimizeError::NoFeasiblePoint {
            starts: starts.len(),
        })?;
    let f64s = |v: &[T]| v.iter().map(|a| a.to_f64_lossy()).collect::<Vec<f64>>();
    Ok(OptimizeResult {
        x: f64s(&best.x),
        u: f64s(&best.u),
        objective: best.objective.to_f64_lossy(),
        h: spec.h(&best.x).to_f64_lossy(),
        b: spec.b(&best.u).to_f64_lossy(),
        kkt: kkt_steady_state(spec, &best.x, &best.u),
        starts: starts.len(),
        feasible_starts: feasible.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use approx::assert_relative_eq;

    #[test]
    fn interior_optimum_of_the_example() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let res = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
        assert_relative_eq!(res.x[0], 1.775, epsilon = 1e-8);
        assert_relative_eq!(res.x[1], 0.9, epsilon = 1e-8);
        assert!(res.objective < 1e-14);
        assert!(res.kkt.is_critical);
    }

    #[test]
    fn second_order_optimum() {
        let spec = builtin_problem::<f64>("second_order_r2").unwrap();
        let res = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
        assert_relative_eq!(res.u[0], 0.5, epsilon = 1e-8);
        assert!(res.kkt.is_critical);
    }

    #[test]
    fn boundary_optimum_is_on_the_ellipse() {
        let spec = builtin_problem::<f64>("boundary_optimum_lti_r1").unwrap();
        let res = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
        assert!(res.h.abs() < 1e-9, "{res:?}");
        assert!(res.kkt.is_critical, "{:?}", res.kkt);
        assert!(res.kkt.lambda_h > 0.0);
    }
}
