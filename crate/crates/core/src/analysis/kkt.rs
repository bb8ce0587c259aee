use serde::Serialize;

use crate::linalg::Matrix;
use crate::problem::{steady_state, ProblemSpec, SteadyStateOptions};
use crate::scalar::{distance, dot, norm, Real};

/// A constraint counts as active when its value is at most this.
pub const ACTIVE_TOL: f64 = 1e-8;
/// Residual threshold for `is_critical`.
pub const CRITICAL_TOL: f64 = 1e-6;

/// First-order optimality of `(x, u)` for
/// `min Φ(x)  s.t.  x = w(u), h(x) ≥ 0, b(u) ≥ 0`.
///
/// The multiplier `μ` of `x = w(u)` is eliminated, leaving the reduced
/// stationarity `Sᵀ∇Φ = λ_h Sᵀ∇h + λ_b ∇b` with `S = ∂w/∂u`; then
/// `μ = λ_h ∇h − ∇Φ`.
#[derive(Debug, Clone, Serialize)]
pub struct KKTReport {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda_h: f64,
    pub lambda_b: f64,
    pub mu: Vec<f64>,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    /// `max(0, −h) + max(0, −b)`
    pub feasibility_residual: f64,
    /// `‖x − w(u)‖`
    pub steady_state_residual: f64,
    pub is_critical: bool,
    /// Set when `w(u)` could not be computed.
    pub error: Option<String>,
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|a| a.to_f64_lossy()).collect()
}

/// Least squares `min ‖g − Σ λ_j a_j‖` over `λ ≥ 0` for at most two columns,
/// by enumerating supports.
pub(crate) fn nnls2<T: Real>(g: &[T], cols: &[Vec<T>]) -> (Vec<T>, T) {
    let resid = |lam: &[T]| {
        let r: Vec<T> = (0..g.len())
            .map(|i| g[i] - cols.iter().zip(lam).map(|(c, &l)| l * c[i]).sum::<T>())
            .collect();
        norm(&r)
    };
    let k = cols.len();
    let mut best = (vec![T::zero(); k], resid(&vec![T::zero(); k]));
    for mask in 1..(1usize << k) {
        let idx: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let gram = Matrix::from_rows(
            &idx.iter()
                .map(|&a| {
                    idx.iter()
                        .map(|&b| dot(&cols[a], &cols[b]))
                        .collect::<Vec<T>>()
                })
                .collect::<Vec<_>>(),
        );
        let rhs: Vec<T> = idx.iter().map(|&a| dot(&cols[a], g)).collect();
        let Some(sol) = gram.solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|&l| l < T::zero()) {
            continue;
        }
        let mut lam = vec![T::zero(); k];
        for (&j, &l) in idx.iter().zip(&sol) {
            lam[j] = l;
        }
        let r = resid(&lam);
        if r < best.1 {
            best = (lam, r);
        }
    }
    best
}

pub fn kkt_steady_state<T: Real>(spec: &ProblemSpec<T>, x: &[T], u: &[T]) -> KKTReport {
    let mut report = KKTReport {
        x: f64s(x),
        u: f64s(u),
        lambda_h: 0.0,
        lambda_b: 0.0,
        mu: vec![f64::NAN; x.len()],
        stationarity_residual: f64::NAN,
        complementarity_residual: f64::NAN,
        feasibility_residual: f64::NAN,
        steady_state_residual: f64::NAN,
        is_critical: false,
        error: None,
    };
    let ss = match steady_state(spec, u, Some(x), SteadyStateOptions::default()) {
        Ok(ss) => ss,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let s = &ss.sensitivity;
    let grad_phi = spec.grad_phi(x);
    let grad_h = spec.grad_h(x);
    let grad_b = spec.grad_b(u);
    let (h, b) = (spec.h(x), spec.b(u));
    let g = s.tr_mul_vec(&grad_phi);
    let gh = s.tr_mul_vec(&grad_h);
    let active = T::lit(ACTIVE_TOL);
    let mut cols = Vec::new();
    let h_active = h <= active;
    let b_active = b <= active;
    if h_active {
        cols.push(gh.clone());
    }
    if b_active {
        cols.push(grad_b.clone());
    }
    let (lam, stat) = nnls2(&g, &cols);
    let mut it = lam.into_iter();
    let lambda_h = if h_active {
        it.next().unwrap()
    } else {
        T::zero()
    };
    let lambda_b = if b_active {
        it.next().unwrap()
    } else {
        T::zero()
    };
    let mu: Vec<T> = grad_h
        .iter()
        .zip(&grad_phi)
        .map(|(&dh, &dp)| lambda_h * dh - dp)
        .collect();
    let comp = (lambda_h * h).abs() + (lambda_b * b).abs();
    let feas = (-h).max(T::zero()) + (-b).max(T::zero());
    report.lambda_h = lambda_h.to_f64_lossy();
    report.lambda_b = lambda_b.to_f64_lossy();
    report.mu = f64s(&mu);
    report.stationarity_residual = stat.to_f64_lossy();
    report.complementarity_residual = comp.to_f64_lossy();
    report.feasibility_residual = feas.to_f64_lossy();
    report.steady_state_residual = distance(x, &ss.x_ss).to_f64_lossy();
    report.is_critical = [stat, comp, feas]
        .iter()
        .all(|r| r.to_f64_lossy() <= CRITICAL_TOL)
        && report.steady_state_residual <= CRITICAL_TOL
        && report.lambda_h >= -1e-10
        && report.lambda_b >= -1e-10;
    report
}
