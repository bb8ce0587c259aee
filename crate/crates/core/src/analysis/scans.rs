use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::hocbf::{HocbfStack, SampleBox};
use crate::problem::{steady_state, SteadyStateOptions};
use crate::qp::{controller_field, ControllerParams};
use crate::scalar::{distance, norm, Real};
use crate::sim::Trajectory;

pub const DEFAULT_DESCENT_WEIGHTS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const DEFAULT_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct DescentRow {
    pub weight: f64,
    /// Largest one-step increase of `V` over the scanned samples.
    pub max_increase: f64,
    pub initial: f64,
    pub last: f64,
    pub nonincreasing: bool,
}

/// `V = Φ(w(u)) + d ‖x − w(u)‖²` along the samples from `tail_start` on,
/// for each weight `d`.
///
/// Returns `None` when some steady state along the tail cannot be computed.
pub fn descent_scan<T: Real>(
    stack: &HocbfStack<T>,
    traj: &Trajectory<T>,
    weights: &[f64],
    tail_start: usize,
    tol: f64,
) -> Option<Vec<DescentRow>> {
    let spec = stack.spec();
    let mut parts = Vec::new();
    let mut guess: Option<Vec<T>> = None;
    for s in traj.samples.iter().skip(tail_start) {
        let w = steady_state(
            spec,
            &s.u,
            guess.as_deref().or(Some(&s.x)),
            SteadyStateOptions::default(),
        )
        .ok()?
        .x_ss;
        let gap = distance(&s.x, &w);
        parts.push((spec.phi(&w).to_f64_lossy(), (gap * gap).to_f64_lossy()));
        guess = Some(w);
    }
    if parts.is_empty() {
        return None;
    }
    Some(
        weights
            .iter()
            .map(|&d| {
                let v: Vec<f64> = parts.iter().map(|&(phi, gap)| phi + d * gap).collect();
                let max_increase = v
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::NEG_INFINITY, f64::max);
                let max_increase = if v.len() < 2 { 0.0 } else { max_increase };
                DescentRow {
                    weight: d,
                    max_increase,
                    initial: v[0],
                    last: *v.last().unwrap(),
                    nonincreasing: max_increase <= tol,
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub attempts: usize,
    /// Pairs skipped because the controller failed at one end.
    pub failures: usize,
    pub separation: f64,
    /// `max ‖Δg‖ / ‖Δ(x, u)‖`
    pub max_ratio_g: f64,
    /// Same for the full closed-loop field `(f, g)`.
    pub max_ratio_field: f64,
}

/// Empirical Lipschitz constant of the controller on `⋂ X_i` from random
/// nearby pairs.
pub fn lipschitz_scan<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    region: &SampleBox<T>,
    pairs: usize,
    separation: f64,
    seed: u64,
) -> LipschitzReport {
    let spec = stack.spec();
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LipschitzReport {
        pairs: 0,
        attempts: 0,
        failures: 0,
        separation,
        max_ratio_g: 0.0,
        max_ratio_field: 0.0,
    };
    let field = |p: &[T]| -> Option<Vec<T>> {
        let (x, u) = p.split_at(n);
        let g = controller_field(stack, params, x, u, Some(x)).ok()?.g;
        let mut out = spec.f(x, u);
        out.extend(g);
        Some(out)
    };
    let limit = pairs.saturating_mul(1000).max(1000);
    while report.pairs < pairs && report.attempts < limit {
        report.attempts += 1;
        let p = region.draw(&mut rng);
        let dir: Vec<f64> = (0..p.len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let q: Vec<T> = p
            .iter()
            .zip(&dir)
            .map(|(&a, &d)| a + T::lit(separation * d / len))
            .collect();
        let inside = |z: &[T]| stack.membership(&z[..n], &z[n..]).in_intersection;
        if !inside(&p) || !inside(&q) {
            continue;
        }
        let (Some(fp), Some(fq)) = (field(&p), field(&q)) else {
            report.failures += 1;
            continue;
        };
        let dp = distance(&p, &q).to_f64_lossy();
        let df: Vec<T> = fp.iter().zip(&fq).map(|(&a, &b)| a - b).collect();
        report.max_ratio_field = report.max_ratio_field.max(norm(&df).to_f64_lossy() / dp);
        report.max_ratio_g = report.max_ratio_g.max(norm(&df[n..]).to_f64_lossy() / dp);
        report.pairs += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hocbf::build_stack;
    use crate::problem::builtin_problem;

    #[test]
    fn lipschitz_on_the_example_is_finite() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let stack = build_stack(&spec);
        let region = SampleBox::new(vec![-2.0, -1.5, -4.0, -4.0], vec![2.5, 2.0, 4.0, 4.0]);
        let rep = lipschitz_scan(
            &stack,
            &ControllerParams::default(),
            &region,
            50,
            DEFAULT_SEPARATION,
            1,
        );
        assert_eq!(rep.pairs, 50);
        assert!(rep.max_ratio_g.is_finite() && rep.max_ratio_g > 0.0);
        assert!(rep.max_ratio_field >= rep.max_ratio_g);
    }
}
