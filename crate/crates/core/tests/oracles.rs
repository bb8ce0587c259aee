use safeflow::analysis::regularize::{DEFAULT_DELTA, DEFAULT_MARGINS, DEFAULT_PENALTIES};
use safeflow::analysis::{
    kkt_steady_state, offline_optimize, regularization_sweep, OptimizeOptions, RegularizationForm,
};
use safeflow::problem::{builtin_problem, BUILTIN_NAMES};
use safeflow::{build_stack, ProblemSpec};

// Plant and constraint data shared by the two first-order builtins.
const A: [[f64; 2]; 2] = [[-1.6, -0.1], [-1.0, -0.8]];
const CENTER: [f64; 2] = [0.2, 0.3];
const BOUNDARY_TARGET: [f64; 2] = [3.0, 1.5];

fn phi(x: [f64; 2]) -> f64 {
    (x[0] - BOUNDARY_TARGET[0]).powi(2) + (x[1] - BOUNDARY_TARGET[1]).powi(2)
}

fn h(x: [f64; 2]) -> f64 {
    1.0 - 0.25 * (x[0] - CENTER[0]).powi(2) - (x[1] - CENTER[1]).powi(2)
}

/// Steady-state input of `ẋ = A x + u`.
fn input(x: [f64; 2]) -> [f64; 2] {
    [
        -(A[0][0] * x[0] + A[0][1] * x[1]),
        -(A[1][0] * x[0] + A[1][1] * x[1]),
    ]
}

fn b(x: [f64; 2]) -> f64 {
    let u = input(x);
    16.0 - u[0] * u[0] - u[1] * u[1]
}

/// `h = 0` arc.
fn ellipse(t: f64) -> [f64; 2] {
    [CENTER[0] + 2.0 * t.cos(), CENTER[1] + t.sin()]
}

/// `b = 0` arc: the state whose steady-state input is `4 (cos t, sin t)`.
fn input_circle(t: f64) -> [f64; 2] {
    let (u0, u1) = (4.0 * t.cos(), 4.0 * t.sin());
    let det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
    // x = −A⁻¹ u
    [
        -(A[1][1] * u0 - A[0][1] * u1) / det,
        -(-A[1][0] * u0 + A[0][0] * u1) / det,
    ]
}

/// Minimizes `phi` over the feasible part of a closed curve: dense grid,
/// then bisection onto the feasibility edge and golden section inside.
fn minimize_on_curve(
    curve: impl Fn(f64) -> [f64; 2],
    feasible: impl Fn([f64; 2]) -> bool,
) -> Option<(f64, [f64; 2])> {
    const N: usize = 200_000;
    let step = std::f64::consts::TAU / N as f64;
    let best = (0..N)
        .map(|k| k as f64 * step)
        .filter(|&t| feasible(curve(t)))
        .map(|t| (phi(curve(t)), t))
        .min_by(|a, b| a.0.total_cmp(&b.0))?;
    let ok = |t: f64| feasible(curve(t));
    let edge = |inside: f64, outside: f64| {
        let (mut i, mut o) = (inside, outside);
        for _ in 0..80 {
            let m = 0.5 * (i + o);
            if ok(m) {
                i = m;
            } else {
                o = m;
            }
        }
        i
    };
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    if !ok(lo) {
        lo = edge(best.1, lo);
    }
    if !ok(hi) {
        hi = edge(best.1, hi);
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| phi(curve(t));
    let (mut a, mut d) = (lo, hi);
    for _ in 0..200 {
        let b = d - g * (d - a);
        let c = a + g * (d - a);
        if f(b) <= f(c) {
            d = c;
        } else {
            a = b;
        }
    }
    let candidates = [lo, hi, 0.5 * (a + d)];
    candidates
        .iter()
        .map(|&t| (f(t), curve(t)))
        .min_by(|p, q| p.0.total_cmp(&q.0))
}

/// Global constrained optimizer of the boundary problem. The target is
/// outside the ellipse and the feasible set is convex, so the optimizer is
/// on one of the two boundary arcs.
fn dense_boundary_oracle() -> (f64, [f64; 2]) {
    assert!(h(BOUNDARY_TARGET) < 0.0);
    let on_h = minimize_on_curve(ellipse, |x| b(x) >= 0.0);
    let on_b = minimize_on_curve(input_circle, |x| h(x) >= 0.0);
    [on_h, on_b]
        .into_iter()
        .flatten()
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .unwrap()
}

fn boundary_spec() -> ProblemSpec<f64> {
    builtin_problem("boundary_optimum_lti_r1").unwrap()
}

#[test]
fn boundary_optimizer_matches_the_dense_oracle() {
    let (phi_star, x_star) = dense_boundary_oracle();
    assert!(h(x_star).abs() < 1e-9, "oracle optimizer is not on h = 0");
    let spec = boundary_spec();
    let opt = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
    assert!(
        (opt.objective - phi_star).abs() <= 1e-6,
        "{} vs {phi_star}",
        opt.objective
    );
    let dx = ((opt.x[0] - x_star[0]).powi(2) + (opt.x[1] - x_star[1]).powi(2)).sqrt();
    assert!(dx <= 1e-4, "{:?} vs {x_star:?}", opt.x);
    assert!(opt.h.abs() <= 1e-9);
}

/// Gradient by central differences.
fn fd_grad(f: impl Fn([f64; 2]) -> f64, x: [f64; 2]) -> [f64; 2] {
    let e = 1e-6;
    [
        (f([x[0] + e, x[1]]) - f([x[0] - e, x[1]])) / (2.0 * e),
        (f([x[0], x[1] + e]) - f([x[0], x[1] - e])) / (2.0 * e),
    ]
}

#[test]
fn oracle_optimizer_is_critical_with_active_state_constraint() {
    let (_, x) = dense_boundary_oracle();
    let u = input(x);
    let rep = kkt_steady_state(&boundary_spec(), &x, &u);
    assert!(rep.is_critical, "{rep:?}");
    assert!(rep.lambda_h > 0.0);
    // Independent multipliers: ∇Φ = λ_h ∇h + λ_b ∇b in x, with b pulled back
    // through the steady-state map, solved by Cramer's rule.
    let (gp, gh, gb) = (fd_grad(phi, x), fd_grad(h, x), fd_grad(b, x));
    let det = gh[0] * gb[1] - gh[1] * gb[0];
    let lh = (gp[0] * gb[1] - gp[1] * gb[0]) / det;
    let lb = (gh[0] * gp[1] - gh[1] * gp[0]) / det;
    assert!(lh > 0.0 && lb >= 0.0, "λ_h = {lh}, λ_b = {lb}");
    assert!(
        (lh - rep.lambda_h).abs() <= 1e-4,
        "{lh} vs {}",
        rep.lambda_h
    );
    assert!(
        (lb - rep.lambda_b).abs() <= 1e-4,
        "{lb} vs {}",
        rep.lambda_b
    );
}

#[test]
fn interior_optimizers_have_closed_forms() {
    let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
    let opt = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
    assert!(
        (opt.x[0] - 1.775).abs() < 1e-8 && (opt.x[1] - 0.9).abs() < 1e-8,
        "{:?}",
        opt.x
    );
    assert!(opt.objective.abs() < 1e-14);
    let spec = builtin_problem::<f64>("second_order_r2").unwrap();
    let opt = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
    assert!((opt.u[0] - 0.5).abs() < 1e-8, "{:?}", opt.u);
    assert!((opt.h - 0.75).abs() < 1e-8);
}

#[test]
fn levels_at_oracle_optimizers_are_powers_of_beta() {
    for name in BUILTIN_NAMES {
        let spec = builtin_problem::<f64>(name).unwrap();
        let opt = offline_optimize(&spec, &OptimizeOptions::for_problem(&spec)).unwrap();
        let v = build_stack(&spec).values(&opt.x, &opt.u);
        let beta = spec.beta();
        for (i, &vi) in v.iter().enumerate().skip(1) {
            let expected = beta.powi(i as i32) * v[0];
            assert!(
                (vi - expected).abs() <= 1e-10,
                "{name}: h{i} = {vi}, β^i h = {expected}"
            );
        }
    }
}

#[test]
fn shifted_regularization_moves_inside_at_small_cost() {
    let spec = boundary_spec();
    let (phi_star, _) = dense_boundary_oracle();
    let opts = OptimizeOptions::for_problem(&spec);
    let sweep = regularization_sweep(
        &spec,
        &DEFAULT_PENALTIES,
        &DEFAULT_MARGINS,
        RegularizationForm::ShiftedSquare,
        DEFAULT_DELTA,
        &opts,
    )
    .unwrap();
    let good: Vec<_> = sweep
        .rows
        .iter()
        .filter(|r| r.h > 0.0 && (r.phi - phi_star).abs() < DEFAULT_DELTA)
        .collect();
    assert!(!good.is_empty());
    assert!(sweep.passed());
    // For each margin the optimizer moves inward as the penalty grows.
    for &eps in &DEFAULT_MARGINS {
        let hs: Vec<f64> = sweep
            .rows
            .iter()
            .filter(|r| r.margin == eps && r.optimum.is_some())
            .map(|r| r.h)
            .collect();
        for w in hs.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "margin {eps}: {hs:?}");
        }
    }
}

#[test]
fn printed_regularization_never_satisfies_both_requirements() {
    let spec = boundary_spec();
    let opts = OptimizeOptions::for_problem(&spec);
    let sweep = regularization_sweep(
        &spec,
        &DEFAULT_PENALTIES,
        &DEFAULT_MARGINS,
        RegularizationForm::AsPrinted,
        DEFAULT_DELTA,
        &opts,
    )
    .unwrap();
    assert!(!sweep.passed());
    // The margin only shifts the objective by a constant.
    for &p in &DEFAULT_PENALTIES {
        let hs: Vec<f64> = sweep
            .rows
            .iter()
            .filter(|r| r.penalty == p)
            .map(|r| r.h)
            .collect();
        for v in &hs {
            assert!((v - hs[0]).abs() <= 1e-6, "p = {p}: {hs:?}");
        }
    }
}
