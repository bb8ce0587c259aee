use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use safeflow::analysis::regularize::{DEFAULT_MARGINS, DEFAULT_PENALTIES};
use safeflow::analysis::{
    boundary_equilibrium_conditions, certificate::DEFAULT_CRCQ_BOUND, certificate_scan,
    crcq_sufficient_check, equilibrium_check, offline_optimize, regularization_sweep,
    sample_double_boundary, BoundaryEquilibriumReport, CertificateScan, CrcqReport,
    EquilibriumReport, OptimizeOptions, OptimizeResult, RegularizationForm,
};
use safeflow::hocbf::{
    default_sample_box, sample_boundary, verify_relative_degree, RelativeDegreeReport,
};
use safeflow::sim::{
    constraint_center, find_baseline_violation, initial_input, ring_candidates, safety_report,
    save, sweep, BaselineSearch, SafetyReport, Trajectory,
};
use safeflow::{integrate, ProblemSpec, Real};

use crate::args::{usage, Resolved, RunConfig};
use crate::plot::write_plot_script;

/// Whether the command's domain check held (exit 0) or not (exit 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|a| format!("{a:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|a| a.to_f64_lossy()).collect()
}

fn lits<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&a| T::lit(a)).collect()
}

fn optimum<T: Real>(spec: &ProblemSpec<T>, seed: u64) -> Option<OptimizeResult> {
    let opts = OptimizeOptions {
        seed,
        ..OptimizeOptions::for_problem(spec)
    };
    offline_optimize(spec, &opts).ok()
}

fn save_run<T: Real>(traj: &Trajectory<T>, path: &Path) -> anyhow::Result<()> {
    save(traj, path).with_context(|| format!("writing {}", path.display()))
}

fn print_safety(report: &SafetyReport) {
    println!("min_h                {:.6e}", report.min_h);
    println!("min_b                {:.6e}", report.min_b);
    for (i, v) in report.min_levels.iter().enumerate() {
        println!("min_h{}               {v:.6e}", i + 1);
    }
    match report.first_violation_time {
        Some(t) => println!("first violation      t = {t}"),
        None => println!("first violation      none"),
    }
    if let Some(d) = report.final_distance_to_target {
        println!("final distance       {d:.6e}");
    }
    println!("final |g|            {:.6e}", report.final_g_norm);
    println!("final |f|            {:.6e}", report.final_f_norm);
    println!("converged            {}", report.converged);
    println!("aborted              {}", report.aborted);
}

pub fn simulate<T: Real>(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let r: Resolved<T> = cfg.resolve()?;
    if r.x0s.len() != 1 {
        return Err(usage("simulate takes a single --x0"));
    }
    let x0 = &r.x0s[0];
    let (u0, label) = initial_input(&r.spec, x0, &r.u0);
    let opt = optimum(&r.spec, cfg.seed);
    let target: Option<Vec<T>> = opt.as_ref().map(|o| lits(&o.x));
    let mut traj = integrate(&r.stack, &r.params, x0, &u0, r.opts)?;
    traj.meta.u0_rule = label;
    traj.meta.seed = Some(cfg.seed);
    traj.meta.warnings.extend(r.warnings.iter().cloned());
    let report = safety_report(&traj, target.as_deref())?;

    prepare_dir(&cfg.out)?;
    let csv = cfg.out.join("trajectory.csv");
    save_run(&traj, &csv)?;
    write_plot_script(&cfg.out)?;
    write_json(
        &cfg.out.join("summary.json"),
        &json!({ "command": "simulate", "metadata": traj.meta, "safety": report, "optimum": opt }),
    )?;

    println!("problem              {}", r.spec.name);
    println!("mode                 {}", r.params.mode);
    println!("x0                   {}", fmt_vec(&traj.meta.x0));
    println!(
        "u0                   {} [{}]",
        fmt_vec(&traj.meta.u0),
        traj.meta.u0_rule
    );
    if let Some(o) = &opt {
        println!("optimizer            x = {}", fmt_vec(&o.x));
    }
    for w in &traj.meta.warnings {
        println!("warning              {w}");
    }
    if let Some(event) = &traj.meta.abort {
        println!("abort                {event:?}");
    }
    print_safety(&report);
    println!("trajectory           {}", csv.display());
    let safe = report.first_violation_time.is_none() && !report.aborted;
    println!(
        "result               {}",
        if safe { "safe" } else { "VIOLATION" }
    );
    Ok(Outcome::from_pass(safe))
}

pub fn compare<T: Real>(
    cfg: &RunConfig,
    candidates: usize,
    ring_level: f64,
) -> anyhow::Result<Outcome> {
    let r: Resolved<T> = cfg.resolve()?;
    let list: Vec<(Vec<T>, Vec<T>)> = if cfg.x0.is_empty() {
        if !(ring_level.is_finite()) {
            return Err(usage(format!(
                "--ring-level must be finite, got {ring_level}"
            )));
        }
        ring_candidates(&r.spec, candidates, T::lit(ring_level), cfg.seed)
    } else {
        r.x0s
            .iter()
            .map(|x0| (x0.clone(), initial_input(&r.spec, x0, &r.u0).0))
            .collect()
    };
    if list.is_empty() {
        return Err(usage(
            "no candidate initial conditions (is the ring level above max h?)",
        ));
    }
    prepare_dir(&cfg.out)?;
    println!("problem              {}", r.spec.name);
    println!("candidates           {}", list.len());
    let outcome = match find_baseline_violation(&r.stack, &r.params, &list, r.opts)? {
        BaselineSearch::Found {
            index,
            x0,
            u0,
            mut baseline,
            mut hocbf,
        } => {
            for t in [&mut baseline, &mut hocbf] {
                t.meta.seed = Some(cfg.seed);
                t.meta.u0_rule = "steady_state_consistent".into();
            }
            let base_report = safety_report(&baseline, None)?;
            let safe_report = safety_report(&hocbf, None)?;
            save_run(&baseline, &cfg.out.join("baseline.csv"))?;
            save_run(&hocbf, &cfg.out.join("hocbf.csv"))?;
            write_plot_script(&cfg.out)?;
            write_json(
                &cfg.out.join("compare.json"),
                &json!({
                    "command": "compare",
                    "found": true,
                    "index": index,
                    "x0": f64s(&x0),
                    "u0": f64s(&u0),
                    "baseline": base_report,
                    "hocbf": safe_report,
                }),
            )?;
            println!("found                candidate {index}");
            println!("x0                   {}", fmt_vec(&f64s(&x0)));
            println!("u0                   {}", fmt_vec(&f64s(&u0)));
            println!("input_only min_h     {:.6e}", base_report.min_h);
            println!("hocbf min_h          {:.6e}", safe_report.min_h);
            println!("files                baseline.csv hocbf.csv");
            Outcome::Success
        }
        BaselineSearch::NotFound { tried, skipped } => {
            write_json(
                &cfg.out.join("compare.json"),
                &json!({ "command": "compare", "found": false, "tried": tried, "skipped": skipped }),
            )?;
            println!("found                none");
            println!("simulated            {tried}");
            println!("skipped (infeasible) {skipped:?}");
            Outcome::Failure
        }
    };
    Ok(outcome)
}

/// Starts on two interior level sets of `h`, half on each.
pub fn interior_grid<T: Real>(spec: &ProblemSpec<T>, points: usize, seed: u64) -> Vec<Vec<T>> {
    let Some(c) = constraint_center(spec) else {
        return Vec::new();
    };
    let top = spec.h(&c);
    let outer = points / 2;
    let mut grid: Vec<Vec<T>> = ring_candidates(spec, points - outer, top * T::lit(0.8), seed)
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    grid.extend(
        ring_candidates(spec, outer, top * T::lit(0.3), seed)
            .into_iter()
            .map(|(x, _)| x),
    );
    grid
}

#[derive(Serialize)]
struct SweepRow {
    index: usize,
    x0: Vec<f64>,
    u0: Vec<f64>,
    status: String,
    safety: Option<SafetyReport>,
    file: Option<String>,
}

pub fn sweep_cmd<T: Real>(cfg: &RunConfig, points: usize) -> anyhow::Result<Outcome> {
    let r: Resolved<T> = cfg.resolve()?;
    let x0s = if cfg.x0.is_empty() {
        interior_grid(&r.spec, points, cfg.seed)
    } else {
        r.x0s.clone()
    };
    if x0s.is_empty() {
        return Err(usage("no initial conditions to sweep"));
    }
    let opt = optimum(&r.spec, cfg.seed);
    let target: Option<Vec<T>> = opt.as_ref().map(|o| lits(&o.x));
    let dir = cfg.out.join("sweep");
    prepare_dir(&dir)?;
    let runs = sweep(&r.stack, &r.params, &x0s, &r.u0, r.opts);
    let mut rows = Vec::new();
    let mut pass = true;
    for (i, run) in runs.into_iter().enumerate() {
        let flagged = run.flagged();
        let mut row = SweepRow {
            index: i,
            x0: f64s(&run.x0),
            u0: f64s(&run.u0),
            status: String::new(),
            safety: None,
            file: None,
        };
        match run.result {
            Ok(mut traj) => {
                traj.meta.seed = Some(cfg.seed);
                let report = safety_report(&traj, target.as_deref())?;
                let name = format!("run_{i:03}.csv");
                save_run(&traj, &dir.join(&name))?;
                row.status = if !traj.meta.start_in_intersection {
                    "skipped".into()
                } else if flagged {
                    "aborted".into()
                } else if report.converged {
                    "converged".into()
                } else {
                    "not_converged".into()
                };
                if traj.meta.start_in_intersection && (report.hard_violation || flagged) {
                    pass = false;
                }
                row.safety = Some(report);
                row.file = Some(name);
            }
            Err(e) => {
                row.status = format!("error: {e}");
                pass = false;
            }
        }
        rows.push(row);
    }
    write_plot_script(&cfg.out)?;
    write_json(
        &cfg.out.join("sweep.json"),
        &json!({ "command": "sweep", "problem": r.spec.name, "optimum": opt, "runs": rows }),
    )?;

    println!(
        "problem {}  mode {}  runs {}",
        r.spec.name,
        r.params.mode,
        rows.len()
    );
    println!(
        "{:>3}  {:<28} {:<14} {:>12} {:>12} {:>12}",
        "#", "x0", "status", "final_dist", "min_h", "min_b"
    );
    for row in &rows {
        let (d, h, b) = row
            .safety
            .as_ref()
            .map_or((f64::NAN, f64::NAN, f64::NAN), |s| {
                (
                    s.final_distance_to_target.unwrap_or(f64::NAN),
                    s.min_h,
                    s.min_b,
                )
            });
        println!(
            "{:>3}  {:<28} {:<14} {:>12.4e} {:>12.4e} {:>12.4e}",
            row.index,
            fmt_vec(&row.x0),
            row.status,
            d,
            h,
            b
        );
    }
    println!("result {}", if pass { "ok" } else { "FAILED" });
    Ok(Outcome::from_pass(pass))
}

#[derive(Serialize)]
struct Prop2Check {
    /// `h_i − βⁱ h` at the optimizer, `i = 1..=r`.
    deviations: Vec<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct CheckReport {
    problem: String,
    relative_degree: RelativeDegreeReport,
    certificates: CertificateScan,
    crcq: CrcqReport,
    optimum: Option<OptimizeResult>,
    level_identity: Option<Prop2Check>,
    conditions: Option<BoundaryEquilibriumReport>,
    equilibrium: Option<EquilibriumReport>,
    passed: bool,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn check<T: Real>(cfg: &RunConfig, samples: usize) -> anyhow::Result<Outcome> {
    let r: Resolved<T> = cfg.resolve()?;
    let (spec, stack) = (&r.spec, &r.stack);
    let region = default_sample_box(spec);
    let boundary = sample_boundary(stack, &region, samples, cfg.seed)?;
    let rd = verify_relative_degree(spec, &boundary.points)?;

    // the certificate and alignment conditions are stated on X_r only
    let tol = T::lit(1e-9);
    let in_xr = |(x, u): &(Vec<T>, Vec<T>)| {
        let m = stack.membership(x, u);
        m.h >= -tol && m.b >= -tol && m.levels.iter().rev().skip(1).all(|&v| v >= -tol)
    };
    let double: Vec<(Vec<T>, Vec<T>)> = sample_double_boundary(stack, &region, 400, cfg.seed)
        .into_iter()
        .filter(in_xr)
        .collect();
    let relevant: Vec<(Vec<T>, Vec<T>)> = boundary
        .points
        .iter()
        .filter(|p| in_xr(p))
        .cloned()
        .chain(double.iter().cloned())
        .collect();
    let certs = certificate_scan(stack, &relevant);
    let crcq = crcq_sufficient_check(stack, &double, DEFAULT_CRCQ_BOUND);

    let opt = optimum(spec, cfg.seed);
    let mut identity = None;
    let mut conditions = None;
    let mut equilibrium = None;
    if let Some(o) = &opt {
        let (x, u): (Vec<T>, Vec<T>) = (lits(&o.x), lits(&o.u));
        let h = spec.h(&x).to_f64_lossy();
        let beta = spec.beta().to_f64_lossy();
        let levels = stack.values(&x, &u);
        let deviations: Vec<f64> = (1..levels.len())
            .map(|i| levels[i].to_f64_lossy() - beta.powi(i as i32) * h)
            .collect();
        let passed = deviations
            .iter()
            .all(|d| d.abs() <= 1e-10 * (1.0 + beta.powi(levels.len() as i32)));
        identity = Some(Prop2Check { deviations, passed });
        conditions = Some(boundary_equilibrium_conditions(stack, &x, &u));
        equilibrium = equilibrium_check(stack, &r.params, &x, &u).ok();
    }

    let rd_ok = rd.passed();
    let cert_ok = certs.passed();
    let kkt_ok = opt.as_ref().is_some_and(|o| o.kkt.is_critical);
    let identity_ok = identity.as_ref().is_some_and(|p| p.passed);
    let cond_holds = conditions.as_ref().is_some_and(|c| c.any_holds());
    // equilibria coincide with critical points only under one of the conditions
    let eq_ok = !cond_holds || equilibrium.as_ref().is_some_and(|e| e.is_equilibrium);
    // the alignment bound is only sufficient for constant rank and is reported, not enforced
    let passed = rd_ok && cert_ok && kkt_ok && identity_ok && eq_ok;

    println!(
        "problem {}  r = {}  beta = {}",
        spec.name,
        spec.relative_degree(),
        spec.beta()
    );
    println!(
        "relative degree      {}  ({} samples, {} near h_r = 0)",
        verdict(rd_ok),
        rd.samples,
        rd.boundary_samples
    );
    for v in &rd.violations {
        println!("    {v}");
    }
    println!(
        "feasibility certs    {}  ({}/{} certified, {} on a boundary)",
        verdict(cert_ok),
        certs.certified,
        certs.samples,
        certs.on_boundary
    );
    match crcq.passed {
        Some(ok) => println!(
            "normal alignment     {}  (max {:.6} over {} double-boundary samples, bound {}; informational)",
            if ok { "within bound" } else { "above bound" },
            crcq.max_alignment.unwrap_or(f64::NAN),
            crcq.samples,
            crcq.bound
        ),
        None => println!("normal alignment     INCONCLUSIVE  (no double-boundary samples)"),
    }
    match &opt {
        Some(o) => {
            println!(
                "optimizer            x = {}  u = {}",
                fmt_vec(&o.x),
                fmt_vec(&o.u)
            );
            println!(
                "kkt                  {}  (stationarity {:.2e}, complementarity {:.2e}, lambda_h {:.4e}, lambda_b {:.4e})",
                verdict(kkt_ok),
                o.kkt.stationarity_residual,
                o.kkt.complementarity_residual,
                o.kkt.lambda_h,
                o.kkt.lambda_b
            );
        }
        None => println!("optimizer            FAIL  (no feasible point found)"),
    }
    if let Some(p) = &identity {
        let devs: Vec<String> = p.deviations.iter().map(|d| format!("{d:.2e}")).collect();
        println!(
            "level identity       {}  (h_i - beta^i h: {})",
            verdict(p.passed),
            devs.join(", ")
        );
    }
    if let Some(c) = &conditions {
        println!(
            "interior/eigen conds {}  (interior {}, right {:?}, left {:?})",
            if c.any_holds() { "hold" } else { "none hold" },
            c.condition1,
            c.condition2.status,
            c.condition3.status
        );
        for w in &c.warnings {
            println!("    {w}");
        }
    }
    if let Some(e) = &equilibrium {
        println!(
            "equilibrium          {}  (|f| {:.2e}, |g| {:.2e})",
            verdict(eq_ok),
            e.f_norm,
            e.g_norm
        );
    }
    println!("result               {}", verdict(passed));

    prepare_dir(&cfg.out)?;
    write_json(
        &cfg.out.join("check.json"),
        &CheckReport {
            problem: spec.name.clone(),
            relative_degree: rd,
            certificates: certs,
            crcq,
            optimum: opt,
            level_identity: identity,
            conditions,
            equilibrium,
            passed,
        },
    )?;
    Ok(Outcome::from_pass(passed))
}

pub fn regularize_cmd<T: Real>(
    cfg: &RunConfig,
    delta: f64,
    form: RegularizationForm,
) -> anyhow::Result<Outcome> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(usage(format!(
            "--delta must be positive and finite, got {delta}"
        )));
    }
    let spec = cfg.spec::<T>()?;
    let opts = OptimizeOptions {
        seed: cfg.seed,
        ..OptimizeOptions::for_problem(&spec)
    };
    let res = regularization_sweep(
        &spec,
        &DEFAULT_PENALTIES,
        &DEFAULT_MARGINS,
        form,
        delta,
        &opts,
    )?;

    println!("problem {}  form {}  delta {}", spec.name, form, delta);
    println!(
        "reference optimizer x = {}  phi = {:.6e}  h = {:.3e}",
        fmt_vec(&res.reference.x),
        res.reference.objective,
        res.reference.h
    );
    println!(
        "{:>8} {:>8} {:>12} {:>12} {:>7}",
        "p", "eps", "h(x')", "|dPhi|", "pareto"
    );
    for row in &res.rows {
        println!(
            "{:>8} {:>8} {:>12.4e} {:>12.4e} {:>7}",
            row.penalty,
            row.margin,
            row.h,
            row.delta_phi,
            if row.pareto { "*" } else { "" }
        );
    }
    let first = res.acceptable().next();
    match first {
        Some(row) => println!(
            "first acceptable     p = {}, eps = {}: h = {:.4e}, |dPhi| = {:.4e}",
            row.penalty, row.margin, row.h, row.delta_phi
        ),
        None => println!("first acceptable     none"),
    }
    prepare_dir(&cfg.out)?;
    write_json(&cfg.out.join("regularize.json"), &res)?;
    println!("result               {}", verdict(res.passed()));
    Ok(Outcome::from_pass(res.passed()))
}
