//! Closed-loop simulation of plant and controller.
//!
//! The stacked state `(ξ, υ)` follows `ξ̇ = f(ξ, υ)`, `υ̇ = g(ξ, υ)` and is
//! integrated with classical fixed-step RK4, solving the controller QP at
//! every stage.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hocbf::HocbfStack;
use crate::linalg::Matrix;
use crate::problem::{consistent_input, ProblemSpec};
use crate::qp::{controller_field, ControllerError, FieldEval};
pub use crate::qp::{ControllerParams, Mode};
use crate::scalar::{distance, norm, Real};

/// Sample values below `-VIOLATION_TOL` count as constraint violations.
pub const VIOLATION_TOL: f64 = 1e-6;
/// Sample values below `-HARD_VIOLATION_TOL` count as hard violations.
pub const HARD_VIOLATION_TOL: f64 = 1e-4;
/// Threshold on `‖g‖`, `‖f‖` and the target distance for convergence.
pub const CONVERGENCE_TOL: f64 = 1e-4;
pub const TARGET_TOL: f64 = 1e-2;
/// Baseline runs must dip below `-BASELINE_VIOLATION` to count as violating.
pub const BASELINE_VIOLATION: f64 = 1e-3;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step must be positive and finite, got {0}")]
    Step(f64),
    #[error("horizon {horizon} is shorter than the time step {dt}")]
    Horizon { horizon: f64, dt: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid controller parameters: {0}")]
    Params(String),
    #[error("trajectory is empty")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trajectory file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SimOptions<T> {
    pub horizon: T,
    pub dt: T,
}

impl<T: Real> Default for SimOptions<T> {
    fn default() -> Self {
        SimOptions {
            horizon: T::lit(DEFAULT_HORIZON),
            dt: T::lit(DEFAULT_DT),
        }
    }
}

impl<T: Real> SimOptions<T> {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_f64_lossy() as usize
    }
}

/// One recorded time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub h: T,
    pub b: T,
    /// `h_1, …, h_r`
    pub levels: Vec<T>,
    pub phi_x: T,
    pub phi_wu: T,
    pub g_norm: T,
    pub f_norm: T,
    pub active_b: bool,
    pub active_h: bool,
    pub lambda_b: T,
    pub lambda_h: T,
}

/// Why an integration stopped before the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortEvent {
    /// The controller QP had no solution (or the steady state failed) at a stage.
    Controller {
        t: f64,
        x: Vec<f64>,
        u: Vec<f64>,
        error: String,
    },
    NonFinite {
        t: f64,
    },
}

impl AbortEvent {
    pub fn time(&self) -> f64 {
        match self {
            AbortEvent::Controller { t, .. } | AbortEvent::NonFinite { t } => *t,
        }
    }
}

/// Everything needed to reproduce a run; written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub problem: String,
    pub scalar: String,
    pub mode: Mode,
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub relative_degree: usize,
    pub dt: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub u0_rule: String,
    pub seed: Option<u64>,
    pub start_in_intersection: bool,
    pub warnings: Vec<String>,
    pub abort: Option<AbortEvent>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub samples: Vec<Sample<T>>,
    pub meta: RunMetadata,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample<T>> {
        self.samples.last()
    }

    pub fn aborted(&self) -> bool {
        self.meta.abort.is_some()
    }

    pub fn n(&self) -> usize {
        self.samples
            .first()
            .map_or(self.meta.x0.len(), |s| s.x.len())
    }

    pub fn m(&self) -> usize {
        self.samples
            .first()
            .map_or(self.meta.u0.len(), |s| s.u.len())
    }

    pub fn r(&self) -> usize {
        self.meta.relative_degree
    }

    pub fn header(&self) -> Vec<String> {
        csv_header(self.n(), self.m(), self.r())
    }
}

fn to_f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|a| a.to_f64_lossy()).collect()
}

fn scalar_name<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// How the initial input is chosen when none is given.
#[derive(Debug, Clone, PartialEq)]
pub enum U0Rule<T> {
    /// `u0` with `f(x0, u0) = 0` when one exists, else the zero input.
    Consistent,
    Zero,
    Fixed(Vec<T>),
}

/// Initial input for `x0` under `rule`, with a label for the metadata.
pub fn initial_input<T: Real>(
    spec: &ProblemSpec<T>,
    x0: &[T],
    rule: &U0Rule<T>,
) -> (Vec<T>, String) {
    match rule {
        U0Rule::Fixed(u) => (u.clone(), "given".to_string()),
        U0Rule::Zero => (vec![T::zero(); spec.m()], "zero".to_string()),
        U0Rule::Consistent => match consistent_input(spec, x0) {
            Some(u) => (u, "steady_state_consistent".to_string()),
            None => (
                vec![T::zero(); spec.m()],
                "zero (no consistent input)".to_string(),
            ),
        },
    }
}

struct Closed<'a, T: Real> {
    stack: &'a HocbfStack<T>,
    params: &'a ControllerParams<T>,
    n: usize,
    guess: Option<Vec<T>>,
}

impl<T: Real> Closed<'_, T> {
    fn field(&mut self, z: &[T]) -> Result<(Vec<T>, FieldEval<T>), ControllerError> {
        let (x, u) = z.split_at(self.n);
        let ev = controller_field(self.stack, self.params, x, u, self.guess.as_deref())?;
        self.guess = Some(ev.steady_state.x_ss.clone());
        let mut dz = self.stack.spec().f(x, u);
        dz.extend_from_slice(&ev.g);
        Ok((dz, ev))
    }

    fn sample(&self, t: T, z: &[T], dz: &[T], ev: &FieldEval<T>) -> Sample<T> {
        let spec = self.stack.spec();
        let (x, u) = z.split_at(self.n);
        let values = self.stack.values(x, u);
        Sample {
            t,
            x: x.to_vec(),
            u: u.to_vec(),
            h: values[0],
            b: spec.b(u),
            levels: values[1..].to_vec(),
            phi_x: spec.phi(x),
            phi_wu: spec.phi(&ev.steady_state.x_ss),
            g_norm: norm(&ev.g),
            f_norm: norm(&dz[..self.n]),
            active_b: ev.solution.active_set.has_b(),
            active_h: ev.solution.active_set.has_h(),
            lambda_b: ev.solution.lambda_b,
            lambda_h: ev.solution.lambda_h,
        }
    }
}

fn axpy<T: Real>(z: &[T], k: &[T], h: T) -> Vec<T> {
    z.iter().zip(k).map(|(&a, &b)| a + h * b).collect()
}

/// Integrates the closed loop from `(x0, u0)`.
///
/// A QP failure or a non-finite state ends the run early; the partial
/// trajectory is returned with the event in `meta.abort`.
pub fn integrate<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    x0: &[T],
    u0: &[T],
    opts: SimOptions<T>,
) -> Result<Trajectory<T>, SimError> {
    let spec = stack.spec();
    let (n, m) = (spec.n(), spec.m());
    if x0.len() != n {
        return Err(SimError::Dimension {
            what: "x0",
            got: x0.len(),
            expected: n,
        });
    }
    if u0.len() != m {
        return Err(SimError::Dimension {
            what: "u0",
            got: u0.len(),
            expected: m,
        });
    }
    params.validate().map_err(SimError::Params)?;
    let dt = opts.dt;
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(SimError::Step(dt.to_f64_lossy()));
    }
    if !(opts.horizon >= dt) {
        return Err(SimError::Horizon {
            horizon: opts.horizon.to_f64_lossy(),
            dt: dt.to_f64_lossy(),
        });
    }

    let membership = stack.membership(x0, u0);
    let mut warnings = Vec::new();
    if params.mode == Mode::Hocbf && !membership.in_intersection {
        warnings
            .push("initial condition is outside the intersection of the barrier sets".to_string());
    }
    let mut meta = RunMetadata {
        problem: spec.name.clone(),
        scalar: scalar_name::<T>().to_string(),
        mode: params.mode,
        epsilon: params.epsilon.to_f64_lossy(),
        alpha: params.alpha.to_f64_lossy(),
        gamma: params.gamma.to_f64_lossy(),
        beta: spec.beta().to_f64_lossy(),
        relative_degree: spec.relative_degree(),
        dt: dt.to_f64_lossy(),
        horizon: opts.horizon.to_f64_lossy(),
        x0: to_f64s(x0),
        u0: to_f64s(u0),
        u0_rule: "given".to_string(),
        seed: None,
        start_in_intersection: membership.in_intersection,
        warnings,
        abort: None,
    };

    let steps = opts.steps();
    let mut sys = Closed {
        stack,
        params,
        n,
        guess: None,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    let mut z: Vec<T> = x0.iter().chain(u0).copied().collect();
    let half = dt * T::lit(0.5);
    let abort = |t: T, z: &[T], e: ControllerError| AbortEvent::Controller {
        t: t.to_f64_lossy(),
        x: to_f64s(&z[..n]),
        u: to_f64s(&z[n..]),
        error: e.to_string(),
    };

    for k in 0..=steps {
        let t = T::lit(k as f64) * dt;
        if z.iter().any(|v| !v.is_finite()) {
            meta.abort = Some(AbortEvent::NonFinite {
                t: t.to_f64_lossy(),
            });
            break;
        }
        let (k1, ev) = match sys.field(&z) {
            Ok(r) => r,
            Err(e) => {
                meta.abort = Some(abort(t, &z, e));
                break;
            }
        };
        samples.push(sys.sample(t, &z, &k1, &ev));
        if k == steps {
            break;
        }
        let stage = |sys: &mut Closed<T>, zs: Vec<T>, ts: T| {
            sys.field(&zs).map(|r| r.0).map_err(|e| (ts, zs, e))
        };
        let result = stage(&mut sys, axpy(&z, &k1, half), t + half).and_then(|k2| {
            let k3 = stage(&mut sys, axpy(&z, &k2, half), t + half)?;
            let k4 = stage(&mut sys, axpy(&z, &k3, dt), t + dt)?;
            Ok((k2, k3, k4))
        });
        match result {
            Ok((k2, k3, k4)) => {
                let sixth = dt / T::lit(6.0);
                for i in 0..z.len() {
                    z[i] = z[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
                }
            }
            Err((ts, zs, e)) => {
                meta.abort = Some(abort(ts, &zs, e));
                break;
            }
        }
    }
    Ok(Trajectory { samples, meta })
}

/// Minima of the constraint functions along a run and a convergence verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub min_h: f64,
    pub min_b: f64,
    /// Minima of `h_1, …, h_r`.
    pub min_levels: Vec<f64>,
    /// First sample time at which any of `h, b, h_i` is below `-VIOLATION_TOL`.
    pub first_violation_time: Option<f64>,
    pub hard_violation: bool,
    pub converged: bool,
    pub final_distance_to_target: Option<f64>,
    pub final_g_norm: f64,
    pub final_f_norm: f64,
    pub aborted: bool,
}

pub fn safety_report<T: Real>(
    traj: &Trajectory<T>,
    target: Option<&[T]>,
) -> Result<SafetyReport, SimError> {
    let last = traj.last().ok_or(SimError::Empty)?;
    let r = last.levels.len();
    let (mut min_h, mut min_b) = (f64::INFINITY, f64::INFINITY);
    let mut min_levels = vec![f64::INFINITY; r];
    let mut first_violation_time = None;
    for s in &traj.samples {
        let h = s.h.to_f64_lossy();
        let b = s.b.to_f64_lossy();
        min_h = min_h.min(h);
        min_b = min_b.min(b);
        let mut worst = h.min(b);
        for (mi, &li) in min_levels.iter_mut().zip(&s.levels) {
            let li = li.to_f64_lossy();
            *mi = mi.min(li);
            worst = worst.min(li);
        }
        if first_violation_time.is_none() && worst < -VIOLATION_TOL {
            first_violation_time = Some(s.t.to_f64_lossy());
        }
    }
    let overall = min_levels.iter().fold(min_h.min(min_b), |a, &b| a.min(b));
    let final_distance_to_target = target.map(|x| distance(&last.x, x).to_f64_lossy());
    let final_g_norm = last.g_norm.to_f64_lossy();
    let final_f_norm = last.f_norm.to_f64_lossy();
    let converged = !traj.aborted()
        && final_g_norm < CONVERGENCE_TOL
        && final_f_norm < CONVERGENCE_TOL
        && final_distance_to_target.map_or(true, |d| d < TARGET_TOL);
    Ok(SafetyReport {
        min_h,
        min_b,
        min_levels,
        first_violation_time,
        hard_violation: overall < -HARD_VIOLATION_TOL,
        converged,
        final_distance_to_target,
        final_g_norm,
        final_f_norm,
        aborted: traj.aborted(),
    })
}

pub fn min_h<T: Real>(traj: &Trajectory<T>) -> f64 {
    traj.samples
        .iter()
        .map(|s| s.h.to_f64_lossy())
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of [`find_baseline_violation`].
#[derive(Debug, Clone)]
pub enum BaselineSearch<T> {
    Found {
        index: usize,
        x0: Vec<T>,
        u0: Vec<T>,
        baseline: Trajectory<T>,
        hocbf: Trajectory<T>,
    },
    NotFound {
        tried: usize,
        /// Candidates outside the intersection of the barrier sets.
        skipped: Vec<usize>,
    },
}

/// First candidate `(x0, u0)` from which the input-only controller violates
/// `h ≥ 0` by more than `BASELINE_VIOLATION` while the barrier controller
/// stays within `VIOLATION_TOL`.
///
/// Candidates are simulated in parallel batches but the answer is always the
/// lowest qualifying index.
pub fn find_baseline_violation<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    candidates: &[(Vec<T>, Vec<T>)],
    opts: SimOptions<T>,
) -> Result<BaselineSearch<T>, SimError> {
    let hocbf_params = params.with_mode(Mode::Hocbf);
    let base_params = params.with_mode(Mode::InputOnly);
    let mut skipped = Vec::new();
    let mut feasible = Vec::new();
    for (i, (x0, u0)) in candidates.iter().enumerate() {
        if x0.len() != stack.spec().n()
            || u0.len() != stack.spec().m()
            || !stack.membership(x0, u0).in_intersection
        {
            skipped.push(i);
        } else {
            feasible.push(i);
        }
    }
    let batch = rayon::current_num_threads().max(1);
    let mut tried = 0;
    for chunk in feasible.chunks(batch) {
        let runs: Vec<_> = chunk
            .par_iter()
            .map(|&i| {
                let (x0, u0) = &candidates[i];
                let base = integrate(stack, &base_params, x0, u0, opts)?;
                if min_h(&base) >= -BASELINE_VIOLATION {
                    return Ok(None);
                }
                let safe = integrate(stack, &hocbf_params, x0, u0, opts)?;
                Ok::<_, SimError>(
                    (min_h(&safe) >= -VIOLATION_TOL && !safe.aborted()).then_some((i, base, safe)),
                )
            })
            .collect();
        tried += chunk.len();
        for run in runs {
            if let Some((index, baseline, hocbf)) = run? {
                let (x0, u0) = candidates[index].clone();
                return Ok(BaselineSearch::Found {
                    index,
                    x0,
                    u0,
                    baseline,
                    hocbf,
                });
            }
        }
    }
    Ok(BaselineSearch::NotFound { tried, skipped })
}

/// Maximizer of `h`, by Newton steps on `∇h = 0` with a finite-difference
/// Hessian shifted to be negative definite.
pub fn constraint_center<T: Real>(spec: &ProblemSpec<T>) -> Option<Vec<T>> {
    let n = spec.n();
    let mut x = vec![T::zero(); n];
    for _ in 0..30 {
        let g = spec.grad_h(&x);
        if norm(&g) <= T::lit(1e-12) {
            return Some(x);
        }
        let mut hess = Matrix::zeros(n, n);
        for j in 0..n {
            let step = T::lit(1e-4) * (T::one() + x[j].abs());
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] = up[j] + step;
            dn[j] = dn[j] - step;
            let (gp, gm) = (spec.grad_h(&up), spec.grad_h(&dn));
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (step + step);
            }
        }
        let shift = T::lit(1e-10) * hess.max_abs().max(T::one());
        for i in 0..n {
            hess[(i, i)] = hess[(i, i)] - shift;
        }
        let neg: Vec<T> = g.iter().map(|&v| -v).collect();
        let d = hess.solve(&neg)?;
        x = x.iter().zip(&d).map(|(&a, &b)| a + b).collect();
    }
    (norm(&spec.grad_h(&x)) <= T::lit(1e-8)).then_some(x)
}

/// Starts on the level set `h = level` around the maximizer of `h`, each
/// paired with a steady-state-consistent input.
///
/// Two-dimensional states use evenly spaced angles; otherwise directions
/// are drawn from `seed`. Directions along which `h` stays above `level`
/// are dropped.
pub fn ring_candidates<T: Real>(
    spec: &ProblemSpec<T>,
    count: usize,
    level: T,
    seed: u64,
) -> Vec<(Vec<T>, Vec<T>)> {
    use rand::{Rng, SeedableRng};
    let Some(c) = constraint_center(spec) else {
        return Vec::new();
    };
    if spec.h(&c) <= level {
        return Vec::new();
    }
    let n = spec.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let at = |d: &[T], t: T| {
        c.iter()
            .zip(d)
            .map(|(&a, &b)| a + t * b)
            .collect::<Vec<T>>()
    };
    let mut out = Vec::new();
    for k in 0..count {
        let d: Vec<T> = if n == 2 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![T::lit(th.cos()), T::lit(th.sin())]
        } else {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let len = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|a| T::lit(a / len)).collect()
        };
        let mut hi = T::one();
        while spec.h(&at(&d, hi)) > level && hi < T::lit(1e3) {
            hi = hi * T::lit(2.0);
        }
        if spec.h(&at(&d, hi)) > level {
            continue;
        }
        let mut lo = T::zero();
        for _ in 0..80 {
            let mid = (lo + hi) * T::lit(0.5);
            if spec.h(&at(&d, mid)) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x0 = at(&d, lo);
        if let Some(u0) = consistent_input(spec, &x0) {
            out.push((x0, u0));
        }
    }
    out
}

/// Result of one run of a sweep.
#[derive(Debug)]
pub struct SweepRun<T> {
    pub x0: Vec<T>,
    pub u0: Vec<T>,
    pub result: Result<Trajectory<T>, SimError>,
}

impl<T: Real> SweepRun<T> {
    /// Failed to start, started outside the barrier sets, or aborted.
    pub fn flagged(&self) -> bool {
        match &self.result {
            Ok(t) => t.aborted() || !t.meta.start_in_intersection,
            Err(_) => true,
        }
    }
}

/// Independent integrations from each `x0`; results are in input order.
pub fn sweep<T: Real>(
    stack: &HocbfStack<T>,
    params: &ControllerParams<T>,
    x0s: &[Vec<T>],
    u0_rule: &U0Rule<T>,
    opts: SimOptions<T>,
) -> Vec<SweepRun<T>> {
    x0s.par_iter()
        .map(|x0| {
            let (u0, label) = if x0.len() == stack.spec().n() {
                initial_input(stack.spec(), x0, u0_rule)
            } else {
                (vec![T::zero(); stack.spec().m()], "zero".to_string())
            };
            let result = integrate(stack, params, x0, &u0, opts).map(|mut t| {
                t.meta.u0_rule = label;
                t
            });
            SweepRun {
                x0: x0.clone(),
                u0,
                result,
            }
        })
        .collect()
}

pub fn csv_header(n: usize, m: usize, r: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.push("h".into());
    h.push("b".into());
    h.extend((1..=r).map(|i| format!("h{i}")));
    for c in [
        "phi_x", "phi_wu", "g_norm", "f_norm", "active_b", "active_h", "lambda_b", "lambda_h",
    ] {
        h.push(c.into());
    }
    h
}

pub fn write_csv<T: Real>(traj: &Trajectory<T>, path: &Path) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(traj.header())?;
    let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for s in &traj.samples {
        let mut rec: Vec<String> = Vec::with_capacity(traj.header().len());
        rec.push(s.t.to_string());
        rec.extend(s.x.iter().chain(&s.u).map(|v| v.to_string()));
        rec.push(s.h.to_string());
        rec.push(s.b.to_string());
        rec.extend(s.levels.iter().map(|v| v.to_string()));
        for v in [s.phi_x, s.phi_wu, s.g_norm, s.f_norm] {
            rec.push(v.to_string());
        }
        rec.push(flag(s.active_b));
        rec.push(flag(s.active_h));
        rec.push(s.lambda_b.to_string());
        rec.push(s.lambda_h.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metadata(meta: &RunMetadata, path: &Path) -> Result<(), SimError> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), meta)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata, SimError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Sidecar path for a trajectory CSV: `run.csv` → `run.meta.json`.
pub fn metadata_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the CSV and its metadata sidecar.
pub fn save<T: Real>(traj: &Trajectory<T>, csv_path: &Path) -> Result<(), SimError> {
    write_csv(traj, csv_path)?;
    write_metadata(&traj.meta, &metadata_path(csv_path))
}

/// Reads a trajectory written by [`save`].
pub fn load<T: Real>(csv_path: &Path) -> Result<Trajectory<T>, SimError> {
    let meta = read_metadata(&metadata_path(csv_path))?;
    let mut rd = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let (n, m, r) = (meta.x0.len(), meta.u0.len(), meta.relative_degree);
    if header != csv_header(n, m, r) {
        return Err(SimError::Format(format!("unexpected header {header:?}")));
    }
    let mut samples = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let vals: Vec<T> = rec
            .iter()
            .map(|f| {
                f.parse::<T>()
                    .map_err(|_| SimError::Format(format!("bad number `{f}`")))
            })
            .collect::<Result<_, _>>()?;
        let mut it = vals.into_iter();
        let mut take = |k: usize| (&mut it).take(k).collect::<Vec<T>>();
        let t = take(1)[0];
        let x = take(n);
        let u = take(m);
        let hb = take(2);
        let levels = take(r);
        let rest = take(8);
        samples.push(Sample {
            t,
            x,
            u,
            h: hb[0],
            b: hb[1],
            levels,
            phi_x: rest[0],
            phi_wu: rest[1],
            g_norm: rest[2],
            f_norm: rest[3],
            active_b: rest[4] != T::zero(),
            active_h: rest[5] != T::zero(),
            lambda_b: rest[6],
            lambda_h: rest[7],
        });
    }
    Ok(Trajectory { samples, meta })
}
