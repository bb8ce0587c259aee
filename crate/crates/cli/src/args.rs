use std::fmt;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use safeflow::config::load_problem;
use safeflow::hocbf::{build_stack, HocbfStack};
use safeflow::problem::{builtin_problem_with_beta, lti_stability_warning, DEFAULT_BETA};
use safeflow::sim::{constraint_center, SimOptions, U0Rule, DEFAULT_DT, DEFAULT_HORIZON};
use safeflow::{ControllerParams, Mode, ProblemSpec, Real};

/// Bad flags or problem files. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalarKind {
    F64,
    F32,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Builtin problem name.
    #[arg(long, default_value = "paper_lti_r1", conflicts_with = "config")]
    pub problem: String,
    /// TOML problem file (overrides --problem).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Controller gain ε (defaults to the problem's suggestion, else 0.5).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Gain of the input-constraint row (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gain of the barrier row (default 5).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Barrier rate β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Override the declared relative degree.
    #[arg(long = "relative-degree")]
    pub relative_degree: Option<usize>,
    /// hocbf or input_only.
    #[arg(long, default_value = "hocbf")]
    pub mode: String,
    /// Initial state, comma separated (repeat for sweeps).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Vec<String>,
    /// Initial input: auto (steady-state consistent), zero, or a comma separated vector.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub u0: String,
    /// Horizon.
    #[arg(long = "T", default_value_t = DEFAULT_HORIZON, allow_negative_numbers = true)]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_DT, allow_negative_numbers = true)]
    pub dt: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    pub scalar: ScalarKind,
}

/// A run configuration resolved against one scalar type.
pub struct Resolved<T: Real> {
    pub spec: ProblemSpec<T>,
    pub stack: HocbfStack<T>,
    pub params: ControllerParams<T>,
    pub opts: SimOptions<T>,
    pub x0s: Vec<Vec<T>>,
    pub u0: U0Rule<T>,
    pub warnings: Vec<String>,
}

fn parse_vector<T: Real>(flag: &str, text: &str, len: usize) -> anyhow::Result<Vec<T>> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| usage(format!("--{flag} '{text}': {e}")))?;
    if vals.len() != len {
        return Err(usage(format!(
            "--{flag} '{text}' has {} entries, expected {len}",
            vals.len()
        )));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(usage(format!("--{flag} '{text}' has a non-finite entry")));
    }
    Ok(vals.into_iter().map(T::lit).collect())
}

fn positive(flag: &str, v: f64) -> anyhow::Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!(
            "--{flag} must be positive and finite, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn spec<T: Real>(&self) -> anyhow::Result<ProblemSpec<T>> {
        let beta = self.beta.map(|b| positive("beta", b)).transpose()?;
        let mut spec = match &self.config {
            Some(path) => {
                let spec = load_problem::<T>(path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                match beta {
                    Some(b) => spec
                        .with_beta(T::lit(b))
                        .map_err(|e| usage(e.to_string()))?,
                    None => spec,
                }
            }
            None => builtin_problem_with_beta(&self.problem, T::lit(beta.unwrap_or(DEFAULT_BETA)))
                .map_err(|e| usage(e.to_string()))?,
        };
        if let Some(r) = self.relative_degree {
            spec = spec
                .with_relative_degree(r)
                .map_err(|e| usage(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn mode(&self) -> anyhow::Result<Mode> {
        self.mode
            .parse::<Mode>()
            .map_err(|e| usage(format!("--mode: {e}")))
    }

    pub fn resolve<T: Real>(&self) -> anyhow::Result<Resolved<T>> {
        let spec = self.spec::<T>()?;
        let mut params = ControllerParams::for_problem(&spec).with_mode(self.mode()?);
        if let Some(e) = self.epsilon {
            params.epsilon = T::lit(positive("epsilon", e)?);
        }
        if let Some(a) = self.alpha {
            params.alpha = T::lit(positive("alpha", a)?);
        }
        if let Some(g) = self.gamma {
            params.gamma = T::lit(positive("gamma", g)?);
        }
        let dt = positive("dt", self.dt)?;
        let horizon = positive("T", self.horizon)?;
        if horizon < dt {
            return Err(usage(format!("--T {horizon} is shorter than --dt {dt}")));
        }
        let opts = SimOptions {
            horizon: T::lit(horizon),
            dt: T::lit(dt),
        };
        let (n, m) = (spec.n(), spec.m());
        let x0s = if self.x0.is_empty() {
            vec![default_x0(&spec)]
        } else {
            self.x0
                .iter()
                .map(|s| parse_vector("x0", s, n))
                .collect::<anyhow::Result<_>>()?
        };
        let u0 = match self.u0.as_str() {
            "auto" => U0Rule::Consistent,
            "zero" => U0Rule::Zero,
            s => U0Rule::Fixed(parse_vector("u0", s, m)?),
        };
        let warnings = lti_stability_warning(&spec).into_iter().collect();
        Ok(Resolved {
            stack: build_stack(&spec),
            spec,
            params,
            opts,
            x0s,
            u0,
            warnings,
        })
    }
}

/// The origin when it satisfies the state constraint, else the maximizer of `h`.
pub fn default_x0<T: Real>(spec: &ProblemSpec<T>) -> Vec<T> {
    let zero = vec![T::zero(); spec.n()];
    if spec.h(&zero) > T::zero() {
        zero
    } else {
        constraint_center(spec).unwrap_or(zero)
    }
}
