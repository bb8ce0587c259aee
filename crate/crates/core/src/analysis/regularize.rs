use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::analysis::optimize::{offline_optimize, OptimizeError, OptimizeOptions, OptimizeResult};
use crate::autodiff::{Carrier, Dims, GenericMap, MapRef};
use crate::problem::{ProblemError, ProblemSpec};
use crate::scalar::Real;

pub const DEFAULT_PENALTIES: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const DEFAULT_MARGINS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
/// Accepted objective loss of a regularized optimizer.
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationForm {
    /// `Φ + p (ε − h)²`
    #[default]
    ShiftedSquare,
    /// `Φ + p (ε − h²)`
    AsPrinted,
}

impl FromStr for RegularizationForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shifted" | "shifted_square" => Ok(RegularizationForm::ShiftedSquare),
            "printed" | "as_printed" => Ok(RegularizationForm::AsPrinted),
            other => Err(format!(
                "unknown regularization form '{other}' (expected shifted or printed)"
            )),
        }
    }
}

impl fmt::Display for RegularizationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegularizationForm::ShiftedSquare => "shifted",
            RegularizationForm::AsPrinted => "printed",
        })
    }
}

/// Objective plus a penalty pulling `h` toward the margin `ε`.
pub struct RegularizedObjective<T: Real> {
    objective: MapRef<T>,
    constraint: MapRef<T>,
    penalty: T,
    margin: T,
    form: RegularizationForm,
}

impl<T: Real> GenericMap<T> for RegularizedObjective<T> {
    fn dims(&self) -> Dims {
        self.objective.dims()
    }

    fn apply<S: Carrier<Real = T>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let phi = S::call(&*self.objective, x, u)[0];
        let h = S::call(&*self.constraint, x, u)[0];
        let gap = match self.form {
            RegularizationForm::ShiftedSquare => {
                let d = S::cst(self.margin) - h;
                d * d
            }
            RegularizationForm::AsPrinted => S::cst(self.margin) - h * h,
        };
        vec![phi + gap.scale(self.penalty)]
    }
}

pub fn regularize<T: Real>(
    spec: &ProblemSpec<T>,
    penalty: T,
    margin: T,
    form: RegularizationForm,
) -> Result<ProblemSpec<T>, ProblemError> {
    let obj = RegularizedObjective {
        objective: spec.objective().clone(),
        constraint: spec.state_constraint().clone(),
        penalty,
        margin,
        form,
    };
    spec.with_objective(format!("{}+reg", spec.name), Arc::new(obj))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularizationRow {
    pub penalty: f64,
    pub margin: f64,
    /// `None` when no start reached a feasible point.
    pub optimum: Option<OptimizeResult>,
    /// `h` at the regularized optimizer.
    pub h: f64,
    /// Unregularized objective at the regularized optimizer.
    pub phi: f64,
    /// `|Φ(x′) − Φ*|`
    pub delta_phi: f64,
    pub pareto: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularizationSweep {
    pub form: RegularizationForm,
    pub reference: OptimizeResult,
    pub delta: f64,
    pub rows: Vec<RegularizationRow>,
}

impl RegularizationSweep {
    /// Rows strictly inside `X` that lose less than `delta` in objective.
    pub fn acceptable(&self) -> impl Iterator<Item = &RegularizationRow> {
        self.rows
            .iter()
            .filter(move |r| r.h > 0.0 && r.delta_phi < self.delta)
    }

    pub fn passed(&self) -> bool {
        self.acceptable().next().is_some()
    }
}

fn mark_pareto(rows: &mut [RegularizationRow]) {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.delta_phi)).collect();
    for (i, row) in rows.iter_mut().enumerate() {
        let (h, d) = pts[i];
        row.pareto = h.is_finite()
            && d.is_finite()
            && !pts
                .iter()
                .any(|&(h2, d2)| h2 >= h && d2 <= d && (h2 > h || d2 < d));
    }
}

/// Solves the regularized problem over a `(p, ε)` grid and compares each
/// optimizer with the unregularized one.
pub fn regularization_sweep<T: Real>(
    spec: &ProblemSpec<T>,
    penalties: &[f64],
    margins: &[f64],
    form: RegularizationForm,
    delta: f64,
    opts: &OptimizeOptions<T>,
) -> Result<RegularizationSweep, OptimizeError> {
    let reference = offline_optimize(spec, opts)?;
    let mut rows = Vec::new();
    for &p in penalties {
        for &eps in margins {
            let reg = regularize(spec, T::lit(p), T::lit(eps), form)
                .expect("objective dimensions are unchanged");
            let optimum = offline_optimize(&reg, opts).ok();
            let (h, phi) = match &optimum {
                Some(o) => {
                    let x: Vec<T> = o.x.iter().map(|&v| T::lit(v)).collect();
                    (spec.h(&x).to_f64_lossy(), spec.phi(&x).to_f64_lossy())
                }
                None => (f64::NAN, f64::NAN),
            };
            rows.push(RegularizationRow {
                penalty: p,
                margin: eps,
                optimum,
                h,
                phi,
                delta_phi: (phi - reference.objective).abs(),
                pareto: false,
            });
        }
    }
    mark_pareto(&mut rows);
    Ok(RegularizationSweep {
        form,
        reference,
        delta,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use approx::assert_relative_eq;

    #[test]
    fn penalty_values() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let x = [0.0, 0.0];
        let (phi, h) = (spec.phi(&x), spec.h(&x));
        let s = regularize(&spec, 2.0, 0.1, RegularizationForm::ShiftedSquare).unwrap();
        assert_relative_eq!(
            s.phi(&x),
            phi + 2.0 * (0.1 - h) * (0.1 - h),
            epsilon = 1e-14
        );
        let p = regularize(&spec, 2.0, 0.1, RegularizationForm::AsPrinted).unwrap();
        assert_relative_eq!(p.phi(&x), phi + 2.0 * (0.1 - h * h), epsilon = 1e-14);
        // the constraint set is untouched
        assert_eq!(s.h(&x), h);
    }

    #[test]
    fn form_names_round_trip() {
        for f in [
            RegularizationForm::ShiftedSquare,
            RegularizationForm::AsPrinted,
        ] {
            assert_eq!(f.to_string().parse::<RegularizationForm>().unwrap(), f);
        }
        assert!("other".parse::<RegularizationForm>().is_err());
    }

    #[test]
    fn pareto_marks_nondominated() {
        let row = |h: f64, d: f64| RegularizationRow {
            penalty: 1.0,
            margin: 1.0,
            optimum: None,
            h,
            phi: 0.0,
            delta_phi: d,
            pareto: false,
        };
        let mut rows = vec![
            row(0.1, 0.1),
            row(0.2, 0.05),
            row(0.05, 0.01),
            row(f64::NAN, f64::NAN),
        ];
        mark_pareto(&mut rows);
        let flags: Vec<bool> = rows.iter().map(|r| r.pareto).collect();
        assert_eq!(flags, vec![false, true, true, false]);
    }
}
