//! TOML problem files.
//!
//! A file either names a builtin problem:
//!
//! ```toml
//! builtin = "paper_lti_r1"
//! beta = 10.0            # optional
//! relative_degree = 1    # optional
//! ```
//!
//! or describes an LTI plant `ẋ = A x + B u` with quadratic objective and
//! constraints:
//!
//! ```toml
//! name = "my_problem"
//! a = [[-1.6, -0.1], [-1.0, -0.8]]
//! b = [[1.0, 0.0], [0.0, 1.0]]
//! relative_degree = 1
//! beta = 5.0
//! suggested_epsilon = 0.5   # optional
//!
//! [objective]               # Φ(x) = (x − target)ᵀ W (x − target)
//! target = [1.775, 0.9]
//! weight = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [state_constraint]        # h(x) = level − (x − center)ᵀ S (x − center)
//! center = [0.2, 0.3]
//! shape = [[0.25, 0.0], [0.0, 1.0]]
//! level = 1.0
//!
//! [input_constraint]        # b(u) = radius_sq − ‖u‖²
//! radius_sq = 16.0
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::problem::{
    builtin_problem_with_beta, LtiQuadratic, ProblemError, ProblemSpec, DEFAULT_BETA,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveFile {
    target: Vec<f64>,
    weight: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateConstraintFile {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    level: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputConstraintFile {
    radius_sq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    builtin: Option<String>,
    name: Option<String>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<Vec<f64>>>,
    relative_degree: Option<usize>,
    beta: Option<f64>,
    suggested_epsilon: Option<f64>,
    objective: Option<ObjectiveFile>,
    state_constraint: Option<StateConstraintFile>,
    input_constraint: Option<InputConstraintFile>,
}

fn matrix<T: Real>(field: &'static str, rows: &[Vec<f64>]) -> Result<Matrix<T>, ConfigError> {
    let bad = |message: String| ConfigError::Field { field, message };
    let cols = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| bad("matrix has no rows".into()))?;
    if cols == 0 {
        return Err(bad("matrix has no columns".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(bad(format!(
            "row {i} has {} entries, row 0 has {cols}",
            r.len()
        )));
    }
    finite(field, rows.iter().flatten())?;
    let cast: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| T::lit(v)).collect())
        .collect();
    Ok(Matrix::from_rows(&cast))
}

fn finite<'a>(
    field: &'static str,
    vals: impl IntoIterator<Item = &'a f64>,
) -> Result<(), ConfigError> {
    if vals.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ConfigError::Field {
            field,
            message: "entries must be finite".into(),
        })
    }
}

fn vector<T: Real>(field: &'static str, v: &[f64]) -> Result<Vec<T>, ConfigError> {
    finite(field, v)?;
    Ok(v.iter().map(|&a| T::lit(a)).collect())
}

fn required<V>(field: &'static str, v: Option<V>) -> Result<V, ConfigError> {
    v.ok_or(ConfigError::Field {
        field,
        message: "missing".into(),
    })
}

/// Parses a problem document; `default_name` is used when the file sets
/// neither `builtin` nor `name`.
pub fn parse_problem<T: Real>(
    text: &str,
    default_name: &str,
) -> Result<ProblemSpec<T>, ConfigError> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let beta = file.beta.unwrap_or(DEFAULT_BETA);
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ConfigError::Field {
            field: "beta",
            message: format!("must be positive, got {beta}"),
        });
    }
    let spec = if let Some(name) = &file.builtin {
        let lti_fields = [
            ("name", file.name.is_some()),
            ("a", file.a.is_some()),
            ("b", file.b.is_some()),
            ("objective", file.objective.is_some()),
            ("state_constraint", file.state_constraint.is_some()),
            ("input_constraint", file.input_constraint.is_some()),
        ];
        if let Some((field, _)) = lti_fields.iter().find(|(_, set)| *set) {
            return Err(ConfigError::Field {
                field,
                message: "not allowed together with `builtin`".into(),
            });
        }
        let spec = builtin_problem_with_beta::<T>(name, T::lit(beta))?;
        match file.relative_degree {
            Some(r) => spec.with_relative_degree(r)?,
            None => spec,
        }
    } else {
        let obj = required("objective", file.objective)?;
        let sc = required("state_constraint", file.state_constraint)?;
        let ic = required("input_constraint", file.input_constraint)?;
        finite("input_constraint.radius_sq", [&ic.radius_sq])?;
        finite("state_constraint.level", [&sc.level])?;
        LtiQuadratic {
            a: matrix("a", &required("a", file.a)?)?,
            b: matrix("b", &required("b", file.b)?)?,
            target: vector("objective.target", &obj.target)?,
            weight: matrix("objective.weight", &obj.weight)?,
            h_center: vector("state_constraint.center", &sc.center)?,
            h_shape: matrix("state_constraint.shape", &sc.shape)?,
            h_level: T::lit(sc.level),
            input_radius_sq: T::lit(ic.radius_sq),
            relative_degree: required("relative_degree", file.relative_degree)?,
            beta: T::lit(beta),
        }
        .into_spec(file.name.as_deref().unwrap_or(default_name))?
    };
    Ok(match file.suggested_epsilon {
        Some(e) if !(e.is_finite() && e > 0.0) => {
            return Err(ConfigError::Field {
                field: "suggested_epsilon",
                message: format!("must be positive, got {e}"),
            })
        }
        Some(e) => spec.with_suggested_epsilon(T::lit(e)),
        None => spec,
    })
}

pub fn load_problem<T: Real>(path: &Path) -> Result<ProblemSpec<T>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("problem");
    parse_problem(&text, stem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;

    const EXAMPLE: &str = r#"
name = "copy"
a = [[-1.6, -0.1], [-1.0, -0.8]]
b = [[1.0, 0.0], [0.0, 1.0]]
relative_degree = 1
beta = 5.0

[objective]
target = [1.775, 0.9]
weight = [[1.0, 0.0], [0.0, 1.0]]

[state_constraint]
center = [0.2, 0.3]
shape = [[0.25, 0.0], [0.0, 1.0]]
level = 1.0

[input_constraint]
radius_sq = 16.0
"#;

    #[test]
    fn lti_file_matches_builtin() {
        let spec = parse_problem::<f64>(EXAMPLE, "x").unwrap();
        let builtin = builtin_problem::<f64>("paper_lti_r1").unwrap();
        assert_eq!(spec.name, "copy");
        for (x, u) in [([0.3, -0.2], [1.0, 2.0]), ([1.5, 0.1], [-0.5, 0.0])] {
            assert_eq!(spec.f(&x, &u), builtin.f(&x, &u));
            assert_eq!(spec.phi(&x), builtin.phi(&x));
            assert_eq!(spec.h(&x), builtin.h(&x));
            assert_eq!(spec.b(&u), builtin.b(&u));
        }
    }

    #[test]
    fn builtin_with_overrides() {
        let spec =
            parse_problem::<f64>("builtin = \"second_order_r2\"\nbeta = 2.0\n", "x").unwrap();
        assert_eq!(spec.beta(), 2.0);
        assert_eq!(spec.relative_degree(), 2);
        assert_eq!(spec.suggested_epsilon(), Some(0.2));
        let spec =
            parse_problem::<f64>("builtin = \"second_order_r2\"\nrelative_degree = 1\n", "x")
                .unwrap();
        assert_eq!(spec.relative_degree(), 1);
    }

    #[test]
    fn errors_name_the_field() {
        let err = parse_problem::<f64>(
            &EXAMPLE.replace("[0.0, 1.0]]\nrelative", "[0.0]]\nrelative"),
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("field `b`"), "{err}");
        let err = parse_problem::<f64>("builtin = \"nope\"", "x").unwrap_err();
        assert!(err.to_string().contains("unknown builtin"), "{err}");
        let err = parse_problem::<f64>("builtin = \"paper_lti_r1\"\nbeta = -1.0", "x").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
        let err = parse_problem::<f64>("builtin = \"paper_lti_r1\"\ncolour = 1", "x").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = parse_problem::<f64>("builtin = [", "x").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_problem::<f64>(
            &EXAMPLE.replace("target = [1.775, 0.9]", "target = [1.775]"),
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("objective target is 1x1"), "{err}");
        let err = parse_problem::<f64>(&EXAMPLE.replace("radius_sq = 16.0", ""), "x").unwrap_err();
        assert!(err.to_string().contains("radius_sq"), "{err}");
    }
}
