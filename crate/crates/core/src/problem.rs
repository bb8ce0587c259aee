//! Feedback-optimization instances and the steady-state map `w(u)`.

use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{grad_u, grad_x, jacobian_unchecked, Dims, MapRef, MAX_JET_DEPTH};
use crate::linalg::Matrix;
use crate::maps::{AffinePlant, Arg, Quadratic};
use crate::scalar::{norm, Real};

/// Largest supported relative degree; `h_r` partials need `r + 1` nested
/// jet generators.
pub const MAX_RELATIVE_DEGREE: usize = MAX_JET_DEPTH - 1;

pub const BUILTIN_NAMES: [&str; 3] = ["paper_lti_r1", "boundary_optimum_lti_r1", "second_order_r2"];

pub const DEFAULT_BETA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("{what} has dimensions {got:?}, expected {expected:?}")]
    Dimension {
        what: &'static str,
        got: Dims,
        expected: Dims,
    },
    #[error("relative degree must be in 1..={max}, got {0}", max = MAX_RELATIVE_DEGREE)]
    RelativeDegree(usize),
    #[error("beta must be positive and finite, got {0}")]
    Beta(f64),
    #[error("input has length {got}, expected {expected}")]
    InputLength { got: usize, expected: usize },
    #[error("Newton iteration for the steady state did not converge in {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("state Jacobian of the plant is singular at the steady state")]
    Singular,
    #[error("{what} is {rows}x{cols}, expected {expected}")]
    Shape {
        what: &'static str,
        rows: usize,
        cols: usize,
        expected: String,
    },
    #[error("unknown builtin problem `{0}`; available: paper_lti_r1, boundary_optimum_lti_r1, second_order_r2")]
    UnknownBuiltin(String),
}

/// Data of one feedback-optimization instance: plant `f`, objective `Φ`,
/// state constraint `h ≥ 0`, input constraint `b ≥ 0`, the declared relative
/// degree `r` of `h` along `f` and the barrier rate `β`.
#[derive(Clone)]
pub struct ProblemSpec<T: Real> {
    pub name: String,
    plant: MapRef<T>,
    objective: MapRef<T>,
    state_constraint: MapRef<T>,
    input_constraint: MapRef<T>,
    relative_degree: usize,
    beta: T,
    lti: Option<AffinePlant<T>>,
    suggested_epsilon: Option<T>,
    n: usize,
    m: usize,
}

impl<T: Real> std::fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("relative_degree", &self.relative_degree)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Validates dimensions: `h` and `Φ` must read only `x`, `b` only `u`.
    pub fn new(
        name: impl Into<String>,
        plant: MapRef<T>,
        objective: MapRef<T>,
        state_constraint: MapRef<T>,
        input_constraint: MapRef<T>,
        relative_degree: usize,
        beta: T,
    ) -> Result<Self, ProblemError> {
        let pd = plant.dims();
        let (n, m) = (pd.x, pd.u);
        let expect = |what, got: Dims, expected: Dims| {
            if got == expected {
                Ok(())
            } else {
                Err(ProblemError::Dimension {
                    what,
                    got,
                    expected,
                })
            }
        };
        expect("plant", pd, Dims::new(n, m, n))?;
        expect("objective", objective.dims(), Dims::new(n, 0, 1))?;
        expect(
            "state constraint",
            state_constraint.dims(),
            Dims::new(n, 0, 1),
        )?;
        expect(
            "input constraint",
            input_constraint.dims(),
            Dims::new(0, m, 1),
        )?;
        if relative_degree == 0 || relative_degree > MAX_RELATIVE_DEGREE {
            return Err(ProblemError::RelativeDegree(relative_degree));
        }
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(ProblemError::Beta(beta.to_f64_lossy()));
        }
        Ok(ProblemSpec {
            name: name.into(),
            plant,
            objective,
            state_constraint,
            input_constraint,
            relative_degree,
            beta,
            lti: None,
            suggested_epsilon: None,
            n,
            m,
        })
    }

    /// Records `(A, B)` for plants known to be affine (enables the
    /// linearization stability warning and closed-form consistent inputs).
    pub fn with_lti(mut self, lti: AffinePlant<T>) -> Self {
        self.lti = Some(lti);
        self
    }

    /// Controller gain `ε` known to give a well-damped closed loop for this
    /// instance; used in place of the global default when present.
    pub fn with_suggested_epsilon(mut self, epsilon: T) -> Self {
        self.suggested_epsilon = Some(epsilon);
        self
    }

    pub fn suggested_epsilon(&self) -> Option<T> {
        self.suggested_epsilon
    }

    pub fn with_beta(&self, beta: T) -> Result<Self, ProblemError> {
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(ProblemError::Beta(beta.to_f64_lossy()));
        }
        Ok(ProblemSpec {
            beta,
            ..self.clone()
        })
    }

    pub fn with_relative_degree(&self, r: usize) -> Result<Self, ProblemError> {
        if r == 0 || r > MAX_RELATIVE_DEGREE {
            return Err(ProblemError::RelativeDegree(r));
        }
        Ok(ProblemSpec {
            relative_degree: r,
            ..self.clone()
        })
    }

    pub fn with_objective(
        &self,
        name: impl Into<String>,
        objective: MapRef<T>,
    ) -> Result<Self, ProblemError> {
        let expected = Dims::new(self.n, 0, 1);
        if objective.dims() != expected {
            return Err(ProblemError::Dimension {
                what: "objective",
                got: objective.dims(),
                expected,
            });
        }
        Ok(ProblemSpec {
            name: name.into(),
            objective,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }
    pub fn beta(&self) -> T {
        self.beta
    }
    pub fn lti(&self) -> Option<&AffinePlant<T>> {
        self.lti.as_ref()
    }

    pub fn plant(&self) -> &MapRef<T> {
        &self.plant
    }
    pub fn objective(&self) -> &MapRef<T> {
        &self.objective
    }
    pub fn state_constraint(&self) -> &MapRef<T> {
        &self.state_constraint
    }
    pub fn input_constraint(&self) -> &MapRef<T> {
        &self.input_constraint
    }

    pub fn f(&self, x: &[T], u: &[T]) -> Vec<T> {
        self.plant.eval(x, u)
    }
    pub fn phi(&self, x: &[T]) -> T {
        self.objective.eval(x, &[])[0]
    }
    pub fn h(&self, x: &[T]) -> T {
        self.state_constraint.eval(x, &[])[0]
    }
    pub fn b(&self, u: &[T]) -> T {
        self.input_constraint.eval(&[], u)[0]
    }
    pub fn grad_phi(&self, x: &[T]) -> Vec<T> {
        grad_x(self.objective.as_ref(), x)
    }
    pub fn grad_h(&self, x: &[T]) -> Vec<T> {
        grad_x(self.state_constraint.as_ref(), x)
    }
    pub fn grad_b(&self, u: &[T]) -> Vec<T> {
        grad_u(self.input_constraint.as_ref(), u)
    }

    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    pub fn plant_jacobians(&self, x: &[T], u: &[T]) -> (Matrix<T>, Matrix<T>) {
        jacobian_unchecked(self.plant.as_ref(), x, u)
    }

    /// Every map held by the instance, labelled.
    pub fn maps(&self) -> Vec<(&'static str, MapRef<T>)> {
        vec![
            ("f", self.plant.clone()),
            ("phi", self.objective.clone()),
            ("h", self.state_constraint.clone()),
            ("b", self.input_constraint.clone()),
        ]
    }
}

/// Newton settings for [`steady_state`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SteadyStateOptions<T> {
    fn default() -> Self {
        SteadyStateOptions {
            tol: T::lit(1e-10).max(T::epsilon() * T::lit(64.0)),
            max_iter: 50,
        }
    }
}

/// Equilibrium `w(u)` with its sensitivity `∂w/∂u` (`n × m`).
#[derive(Debug, Clone)]
pub struct SteadyStateResult<T> {
    pub x_ss: Vec<T>,
    pub sensitivity: Matrix<T>,
    pub residual: T,
    pub iterations: usize,
}

/// Solves `f(x, u) = 0` for `x` by damped Newton iteration and returns the
/// implicit-function sensitivity `−(∂f/∂x)⁻¹ ∂f/∂u` at the root.
pub fn steady_state<T: Real>(
    spec: &ProblemSpec<T>,
    u: &[T],
    guess: Option<&[T]>,
    opts: SteadyStateOptions<T>,
) -> Result<SteadyStateResult<T>, ProblemError> {
    if u.len() != spec.m {
        return Err(ProblemError::InputLength {
            got: u.len(),
            expected: spec.m,
        });
    }
    let mut x = match guess {
        Some(g) if g.len() == spec.n => g.to_vec(),
        Some(g) => {
            return Err(ProblemError::InputLength {
                got: g.len(),
                expected: spec.n,
            })
        }
        None => vec![T::zero(); spec.n],
    };
    let mut fx = spec.f(&x, u);
    let mut res = norm(&fx);
    let mut iterations = 0;
    while !(res <= opts.tol) {
        if iterations == opts.max_iter || !res.is_finite() {
            return Err(ProblemError::NotConverged {
                iterations,
                residual: res.to_f64_lossy(),
            });
        }
        iterations += 1;
        let (jx, _) = spec.plant_jacobians(&x, u);
        let step = jx.solve(&fx).ok_or(ProblemError::Singular)?;
        let mut t = T::one();
        loop {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&xi, &si)| xi - t * si).collect();
            let ft = spec.f(&trial, u);
            let rt = norm(&ft);
            if rt < res || t < T::lit(1e-4) {
                x = trial;
                fx = ft;
                res = rt;
                break;
            }
            t = t * T::lit(0.5);
        }
    }
    let (jx, ju) = spec.plant_jacobians(&x, u);
    let lu = jx.lu().ok_or(ProblemError::Singular)?;
    let mut sensitivity = Matrix::zeros(spec.n, spec.m);
    for j in 0..spec.m {
        let col: Vec<T> = lu.solve(&ju.column(j)).into_iter().map(|v| -v).collect();
        sensitivity.set_column(j, &col);
    }
    Ok(SteadyStateResult {
        x_ss: x,
        sensitivity,
        residual: res,
        iterations,
    })
}

/// Input `u` with `f(x, u) = 0` for a prescribed state, by Gauss–Newton on
/// `‖f(x, ·)‖²`. `None` when no consistent input exists (residual > 1e−9).
pub fn consistent_input<T: Real>(spec: &ProblemSpec<T>, x: &[T]) -> Option<Vec<T>> {
    let mut u = vec![T::zero(); spec.m];
    let tol = T::lit(1e-9);
    for _ in 0..50 {
        let fx = spec.f(x, &u);
        if norm(&fx) <= tol {
            return Some(u);
        }
        let (_, ju) = spec.plant_jacobians(x, &u);
        // normal equations (JᵀJ) δ = Jᵀ f
        let jt = ju.transpose();
        let step = jt.matmul(&ju).solve(&jt.mul_vec(&fx))?;
        for (ui, si) in u.iter_mut().zip(step) {
            *ui = *ui - si;
        }
    }
    (norm(&spec.f(x, &u)) <= tol).then_some(u)
}

/// LTI plant with quadratic objective, ellipsoidal state constraint and
/// ball input constraint.
#[derive(Debug, Clone)]
pub struct LtiQuadratic<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub target: Vec<T>,
    pub weight: Matrix<T>,
    pub h_center: Vec<T>,
    pub h_shape: Matrix<T>,
    pub h_level: T,
    pub input_radius_sq: T,
    pub relative_degree: usize,
    pub beta: T,
}

impl<T: Real> LtiQuadratic<T> {
    pub fn into_spec(self, name: impl Into<String>) -> Result<ProblemSpec<T>, ProblemError> {
        let n = self.a.rows();
        let m = self.b.cols();
        let shape = |what, mat: &Matrix<T>, rows: usize, cols: usize| {
            if mat.rows() == rows && mat.cols() == cols {
                Ok(())
            } else {
                Err(ProblemError::Shape {
                    what,
                    rows: mat.rows(),
                    cols: mat.cols(),
                    expected: format!("{rows}x{cols}"),
                })
            }
        };
        shape("A", &self.a, n, n)?;
        shape("B", &self.b, n, m)?;
        shape("objective weight", &self.weight, n, n)?;
        shape("constraint shape", &self.h_shape, n, n)?;
        let column = |v: &[T]| Matrix::from_column(v);
        shape("objective target", &column(&self.target), n, 1)?;
        shape("constraint center", &column(&self.h_center), n, 1)?;
        let plant = AffinePlant::new(self.a, self.b);
        let spec = ProblemSpec::new(
            name,
            Arc::new(plant.clone()),
            Arc::new(Quadratic::cost(Arg::X, self.target, self.weight)),
            Arc::new(Quadratic::ellipsoid(
                Arg::X,
                self.h_center,
                self.h_shape,
                self.h_level,
            )),
            Arc::new(Quadratic::ball(Arg::U, m, self.input_radius_sq)),
            self.relative_degree,
            self.beta,
        )?;
        Ok(spec.with_lti(plant))
    }

    /// The example plant and constraints with objective target `target`.
    fn example(target: [f64; 2], beta: T) -> Self {
        let l = T::lit;
        LtiQuadratic {
            a: Matrix::from_rows(&[[l(-1.6), l(-0.1)], [l(-1.0), l(-0.8)]]),
            b: Matrix::identity(2),
            target: vec![l(target[0]), l(target[1])],
            weight: Matrix::identity(2),
            h_center: vec![l(0.2), l(0.3)],
            h_shape: Matrix::diagonal(&[l(0.25), l(1.0)]),
            h_level: T::one(),
            input_radius_sq: l(16.0),
            relative_degree: 1,
            beta,
        }
    }
}

/// Builtin instances, with `β` defaulting to 5.
pub fn builtin_problem<T: Real>(name: &str) -> Result<ProblemSpec<T>, ProblemError> {
    builtin_problem_with_beta(name, T::lit(DEFAULT_BETA))
}

pub fn builtin_problem_with_beta<T: Real>(
    name: &str,
    beta: T,
) -> Result<ProblemSpec<T>, ProblemError> {
    let l = T::lit;
    match name {
        "paper_lti_r1" => LtiQuadratic::example([1.775, 0.9], beta).into_spec(name),
        "boundary_optimum_lti_r1" => LtiQuadratic::example([3.0, 1.5], beta).into_spec(name),
        "second_order_r2" => LtiQuadratic {
            a: Matrix::from_rows(&[[l(0.0), l(1.0)], [l(-1.0), l(-1.0)]]),
            b: Matrix::from_column(&[l(0.0), l(1.0)]),
            target: vec![l(0.5), l(0.0)],
            weight: Matrix::identity(2),
            h_center: vec![l(0.0), l(0.0)],
            h_shape: Matrix::diagonal(&[l(1.0), l(0.0)]),
            h_level: T::one(),
            input_radius_sq: T::one(),
            relative_degree: 2,
            beta,
        }
        // unconstrained loop polynomial λ³ + λ² + λ + 2ε is stable only for ε < 1/2
        .into_spec(name)
        .map(|s| s.with_suggested_epsilon(l(0.2))),
        other => Err(ProblemError::UnknownBuiltin(other.to_string())),
    }
}

/// Warns when the linearization `A` of an affine plant has an eigenvalue with
/// nonnegative real part (the plant then cannot have a globally
/// exponentially stable equilibrium).
pub fn lti_stability_warning<T: Real>(spec: &ProblemSpec<T>) -> Option<String> {
    let lti = spec.lti()?;
    let n = lti.a.rows();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| lti.a[(i, j)].to_f64_lossy());
    let eig = a.complex_eigenvalues();
    let worst = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    (worst >= 0.0).then(|| {
        format!("plant matrix A has an eigenvalue with real part {worst:.4} >= 0; w(u) need not be globally exponentially stable")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lti_builtin_data() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let lti = spec.lti().unwrap();
        assert_eq!(lti.a, Matrix::from_rows(&[[-1.6, -0.1], [-1.0, -0.8]]));
        assert_eq!(lti.b, Matrix::identity(2));
        assert_eq!(spec.relative_degree(), 1);
        assert_eq!(spec.beta(), 5.0);
        assert!(lti_stability_warning(&spec).is_none());
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = builtin_problem::<f64>("nope").unwrap_err();
        let msg = err.to_string();
        for name in BUILTIN_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn steady_state_examples() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let opts = SteadyStateOptions::default();
        let zero = steady_state(&spec, &[0.0, 0.0], None, opts).unwrap();
        assert_eq!(zero.x_ss, vec![0.0, 0.0]);
        let one = steady_state(&spec, &[1.0, 1.0], None, opts).unwrap();
        // −A x = u by elimination: x = (0.7, 0.6)/1.18
        assert_relative_eq!(one.x_ss[0], 0.593_220_338_983_050_8, epsilon = 1e-12);
        assert_relative_eq!(one.x_ss[1], 0.508_474_576_271_186_4, epsilon = 1e-12);
        let star = steady_state(&spec, &[2.93, 2.495], None, opts).unwrap();
        assert_relative_eq!(star.x_ss[0], 1.775, epsilon = 1e-12);
        assert_relative_eq!(star.x_ss[1], 0.9, epsilon = 1e-12);
        assert!(star.residual <= 1e-10);
    }

    #[test]
    fn sensitivity_is_minus_a_inverse() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let ss = steady_state(&spec, &[0.4, -1.2], None, SteadyStateOptions::default()).unwrap();
        let a_inv = Matrix::from_rows(&[[-0.8, 0.1], [1.0, -1.6]]).scaled(1.0 / 1.18);
        assert!(ss.sensitivity.sub(&a_inv.scaled(-1.0)).max_abs() < 1e-10);
    }

    #[test]
    fn singular_plant_is_a_hard_error() {
        let plant = AffinePlant::new(
            Matrix::from_rows(&[[0.0, 0.0], [0.0, -1.0]]),
            Matrix::identity(2),
        );
        let spec = LtiQuadratic {
            a: plant.a.clone(),
            b: plant.b.clone(),
            ..LtiQuadratic::<f64>::example([0.0, 0.0], 5.0)
        }
        .into_spec("singular")
        .unwrap();
        assert_eq!(
            steady_state(&spec, &[1.0, 1.0], None, SteadyStateOptions::default()).unwrap_err(),
            ProblemError::Singular
        );
        assert!(lti_stability_warning(&spec).is_some());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        assert!(matches!(spec.with_beta(0.0), Err(ProblemError::Beta(_))));
        assert!(matches!(
            spec.with_relative_degree(0),
            Err(ProblemError::RelativeDegree(0))
        ));
        assert!(matches!(
            spec.with_relative_degree(4),
            Err(ProblemError::RelativeDegree(4))
        ));
        let bad = ProblemSpec::new(
            "bad",
            spec.plant().clone(),
            spec.state_constraint().clone(),
            spec.input_constraint().clone(),
            spec.input_constraint().clone(),
            1,
            5.0,
        );
        assert!(matches!(
            bad,
            Err(ProblemError::Dimension {
                what: "state constraint",
                ..
            })
        ));
    }

    #[test]
    fn consistent_inputs() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let u = consistent_input(&spec, &[1.775, 0.9]).unwrap();
        assert_relative_eq!(u[0], 2.93, epsilon = 1e-12);
        assert_relative_eq!(u[1], 2.495, epsilon = 1e-12);
        let second = builtin_problem::<f64>("second_order_r2").unwrap();
        assert!(consistent_input(&second, &[0.3, 0.1]).is_none());
        let u = consistent_input(&second, &[0.3, 0.0]).unwrap();
        assert_relative_eq!(u[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn nonconvergence_carries_the_residual() {
        let spec = builtin_problem::<f64>("paper_lti_r1").unwrap();
        let opts = SteadyStateOptions {
            tol: -1.0,
            max_iter: 2,
        };
        match steady_state(&spec, &[1.0, 2.0], None, opts) {
            Err(ProblemError::NotConverged {
                iterations: 2,
                residual,
            }) => assert!(residual < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
