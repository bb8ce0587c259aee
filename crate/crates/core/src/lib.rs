//! Feedback optimization of a stable plant under state and input
//! constraints.
//!
//! The controller drives the plant input along a safe gradient flow: at
//! every instant it solves a small QP that keeps the input constraint and a
//! high-order control barrier function of the state constraint satisfied.

pub mod analysis;
pub mod autodiff;
pub mod config;
pub mod hocbf;
pub mod linalg;
pub mod maps;
pub mod problem;
pub mod qp;
pub mod scalar;
pub mod sim;

pub use hocbf::{build_stack, HocbfStack};
pub use linalg::Matrix;
pub use problem::{
    builtin_problem, steady_state, ProblemError, ProblemSpec, SteadyStateOptions, SteadyStateResult,
};
pub use qp::{controller_field, solve_qp, ControllerParams, Mode, QPData, QPSolution};
pub use scalar::{Real, Scalar};
pub use sim::{integrate, SimOptions, Trajectory};

pub type ProblemSpec64 = ProblemSpec<f64>;
pub type ProblemSpec32 = ProblemSpec<f32>;
pub type Matrix64 = Matrix<f64>;
pub type HocbfStack64 = HocbfStack<f64>;
pub type HocbfStack32 = HocbfStack<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type ControllerParams64 = ControllerParams<f64>;
