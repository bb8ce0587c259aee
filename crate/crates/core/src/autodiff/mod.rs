//! Forward-mode automatic differentiation.
//!
//! First derivatives use [`Dual`]; repeated Lie derivatives use [`Jet`],
//! whose number of nilpotent generators is chosen at runtime so that a map
//! defined in terms of derivatives of another map can itself be
//! differentiated.

mod diff;
mod dual;
mod jet;
mod map;

pub use diff::{directional, grad, jacobian, AutodiffError};
pub(crate) use diff::{grad_u, grad_x, jacobian_unchecked};
pub use dual::Dual;
pub use jet::{Jet, MAX_JET_DEPTH};
pub use map::{eval_scalar, max_depth, Carrier, Dims, GenericMap, MapRef, SmoothMap};
