//! Numerical toolkit for the pointwise Green function of the linearisation
//! about a stationary reaction–diffusion front, and for nonlinear
//! perturbation experiments around it.
//!
//! Pipeline, bottom-up: [`model`] → [`profile`] → [`spectral`] →
//! [`resolvent`] → [`green`] → [`nonlinear`]. Independent work items
//! (contour nodes, kernel samples, parameter sweeps) are dispatched through
//! [`par::Execution`].

// `!(x > 0.0)` is used on purpose to reject NaN; index loops mirror the
// banded-matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod green;
pub mod imex;
pub mod linalg;
pub mod model;
pub mod nonlinear;
pub mod numerics;
pub mod par;
pub mod profile;
pub mod resolvent;
pub mod spectral;

pub use error::{Error, Result};
pub use par::Execution;
