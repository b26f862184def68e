//! Analysis toolkit for cardinality-constrained optimization problems
//!
//! ```text
//! minimize f(x)  subject to  h(x) = 0,  g(x) >= 0,  ||x||_0 <= s.
//! ```
//!
//! The crate locates M-stationary points of such problems inside a user-given
//! box, computes the associated multipliers, classifies each point
//! (nondegeneracy, M-index, strong stability, second-order conditions), and
//! checks landscape-level predictions (component counts of lower level sets,
//! cell attachments, a mountain-pass inequality) on compact instances.
//!
//! Modules are layered bottom-up: [`expr`] (symbolic expressions and exact
//! derivatives), [`linalg`] (small dense kernels: nullspaces, restricted
//! quadratic forms, inertia), [`model`] (problem definition and file format),
//! [`stationarity`] (constraint qualification, multipliers, the solver, and
//! perturbation experiments), [`classify`] (point classification), [`morse`]
//! (level-set and cell-attachment checks), [`report`] (deterministic JSON
//! reports), and [`cli`] (the command-line front end).

pub mod classify;
pub mod cli;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod morse;
pub mod report;
pub mod stationarity;

use thiserror::Error;

/// Crate-wide error for the higher-level operations. Domain-specific errors
/// (parse offsets, evaluation subterms, refused preconditions) stay typed so
/// callers can react to them.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Morse(#[from] morse::MorseError),
    #[error("{0}")]
    Invalid(String),
}
