//! Symbolic verification of Lie point symmetries of ODE systems and
//! step-by-step order reduction along the coset chain of a solvable
//! symmetry algebra.
//!
//! The crate is organized bottom-up:
//!
//! * [`expr`]: canonical expressions over exact rationals, differentiation,
//!   substitution, numeric evaluation, probabilistic identity testing, and
//!   symbolic linear solving;
//! * [`parser`]: the problem/chart description language;
//! * [`jet`]: jet-space vector fields, prolongation, commutators, and the
//!   symmetry condition;
//! * [`algebra`]: structure constants, derived series, cosets, reduction
//!   plans, and basis searches;
//! * [`reduce`]: chart verification, system and generator transport,
//!   restriction with quadratures, and the step/chain drivers;
//! * [`report`]: deterministic report rendering;
//! * [`cli`]: the command-line front end.

pub mod algebra;
pub mod cli;
pub mod error;
pub mod expr;
pub mod jet;
pub mod linalg;
pub mod parser;
pub mod reduce;
pub mod report;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
