//! Sparse inverse covariance estimation by proximal gradient on the dual.
//!
//! The main entry point is [`solve`], which estimates a sparse precision
//! matrix from a sample covariance `S` and an ℓ1 penalty `λ`. The
//! [`generalized`] module adds box constraints on the covariance and penalties
//! on linear transforms of the precision; [`portfolio`] runs a
//! minimum-variance rebalancing backtest on top of any estimator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generalized;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod portfolio;
pub mod problem;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use generalized::{solve_box, solve_linear_penalty, BoundSpec, LinearMapPair, LinearPenaltyReport};
pub use matrix::{CholeskyFactor, SymMatrix};
pub use solver::{solve, Diagnostics, InitStrategy, SolverConfig, SolverReport, StepRule, StopReason, TraceRecord};
