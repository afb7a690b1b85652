//! Leverage-score sketch-and-solve for linear, multiple, and ridge regression.
//!
//! The pipeline samples rows with probability proportional to (estimated)
//! leverage scores, rescales them so the sketch is unbiased, and solves the
//! small sketched problem exactly. [`verify`] measures the embedding and
//! matrix-product guarantees that make the sketched answer a `(1 + ε)`
//! approximation, and [`qcost`] evaluates the row-query cost model that
//! compares a quantum sampler against reading every row.

// Negated float comparisons also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densemat;
pub mod error;
pub mod fmt;
pub mod leverage;
pub mod qcost;
pub mod rng;
pub mod sketch;
pub mod solve;
pub mod verify;

pub use densemat::{DenseMatrix, FactorizationBundle, RowSource};
pub use error::{Error, Result};
pub use leverage::{LeverageProfile, RidgeBasis, ScoreMode};
pub use qcost::{CostModelInputs, CostReport, LogPolicy, QueryLedger};
pub use sketch::{SketchConfig, SketchOperator};
pub use solve::{RegressionProblem, RegressionSolution, RidgeProblem, ScoresMode};
pub use verify::{CheckKind, VerificationReport};
