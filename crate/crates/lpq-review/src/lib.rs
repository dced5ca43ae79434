//! Two-stage L(p,q) aggregation of peer-review data.
//!
//! The library fits a single cross-reviewer monotone assignment to the
//! reviewers' overall recommendations (empirical risk minimization under the
//! componentwise partial order of the criteria score vectors), then collapses
//! the fitted values into one score per paper. On top of the solver it ships:
//!
//! * social-choice axiom checkers (consensus, efficiency, consistency,
//!   strategy-proofness, plus the score-vector variants) with replayable
//!   violation witnesses,
//! * constructive manipulation probes (recommendation misreports, score
//!   misreports, and the discontinuity witness),
//! * a brute-force grid oracle for differential testing on small instances,
//! * the linear three-step variant (per-reviewer monotone linear fits,
//!   coefficient aggregation, score-vector aggregation),
//! * CSV/JSON ingestion and deterministic JSON reports.

pub mod attack;
pub mod audit;
pub mod axioms;
pub mod dataset;
pub mod instances;
pub mod io;
pub mod linear;
pub mod oracle;
pub mod order;
pub mod report;
pub mod solver;

pub use dataset::{Params, ReviewDataset, ValidationError};
pub use order::MonotoneOrder;
pub use solver::{FittedValues, Solution};
