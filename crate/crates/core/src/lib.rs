//! Reachability quantification for attractors of asynchronous discrete
//! dynamical systems (logical regulatory models).
//!
//! Three engines over one implicit transition system:
//!
//! * [`markov`] — exact absorption probabilities of the induced absorbing
//!   chain, for desk-scale models; serves as the oracle for the other two.
//! * [`firefront`] — quasi-exact breadth-wise probability propagation with
//!   per-attractor lower/upper bounds.
//! * [`avatar`] — Monte Carlo random walks with cycle detection and
//!   exit-rewiring, suited to larger models and complex attractors.
//!
//! [`genrand`] generates random Boolean models for the property and
//! benchmark suites, and [`parse`] defines the model file format.

pub mod avatar;
pub mod error;
pub mod firefront;
pub mod genrand;
pub mod markov;
pub mod model;
pub mod parse;
pub mod report;
pub mod stg;
pub mod testkit;

pub use error::{Error, Result};
pub use model::{LogicalModel, State, StateCode};
pub use parse::{parse_model, ModelDocument};
pub use report::{serialize_result, AbsorptionResult, OutputFormat};

/// Sparse probability mass over state codes.
pub type SparseDistribution = std::collections::BTreeMap<StateCode, f64>;
