//! Toolkit for stochastically modeled mass-action reaction networks.
//!
//! The crate is organized around a pipeline:
//!
//! * [`network`] — network representation, JSON parsing, mass-action
//!   propensities, deterministic ODE analysis, and balance residuals.
//! * [`autocat`] — recognizes networks in which every reaction exchanges a
//!   single particle between two species (`S_i + (m-1) S_j -> m S_j`) and
//!   extracts the `(lambda, beta)` parameters that drive everything below.
//! * [`product_form`] — exact log-space evaluation of the closed-form
//!   stationary distribution `pi(x) = Z^-1 prod_i f_i(x_i)` on the simplex
//!   of fixed total mass, together with factor classification and sampling.
//! * [`oracle`] — brute-force ground truth: full state enumeration and a
//!   direct master-equation solve, plus balance-equation residual checks.
//! * [`gillespie`] — stochastic simulation and time-average estimation.
//! * [`condensation`] — asymptotic regime classification and exact finite-N
//!   condensation curves, with partition-function bound scans.

pub mod autocat;
pub mod balance;
pub mod condensation;
pub mod export;
pub mod gillespie;
pub mod network;
pub mod numeric;
pub mod ode;
pub mod oracle;
pub mod product_form;
pub mod structure;

pub use autocat::{AutocatalyticProfile, ClassifyError, Violation, ViolationList};
pub use network::{ComplexVec, NetworkError, Reaction, ReactionNetwork};
pub use oracle::{BalancePartition, ExactDistribution, OracleError};
pub use product_form::{CondensationQuery, FactorClass, FactorKind, ProductFormTable};
pub use structure::StructuralReport;
