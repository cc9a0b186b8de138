//! Transition matrices, observability/controllability Gramians, and
//! empirical certification of nonuniform complete observability and
//! controllability for linear time-varying systems, together with numerical
//! checks of the duality and feedback-preservation results that connect
//! them.
//!
//! All certificates produced here are finite-grid empirical certificates
//! with residual diagnostics, never symbolic proofs: a verdict means the
//! defining inequalities held at every sampled point, nothing more.

pub mod criteria;
pub mod dual;
pub mod envelope;
pub mod error;
pub mod expr;
pub mod feedback;
pub mod flow;
pub mod gramian;
pub mod minimax;
pub mod nucert;
pub mod ode;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod tvmat;

pub use error::{Error, Result};
