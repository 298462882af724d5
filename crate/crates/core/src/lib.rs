//! Secure linear precoding for hierarchical information accessibility (HIA)
//! in downlink MU-MIMO.
//!
//! The library covers the full simulation chain:
//! - one-ring correlated channel synthesis with Karhunen-Loeve sampling and
//!   a limited-feedback CSIT error model ([`channel`])
//! - exact secrecy rates, block-structured quadratic forms, and
//!   LogSumExp-smoothed objectives for non-colluding, colluding,
//!   proportional-fair, and NOMA settings ([`secrecy`])
//! - generalized power iteration solvers over the eigenvector-dependent
//!   operator pairs of the first-order conditions ([`gpi`])
//! - MRT and ZF reference precoders ([`baselines`])
//! - a deterministic Monte Carlo harness with bundled figure scenarios and
//!   CSV output ([`harness`])

pub mod baselines;
pub mod channel;
pub mod error;
pub mod gpi;
pub mod harness;
pub mod secrecy;
pub mod validate;

pub use error::{HiaError, Result};
