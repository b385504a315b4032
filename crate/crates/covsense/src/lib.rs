//! Numerics for covert quantum sensing.
//!
//! The crate computes conditional Chernoff error exponents of classical-quantum
//! channels under a relative-entropy covertness constraint, the entangled
//! zero-error block strategy for unitary families together with its
//! covertness certificate, and the tangent-space boundedness test for the
//! warden's channel. Every quantity has a brute-force counterpart at small
//! scale so the asymptotic statements can be checked numerically.
//!
//! All logarithms are natural; values are in nats unless stated otherwise.

pub mod covert_exponent;
pub mod discriminate;
pub mod divergence;
mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod optim;
pub mod qmat;
pub mod rng;
pub mod scenario;
pub mod types;
pub mod unitary_strategy;

pub use error::{Error, Result};
pub use exec::Execution;
pub use qmat::{CMatrix, CVector, DensityOperator};
pub use scenario::CqScenario;
