//! Link-level simulator and analytical rate engine for a single-cell
//! asynchronous massive-MIMO uplink.
//!
//! `K` single-antenna users transmit simultaneously to an `M`-antenna base
//! station. The symbol-level timing offsets `tau` of the users are unknown at
//! the receiver; only their distribution is known. The crate provides:
//!
//! - pulse shapes and the matched-filter convolved pulse `g = p * p`
//!   ([`pulse`]), delay distributions ([`delay`]),
//! - channel, path-loss and pilot generation ([`channel`]),
//! - the discretized system model with banded Toeplitz symbol-coupling
//!   matrices ([`discretize`]),
//! - MRC combining, pilot-based channel estimation under timing mismatch and
//!   the MRC-ZF corrections ([`receivers`]),
//! - closed-form achievable-rate evaluation from delay-averaged moments,
//!   asymptotic limits and the approximation-error bound ([`rates`]),
//! - Monte Carlo validation, sampling-origin optimization and power-scaling
//!   sweeps ([`experiments`]).
//!
//! The scalar-level math (pulse evaluation, quadrature, delay expectations)
//! is generic over the floating-point type via [`scalar::Scalar`]; the matrix
//! and Monte Carlo machinery works in `f64`. Concrete `f64` aliases are
//! re-exported at the crate root.

pub mod channel;
pub mod delay;
pub mod discretize;
pub mod experiments;
pub mod pulse;
pub mod quad;
pub mod rates;
pub mod receivers;
pub mod rng;
pub mod scalar;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter, dimension mismatch, unsupported
    /// combination). Maps to CLI exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Numeric failure (singular or ill-conditioned matrix, non-PSD
    /// covariance). Maps to CLI exit code 3.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Concrete `f64` pulse specification.
pub type PulseSpec = pulse::PulseSpec<f64>;
/// Concrete `f64` delay distribution.
pub type DelayDist = delay::DelayDist<f64>;

pub use channel::{ChannelRealization, LinkConfig, PilotKind, PilotSet};
pub use rates::{MomentTable, RateReport, SecondOrderStats};
pub use receivers::ReceiverKind;
