//! Competitive rate-maximization games on Gaussian interference channels.
//!
//! Each of `Q` links picks the transmit covariance (MIMO) or per-bin power
//! vector (SISO/OFDM) that maximizes its own information rate, treating the
//! other links as noise. Under cognitive-radio constraints (power budgets,
//! null subspaces, soft shaping, peak power, spectral masks) every best
//! response is a waterfilling solution over a suitably modified channel, and
//! the Nash equilibria of the game are the fixed points of those mappings.
//!
//! The crate is organized as:
//!
//! - [`linalg`] — dense complex Hermitian/SVD primitives with explicit
//!   tolerance semantics, shared by everything else;
//! - [`channel`] — interference-channel data model, MUI covariances, rates,
//!   circulant (frequency-selective SISO) channels, seeded random scenarios;
//! - [`constraints`] — the constraint families and the modified channels each
//!   game variant waterfills over;
//! - [`waterfilling`] — the best-response solvers (classical, projected,
//!   capped soft-shaping, masked scalar) plus the gap-approximation factor;
//! - [`game`] — game variants, best-response dispatch, Nash verification and
//!   equilibrium-uniqueness sufficient conditions;
//! - [`engine`] — the asynchronous iterative waterfilling loop with pluggable
//!   update schedules and bounded-delay information models.

pub mod channel;
pub mod constraints;
pub mod engine;
pub mod game;
pub mod linalg;
pub mod waterfilling;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { asymmetry: f64, tol: f64 },
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("infeasible budget: caps admit at most {capacity:.6e} but the budget is {budget:.6e}")]
    InfeasibleBudget { budget: f64, capacity: f64 },
    #[error("zero channel: no direction with positive gain to transmit over")]
    ZeroChannel,
    #[error("direct channel of user {0} is singular")]
    SingularDirectChannel(usize),
    #[error("invalid channel set: {0}")]
    InvalidChannel(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("infeasible initial profile: {0}")]
    InfeasibleInit(String),
    #[error("no convergence within {0} iterations")]
    NonConvergence(usize),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("domain error: {0}")]
    DomainError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
