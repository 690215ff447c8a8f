//! Error-mitigated QAOA with double adaptive-region Bayesian optimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`problem`]: weighted graphs, QUBO objectives, brute-force oracles and
//!   MAX-CUT bookkeeping.
//! - [`simulator`]: exact statevector simulation of the QAOA ansatz, sampling
//!   and the finite-shot objective estimator.
//! - [`noise_sim`]: density-matrix simulation under two-qubit depolarizing
//!   noise with gate folding, plus the readout channel.
//! - [`mitigation`]: confusion-matrix learning and inversion, zero-noise
//!   extrapolation.
//! - [`surrogate`]: Gaussian-process regression with a Matérn-5/2 ARD kernel.
//! - [`darbo`]: the optimizer itself (trust region + switching search region +
//!   UCB acquisition).
//! - [`baselines`]: SPSA, Nelder-Mead and finite-difference Adam.
//! - [`harness`]: run configuration, evaluation modes, experiment sweeps and
//!   reporting.

pub mod baselines;
pub mod bits;
pub mod darbo;
pub mod error;
pub mod harness;
pub mod mitigation;
pub mod noise_sim;
pub mod problem;
pub mod seeding;
pub mod simulator;
pub mod surrogate;

pub use error::{Error, Result};
