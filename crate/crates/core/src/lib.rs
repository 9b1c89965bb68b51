//! Joint user pairing and power allocation for downlink NOMA systems in
//! which every user is a potential eavesdropper.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`] samples network instances (users in a disc, Rayleigh
//!   fading, path loss, thermal noise).
//! - [`rate_model`] evaluates SINRs, achievable rates and secrecy rates for
//!   an ordered near/far pair.
//! - [`power_alloc`] holds the closed-form per-pair power allocation and the
//!   dual-variable calibration against the total power budget.
//! - [`dense_linalg`] is a small dense LU solver used by the Newton steps.
//! - [`pairing_lp`] builds the relaxed pairing LP and solves it with a
//!   logarithmic barrier method driven by infeasible-start Newton steps.
//! - [`rounding`] turns a fractional assignment into a perfect matching.
//! - [`optimizer`] alternates power allocation and pairing until the sum
//!   secrecy rate settles.
//! - [`baselines`] provides the comparison schemes (equal power, random
//!   pairing, Gale-Shapley pairing, Simplex-based pairing).
//! - [`experiments`] runs seeded Monte-Carlo sweeps and writes CSV results.
//!
//! Rates are carried in bits/s/Hz throughout; multiply by the configured
//! bandwidth to obtain bits/s.

pub mod baselines;
pub mod dense_linalg;
mod error;
pub mod experiments;
pub mod optimizer;
pub mod pairing_lp;
pub mod power_alloc;
pub mod rate_model;
pub mod rounding;
pub mod scenario;

pub use error::{Error, Result};
