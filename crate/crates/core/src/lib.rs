//! Prediction market whose outcome is resolved by a vote among arbiters.
//!
//! Trading happens against a cost-function market maker (LMSR) that charges a
//! multiplicative fee on each agent's worst-case loss. After the market closes,
//! arbiters report binary signals, the outcome is the fraction of arbiters that
//! reported `1`, and arbiters are paid out of the fee pool by a peer-prediction
//! rule that references the midpoint of the two posteriors rather than the prior.
//!
//! The crate is split into:
//!
//! * [`msr`]: cost function maths, price bounds and maximum holdings,
//! * [`market`]: the stateful, fee-bearing trading ledger,
//! * [`arbitration`]: belief model, peer assignment, payments and settlement,
//! * [`incentives`]: expected payoffs, payment scales and fee calibration,
//! * [`harness`]: scenario runner, deviation probe and calibration sweep.

pub mod arbitration;
pub mod error;
pub mod harness;
pub mod incentives;
pub mod market;
pub mod msr;

pub use error::{Error, Result};

/// Absolute tolerance used for monetary comparisons.
pub const MONEY_TOLERANCE: f64 = 1e-9;
