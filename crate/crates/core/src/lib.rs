//! Privacy-preserving incentive protocol for participatory sensing.
//!
//! Participants earn per-task credits through blind and partially blind RSA
//! signature tokens. The server can enforce one-time use of every token but
//! cannot link tasks, reports or credits back to a participant's identity.
//!
//! - [`crypto`]: RSA, blind and partially blind signatures, report encryption.
//! - [`token`]: token identifiers and wire formats.
//! - [`server`] and [`participant`]: the two protocol state machines.
//! - [`sim`]: deterministic discrete-event simulator with adversaries.
//! - [`harness`]: benchmarks, storage accounting and the attack suite.

pub mod codec;
pub mod crypto;
pub mod harness;
pub mod participant;
pub mod protocol;
pub mod server;
pub mod sim;
pub mod token;
