//! Online reinforcement learning with an episodic memory of past states.
//!
//! The memory holds a fixed number of visited states. Which states survive is
//! decided by a weighted n-subset reservoir sampler ([`reservoir`]) whose
//! weights come from a trainable write network; the write network is trained
//! with a policy-gradient estimate that only touches the recalled state
//! ([`agent`]). [`env`] provides the secret informant benchmark, [`baseline`]
//! a GRU learner trained with backpropagation through time, [`oracle`] the
//! brute-force references used for verification and [`harness`] the
//! experiment runner.

pub mod agent;
pub mod baseline;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod reservoir;
pub mod tinynet;
pub mod verify;

pub use error::{Error, Result};
