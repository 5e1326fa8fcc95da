//! Peer-to-peer horizontal knowledge transfer between neural agents.
//!
//! Agents train small dense networks on disjoint class subsets. A target
//! agent hosts one learnable transform per remote source that fuses the
//! source's penultimate weights with its own; see [`transfer`].

mod error;

pub mod baselines;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};
