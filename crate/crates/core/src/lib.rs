//! Mapping digital identities heard over the radio to physical identities
//! seen by onboard sensors, and the swarm simulator built on it.

pub mod associate;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod identity;
pub mod matcher;
pub mod sim;

pub use error::{Error, Result};

