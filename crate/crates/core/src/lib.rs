//! Collusion detection and mitigation for replication-based task
//! verification, with a seeded discrete-event simulator to evaluate it.

pub mod batch;
pub mod behavior;
pub mod config;
pub mod detection;
pub mod error;
pub mod metrics;
pub mod mitigation;
pub mod model;
pub mod sim;
pub mod sne;
pub mod verifier;
