//! Performance-measurement lab for a two-server heterogeneous queue:
//! a closed-form analytic solver, an independent truncated-chain oracle,
//! a deterministic discrete-event simulator of the clients/dispatcher/servers
//! system, and a cross-engine validation harness.

pub mod analytic;
pub mod engine;
pub mod model;
pub mod oracle;
