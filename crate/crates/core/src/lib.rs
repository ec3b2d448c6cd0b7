//! Core library for the islanded-microgrid load shedding simulator.
//!
//! The crate is layered bottom-up:
//!
//! - [`phase`]: three-phase quantities, phasors, unbalance metrics
//! - [`rng`]: deterministic per-entity random substreams
//! - [`profiles`]: load demand time series (CSV-backed or synthesized)
//! - [`grid`]: load devices, groups, radial topology, voltage model
//! - [`shedding`]: autonomous frequency-threshold trip/restore state machine
//! - [`reserve`]: power-reserve supervision and the broadcast frequency signal
//! - [`scenario`]: TOML scenario files, validation, overrides, fingerprints
//! - [`engine`]: fixed-step simulation loop producing series, events, metrics
//! - [`output`]: CSV/JSON writers for run artifacts

pub mod engine;
pub mod grid;
pub mod output;
pub mod phase;
pub mod profiles;
pub mod reserve;
pub mod rng;
pub mod scenario;
pub mod shedding;
