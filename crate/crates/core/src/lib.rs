//! Simulation core for IEEE 802.11p / WAVE vehicular networks.
//!
//! Everything in this crate is pure computation over virtual time: the event
//! engine, the 10 MHz OFDM channel model, the DCF/WAVE MAC, AODV routing,
//! highway mobility, application traffic and the metric recorder. It builds
//! without `std`; file formats and the command line live in the `wave-sim`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aodv;
pub mod apps;
pub mod engine;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod phy;
pub mod scenario;
pub mod sim;

mod node;

pub use engine::{Engine, EngineError, Event, EventHandle, RngStream, RunSummary, SimTime};
pub use node::NodeId;
pub use scenario::{ScenarioConfig, ScenarioKind};
pub use sim::{RunOutput, Simulation};
