//! Compile-time deployment toolchain for spiking cluster traffic on
//! segmented ladder bus interconnects.
//!
//! The pipeline takes a cluster communication graph with a timed spike
//! trace, places the clusters onto hardware tiles ([`mapper`]), serializes
//! conflicting transmissions into time groups ([`scheduler`]), routes each
//! group over the bus graph ([`router`]) and replays the result on a
//! deterministic discrete-event simulator ([`simulator`]) that reports
//! spike loss, latency, dynamic energy and EDP.

pub mod error;
pub mod mapper;
pub mod router;
pub mod scheduler;
pub mod simulator;
pub mod topology;
mod util;
pub mod workload;

pub use error::{Error, Result};
