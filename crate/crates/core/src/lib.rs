//! Discrete-event model of a virtualised mesh-PON carrying split-7.2 fronthaul.
//!
//! Allocation-only core: no IO, no clocks, no threads. The `meshpon-sim`
//! crate adds configuration files, the CLI and reporting on top.

#![no_std]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod kernel;
pub mod forwarder;
pub mod mac;
pub mod metrics;
pub mod ran;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod topology;

pub use kernel::{EventId, KernelError, Priority, Scheduler, SimEvent};
pub use mac::DbaPolicy;
pub use ran::TrafficClass;
pub use rng::RngStream;
pub use time::SimTime;
