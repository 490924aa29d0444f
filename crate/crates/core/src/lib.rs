// Licensed under the Apache-2.0 license.

//! Cycle-accurate model of an elastic FPGA interconnect: an N×N pipelined
//! WISHBONE crossbar with weighted round-robin arbitration, register-file
//! driven isolation and quotas, a host bridge, computation modules and an
//! elastic resource manager.

pub mod arbiter;
pub mod bridge;
pub mod compute;
pub mod crossbar;
pub mod manager;
pub mod protocol;
pub mod regfile;
pub mod sim;
pub mod trace;

/// 32-bit data unit moved across the fabric.
pub type Word = u32;

pub use sim::scenario::Scenario;
pub use sim::{run, RunOutput, SimError, System};
