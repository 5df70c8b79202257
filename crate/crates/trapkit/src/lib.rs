//! Decoy-based ransomware early detection: selects existing files as
//! monitored traps via non-parametric clustering, watches them for
//! modification, and measures file loss and detection delay against a
//! configurable attack emulator.

pub mod cluster;
pub mod config;
pub mod emulator;
pub mod error;
pub mod features;
pub mod harness;
pub mod monitor;
pub mod time;
pub mod traps;
