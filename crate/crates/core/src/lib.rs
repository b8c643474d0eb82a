//! System-level simulator of C-V2X sidelink mode 4: sensing-based
//! semi-persistent scheduling with optional one-shot transmissions, density
//! driven BSM rate control, a Nakagami-m V2V channel, and inter-packet gap,
//! information age, PRR and CBR statistics.

mod error;

pub mod channel;
pub mod config;
pub mod congestion;
pub mod engine;
pub mod metrics;
pub mod resource_grid;
pub mod runner;
pub mod sps;

pub use config::{parse_config, parse_config_str, SimConfig};
pub use engine::{run, Scenario, SimOutput, Simulation};
pub use error::{Error, Result};
