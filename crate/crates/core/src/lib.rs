//! Discrete-event simulator for WiMAX and WiFi sharing spectrum.
//!
//! The pure building blocks (`medium`, `wifi_mac`, `wimax_mac`, `afr`,
//! `clc`) hold no clock of their own; `engine` drives them from a single
//! event queue and `scenario`/`report` handle the file formats.

pub mod afr;
pub mod clc;
pub mod engine;
pub mod error;
pub mod medium;
pub mod report;
pub mod scenario;
pub mod wifi_mac;
pub mod wimax_mac;

pub use engine::{jain_index, run, run_detailed, RunResult};
pub use error::{Error, Result};
pub use scenario::{emit_scenario, parse_scenario, ScenarioConfig};
