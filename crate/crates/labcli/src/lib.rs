//! Scenario configs, data generators and experiment drivers for the
//! `labcli` binary.

pub mod config;
pub mod generators;
pub mod report;
pub mod scenarios;
pub mod selfcheck;

pub use config::{ScenarioConfig, ScenarioKind};
pub use report::{Check, Report};
