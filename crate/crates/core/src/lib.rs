//! Microscopic simulation of on-ramp merging into a lane reserved for
//! connected automated vehicles travelling in platoons.
//!
//! Vehicles follow a linear car-following law with a first-order actuator
//! lag. A single ramp vehicle at a time is released from a hold point so
//! that it reaches the merge region inside a gap between platoons, then
//! merges once two scoring margins (one against the lead, one against the
//! trailing vehicle) are both non-negative.

pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod events;
pub mod experiment;
pub mod linear;
pub mod merge;
pub mod metrics;
pub mod params;
pub mod traffic;
pub mod vehicle;

pub use config::{parse_config, parse_config_str, parse_plan, parse_plan_str};
pub use engine::{run_simulation, run_simulation_with_log, RampDemand, RunError, RunResult, SimConfig, World};
pub use error::{AnalysisError, ConfigError, ExperimentError, SimFault};
pub use experiment::{run_sweep, ExperimentPlan, SweepTable, SweepVariable};
pub use metrics::{AggregateMetrics, Metrics, MetricsAccumulator};
pub use params::ControlParams;
pub use traffic::{mean_flow, TrafficGenConfig};
pub use vehicle::{Lane, VehicleId, VehicleState};
