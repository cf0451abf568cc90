use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Main,
    Ramp,
}

/// Where a vehicle entered the network. Trip delay is only tallied for
/// vehicles that came from upstream on the main lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Upstream,
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Position in m; the merge-region entrance is x = 0.
    pub x: f64,
    pub v: f64,
    /// Realised acceleration.
    pub a: f64,
    /// Commanded (desired) acceleration.
    pub a_cmd: f64,
    pub lane: Lane,
    pub origin: Origin,
    pub spawn_time: f64,
    pub spawn_x: f64,
    pub enhanced_brake_active: bool,
    /// Set once the vehicle has acted as the trailing vehicle of a merge gap.
    pub trailing_role: bool,
}

impl VehicleState {
    pub fn new(id: VehicleId, x: f64, v: f64, lane: Lane) -> Self {
        Self {
            id,
            x,
            v,
            a: 0.0,
            a_cmd: 0.0,
            lane,
            origin: match lane {
                Lane::Main => Origin::Upstream,
                Lane::Ramp => Origin::Ramp,
            },
            spawn_time: 0.0,
            spawn_x: x,
            enhanced_brake_active: false,
            trailing_role: false,
        }
    }

    pub fn with_accel(mut self, a: f64) -> Self {
        self.a = a;
        self
    }
}
