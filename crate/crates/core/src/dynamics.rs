//! Longitudinal vehicle dynamics: the car-following law, acceleration limits,
//! the first-order actuator lag and the ballistic position update.

use crate::params::ControlParams;
use crate::vehicle::VehicleState;

/// Unclamped desired acceleration of `follower` behind `lead`:
/// `(alpha/h)(x_lead - x_f - D - h v_f) + k (v_lead - v_f) - xi a_f`.
pub fn desired_accel_follow(lead: &VehicleState, follower: &VehicleState, p: &ControlParams) -> f64 {
    follow_law(lead.x - follower.x, lead.v, follower.v, follower.a, p)
}

/// Same law expressed on raw kinematic quantities.
pub fn follow_law(spacing: f64, v_lead: f64, v_f: f64, a_f: f64, p: &ControlParams) -> f64 {
    p.alpha / p.h * (spacing - p.d - p.h * v_f) + p.k * (v_lead - v_f) - p.xi * a_f
}

/// Command for a vehicle with nothing ahead: close the gap to `v_max`,
/// never faster than `a_max`. Exactly zero at the speed limit.
pub fn free_road_accel(v: f64, p: &ControlParams) -> f64 {
    (p.k * (p.v_max - v)).min(p.a_max)
}

/// Clamp a desired acceleration into `[-limit_low, a_max]`.
pub fn clamp_accel(a_desired: f64, limit_low: f64, p: &ControlParams) -> f64 {
    a_desired.clamp(-limit_low, p.a_max)
}

/// Exact solution of `tau da/dt + a = a_cmd` over `dt` with `a_cmd` held.
pub fn lag_step(a: f64, a_cmd: f64, tau: f64, dt: f64) -> f64 {
    a_cmd + (a - a_cmd) * (-dt / tau).exp()
}

/// Result of one ballistic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub state: VehicleState,
    /// Portion of the step during which the acceleration actually acted,
    /// i.e. before the velocity got pinned at 0 or `v_max`.
    pub active_time: f64,
    /// Acceleration that acted during `active_time`.
    pub accel: f64,
}

/// Advance position and velocity over `dt` with the realised acceleration held
/// constant, respecting `0 <= v <= v_max`. If the velocity reaches a bound
/// inside the step the vehicle continues at that bound and its realised
/// acceleration is reset to 0.
pub fn kinematic_step(state: &VehicleState, dt: f64, p: &ControlParams) -> Motion {
    let a = state.a;
    let v0 = state.v.clamp(0.0, p.v_max);
    let (active_time, v_end) = if a > 0.0 {
        let t_pin = (p.v_max - v0) / a;
        if t_pin < dt {
            (t_pin, p.v_max)
        } else {
            (dt, (v0 + a * dt).min(p.v_max))
        }
    } else if a < 0.0 {
        let t_pin = v0 / -a;
        if t_pin < dt {
            (t_pin, 0.0)
        } else {
            (dt, (v0 + a * dt).max(0.0))
        }
    } else {
        (dt, v0)
    };

    let mut next = *state;
    next.x += v0 * active_time + 0.5 * a * active_time * active_time + v_end * (dt - active_time);
    next.v = v_end;
    if active_time < dt {
        next.a = 0.0;
    }
    Motion { state: next, active_time, accel: a }
}
