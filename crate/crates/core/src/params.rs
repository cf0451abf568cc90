//! Controller and vehicle constants.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Every constant of the longitudinal controller, the vehicle limits, the
/// ramp geometry and the merge scoring weight. All vehicles share one set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Sensitivity, 1/s.
    pub alpha: f64,
    /// Headway time, s.
    pub h: f64,
    /// Relative-velocity gain, 1/s.
    pub k: f64,
    /// Acceleration-feedback gain, dimensionless.
    pub xi: f64,
    /// Mechanical response time, s.
    pub tau: f64,
    /// Vehicle length plus safety margin, m.
    #[serde(rename = "D")]
    pub d: f64,
    /// Maximum service deceleration (positive), m/s^2.
    pub d_max: f64,
    /// Maximum acceleration, m/s^2.
    pub a_max: f64,
    /// Lane speed limit, m/s.
    pub v_max: f64,
    /// Merge-region length, m.
    #[serde(rename = "L")]
    pub l: f64,
    /// Distance of the ramp hold point upstream of the region entrance, m.
    pub x_g_dist: f64,
    /// Velocity-difference weight in the merge scores, s.
    #[serde(rename = "T_v")]
    pub t_v: f64,
    /// Deceleration ceiling while enhanced braking is engaged, m/s^2.
    pub d_prime_max: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        let d_max = 2.0;
        Self {
            alpha: 2.0,
            h: 1.0,
            k: 1.0,
            xi: 0.6,
            tau: 0.5,
            d: 7.5,
            d_max,
            a_max: 3.0,
            v_max: 38.0,
            l: 500.0,
            x_g_dist: 150.0,
            t_v: 2.5,
            d_prime_max: 1.5 * d_max,
        }
    }
}

impl ControlParams {
    /// Position of the ramp hold point (negative, upstream of x = 0).
    pub fn hold_x(&self) -> f64 {
        -self.x_g_dist
    }

    /// Equilibrium front-to-front spacing at the lane speed limit.
    pub fn equilibrium_spacing(&self) -> f64 {
        self.h * self.v_max + self.d
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("alpha", self.alpha),
            ("h", self.h),
            ("k", self.k),
            ("tau", self.tau),
            ("D", self.d),
            ("d_max", self.d_max),
            ("a_max", self.a_max),
            ("v_max", self.v_max),
            ("L", self.l),
            ("x_g_dist", self.x_g_dist),
            ("d_prime_max", self.d_prime_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, value, "must be finite and > 0"));
            }
        }
        for (name, value) in [("xi", self.xi), ("T_v", self.t_v)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::invalid(name, value, "must be finite and >= 0"));
            }
        }
        if self.d_prime_max < self.d_max {
            return Err(ConfigError::invalid("d_prime_max", self.d_prime_max, "must be >= d_max"));
        }
        Ok(())
    }

    /// Discriminant of the linearised follower's characteristic polynomial.
    pub fn discriminant(&self) -> f64 {
        (self.alpha + self.k).powi(2) - 4.0 * self.alpha / self.h
    }
}
