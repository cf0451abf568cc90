//! Two-vehicle linear analysis of the car-following law: eigenvalues, the
//! peak deceleration of a follower closing on a slower constant-speed lead,
//! and the matching recovery time constant.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::params::ControlParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSpectrum {
    /// Root on the `+` branch, closer to zero.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Time of peak deceleration after the follow command crosses zero.
    pub theta_peak: f64,
    /// Peak deceleration per unit closing speed, 1/s.
    pub peak_factor: f64,
    pub t_recover: f64,
}

impl LinearSpectrum {
    pub fn new(p: &ControlParams) -> Result<Self, AnalysisError> {
        let (lambda1, lambda2) = eigenvalues(p)?;
        let theta_peak = peak_time(lambda1, lambda2);
        let peak_factor = if lambda1 == lambda2 {
            lambda1 * lambda1 * theta_peak * (lambda1 * theta_peak).exp()
        } else {
            lambda1 * lambda2 / (lambda1 - lambda2) * ((lambda1 * theta_peak).exp() - (lambda2 * theta_peak).exp())
        };
        Ok(Self { lambda1, lambda2, theta_peak, peak_factor, t_recover: 1.0 / peak_factor })
    }
}

/// Roots of `s^2 + (alpha + k) s + alpha/h`, `+` branch first.
pub fn eigenvalues(p: &ControlParams) -> Result<(f64, f64), AnalysisError> {
    let disc = p.discriminant();
    if disc < 0.0 {
        return Err(AnalysisError::ComplexEigenvalues { discriminant: disc });
    }
    let sum = p.alpha + p.k;
    let root = disc.sqrt();
    // Stable form for the small root when k >> alpha.
    let lambda2 = -0.5 * (sum + root);
    let lambda1 = (p.alpha / p.h) / lambda2;
    Ok((lambda1, lambda2))
}

fn peak_time(lambda1: f64, lambda2: f64) -> f64 {
    if lambda1 == lambda2 {
        // Repeated root: t e^{lambda t} peaks at -1/lambda.
        return -1.0 / lambda1;
    }
    (lambda2 / lambda1).ln() / (lambda1 - lambda2)
}

/// Peak deceleration (positive) and its time for a closing speed `delta_v`.
pub fn peak_deceleration(delta_v: f64, p: &ControlParams) -> Result<(f64, f64), AnalysisError> {
    let s = LinearSpectrum::new(p)?;
    Ok((s.peak_factor * delta_v, s.theta_peak))
}

pub fn recovery_time(p: &ControlParams) -> Result<f64, AnalysisError> {
    Ok(LinearSpectrum::new(p)?.t_recover)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearTrajectory {
    pub dt: f64,
    /// Follower acceleration at `t = i dt`.
    pub accel: Vec<f64>,
}

impl LinearTrajectory {
    /// Most negative acceleration and the time it occurs.
    pub fn minimum(&self) -> (f64, f64) {
        self.accel
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(best, t), (i, &a)| if a < best { (a, i as f64 * self.dt) } else { (best, t) })
    }
}

/// Numerical reference for the closed forms.
///
/// Integrates the unclamped follow law with `xi = 0` (and the actuator lag
/// when `tau > 0`) with RK4. The lead holds `v_m = v_max - delta_v`. The
/// follower starts at `v_max` at the spacing where its command is exactly
/// zero (the enhanced-braking trigger point), which is the initial condition
/// the closed form assumes.
pub fn linear_response_oracle(delta_v: f64, p: &ControlParams, dt: f64, tau: f64, horizon: f64) -> LinearTrajectory {
    let v_b0 = p.v_max;
    let v_m = p.v_max - delta_v;
    let gain = p.alpha / p.h;
    // State relative to the lead: spacing s, follower speed v, realised accel a.
    let command = |s: f64, v: f64| gain * (s - p.d - p.h * v) + p.k * (v_m - v);
    let s0 = p.d + p.h * v_b0 + p.h * p.k / p.alpha * (v_b0 - v_m);
    let deriv = |s: f64, v: f64, a: f64| -> (f64, f64, f64) {
        if tau > 0.0 {
            (v_m - v, a, (command(s, v) - a) / tau)
        } else {
            (v_m - v, command(s, v), 0.0)
        }
    };
    let realised = |s: f64, v: f64, a: f64| if tau > 0.0 { a } else { command(s, v) };

    let steps = (horizon / dt).ceil() as usize;
    let (mut s, mut v, mut a) = (s0, v_b0, 0.0);
    let mut accel = Vec::with_capacity(steps + 1);
    accel.push(realised(s, v, a));
    for _ in 0..steps {
        let k1 = deriv(s, v, a);
        let k2 = deriv(s + 0.5 * dt * k1.0, v + 0.5 * dt * k1.1, a + 0.5 * dt * k1.2);
        let k3 = deriv(s + 0.5 * dt * k2.0, v + 0.5 * dt * k2.1, a + 0.5 * dt * k2.2);
        let k4 = deriv(s + dt * k3.0, v + dt * k3.1, a + dt * k3.2);
        s += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        a += dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        accel.push(realised(s, v, a));
    }
    LinearTrajectory { dt, accel }
}
