//! Merge decision logic for a single ramp vehicle `m` joining the main lane
//! in the gap between a lead vehicle `a` and a trailing vehicle `b`.
//!
//! The protocol, evaluated on the decision clock:
//!
//! 1. While `m` waits at the hold point, every pair of consecutive main-lane
//!    vehicles that is a candidate gap is tested with [`release_check`].
//! 2. After release, `m` accelerates along the ramp with [`ramp_accel`].
//! 3. Inside the merge region `[0, L]` the gap is verified and
//!    [`region_control`] picks the commands for `m` and `b`.
//! 4. [`try_merge`] commits the lane change once both scores are
//!    non-negative and there is enough room behind `a`.
//! 5. After the merge, `b` is supervised by [`enhanced_brake_controller`].

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_accel, follow_law, free_road_accel};
use crate::params::ControlParams;
use crate::vehicle::VehicleState;

/// Minimum bumper gap between `a` and `m` required to commit a merge, m.
pub const MIN_LEAD_GAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeScores {
    pub s_a: f64,
    pub s_b: f64,
}

impl MergeScores {
    pub fn both_nonnegative(&self) -> bool {
        self.s_a >= 0.0 && self.s_b >= 0.0
    }
}

/// Margin of `m` with respect to the lead `a`.
pub fn score_lead(m: &VehicleState, a: &VehicleState, p: &ControlParams) -> f64 {
    a.x - m.x - p.d - p.h * m.v + p.t_v * (a.v - m.v)
}

/// Margin of `m` with respect to the trailing vehicle `b`.
pub fn score_trail(m: &VehicleState, b: &VehicleState, p: &ControlParams) -> f64 {
    m.x - b.x - p.d - p.h * b.v + p.t_v * (m.v - b.v)
}

pub fn score_gap(m: &VehicleState, a: &VehicleState, b: &VehicleState, p: &ControlParams) -> MergeScores {
    MergeScores { s_a: score_lead(m, a, p), s_b: score_trail(m, b, p) }
}

/// Scores with missing neighbours treated as infinitely far away.
pub fn score_neighbours(
    m: &VehicleState,
    a: Option<&VehicleState>,
    b: Option<&VehicleState>,
    p: &ControlParams,
) -> MergeScores {
    MergeScores {
        s_a: a.map_or(f64::INFINITY, |a| score_lead(m, a, p)),
        s_b: b.map_or(f64::INFINITY, |b| score_trail(m, b, p)),
    }
}

/// `a` immediately precedes `b`. The gap is worth considering once `b` is
/// still upstream of the region and the pair is at least two equilibrium
/// spacings apart.
pub fn candidate_gap(a: &VehicleState, b: &VehicleState, p: &ControlParams) -> bool {
    b.x < 0.0 && a.x >= b.x + 2.0 * (p.h * b.v + p.d)
}

/// In-region verification of the gap: bumper gap at least `2 h v_max + D`.
pub fn gap_verified(a: &VehicleState, b: &VehicleState, p: &ControlParams) -> bool {
    a.x - b.x - p.d >= 2.0 * p.h * p.v_max + p.d
}

/// Estimated arrival times at the region entrance plus the ramp profile of the
/// merging vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseEstimate {
    pub t_a: f64,
    pub t_b: f64,
    pub t_m: f64,
    pub v_m0: f64,
}

/// Time for a standing vehicle at the hold point to reach x = 0 at `a_max`.
pub fn ramp_travel_time(p: &ControlParams) -> f64 {
    (2.0 * p.x_g_dist / p.a_max).sqrt()
}

/// Expected entry velocity of a released vehicle.
pub fn ramp_entry_speed(p: &ControlParams) -> f64 {
    p.a_max * ramp_travel_time(p)
}

impl ReleaseEstimate {
    /// `None` when either vehicle is standing still.
    pub fn new(a: &VehicleState, b: &VehicleState, p: &ControlParams) -> Option<Self> {
        if a.v <= 0.0 || b.v <= 0.0 {
            return None;
        }
        Some(Self { t_a: -a.x / a.v, t_b: -b.x / b.v, t_m: ramp_travel_time(p), v_m0: ramp_entry_speed(p) })
    }

    /// Sequencing plus the two window conditions on the release time.
    pub fn admits_release(&self, a: &VehicleState, b: &VehicleState, p: &ControlParams) -> bool {
        let in_sequence = self.t_a < self.t_m && self.t_m < self.t_b;
        let after_a = self.t_a + p.d / a.v + (p.h + p.t_v) * self.v_m0 / a.v - p.t_v;
        let before_b = self.t_b - p.d / b.v - p.h - p.t_v + p.t_v * self.v_m0 / b.v;
        in_sequence && self.t_m > after_a && self.t_m < before_b
    }
}

/// Whether the queued vehicle may leave the hold point for gap `(a, b)` now.
pub fn release_check(a: &VehicleState, b: &VehicleState, p: &ControlParams) -> bool {
    ReleaseEstimate::new(a, b, p).is_some_and(|est| est.admits_release(a, b, p))
}

/// Ramp command after release: approach `v_m0` no faster than `a_max`.
pub fn ramp_accel(m: &VehicleState, v_m0: f64, p: &ControlParams) -> f64 {
    (p.k * (v_m0 - m.v)).min(p.a_max)
}

/// Control mode of the merging vehicle. The mode is chosen on the decision
/// clock; [`MergerMode::command`] evaluates it at every physics step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum MergerMode {
    /// Standing at the hold point.
    Hold,
    /// Ramp acceleration towards `v_m0`.
    Ramp,
    /// Car-following on the lead `a`, also used after the merge.
    FollowLead,
    /// Unverified gap, too close to `a`: close in on the lead's equilibrium.
    ApproachLead,
    /// Unverified gap, too close to `b`: move away from the trailer.
    EvadeTrailer,
    /// Fixed command, m/s^2.
    Constant(f64),
}

impl MergerMode {
    /// Clamped command for `m` under this mode.
    pub fn command(
        &self,
        m: &VehicleState,
        a: Option<&VehicleState>,
        b: Option<&VehicleState>,
        v_m0: f64,
        p: &ControlParams,
        literal_eq14: bool,
    ) -> f64 {
        // The printed unverified-gap terms drop D; `literal_eq14` keeps that form.
        let d_term = if literal_eq14 { 0.0 } else { p.d };
        let drive = match *self {
            MergerMode::Hold => return 0.0,
            MergerMode::Ramp => ramp_accel(m, v_m0, p),
            MergerMode::Constant(value) => value,
            MergerMode::FollowLead => match a {
                Some(a) => follow_law(a.x - m.x, a.v, m.v, m.a, p),
                None => free_road_accel(m.v, p),
            },
            MergerMode::ApproachLead => match a {
                Some(a) => p.alpha / p.h * (a.x - m.x - d_term - p.h * m.v) + p.k * (a.v - m.v) - p.xi * m.a,
                None => free_road_accel(m.v, p),
            },
            MergerMode::EvadeTrailer => match b {
                Some(b) => -(p.alpha / p.h * (m.x - b.x - d_term - p.h * b.v) + p.k * (m.v - b.v)) - p.xi * m.a,
                None => ramp_accel(m, v_m0, p),
            },
        };
        clamp_accel(drive, p.d_max, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionDecision {
    pub mode: MergerMode,
    /// Fixed command imposed on the trailing vehicle `b`, if any.
    pub trail_cmd: Option<f64>,
}

/// Choose the in-region commands for `m` (already past x = 0, not merged).
///
/// Past the midpoint the braking rules override the regular dispatch: a
/// negative lead score slows `m` at `d_max/2`; a negative trail score holds
/// `m` and brakes `b` at `d_max`. Otherwise a verified gap puts `m` into
/// car-following on `a` (with `b` braking while its score is negative) and an
/// unverified gap steers `m` towards whichever side is violated.
pub fn region_control(scores: MergeScores, verified: bool, past_midpoint: bool, p: &ControlParams) -> RegionDecision {
    if past_midpoint && (scores.s_a < 0.0 || scores.s_b < 0.0) {
        let trail_cmd = (scores.s_b < 0.0).then_some(-p.d_max);
        let mode = if scores.s_a < 0.0 { MergerMode::Constant(-p.d_max / 2.0) } else { MergerMode::Constant(0.0) };
        return RegionDecision { mode, trail_cmd };
    }
    if verified {
        return RegionDecision { mode: MergerMode::FollowLead, trail_cmd: (scores.s_b < 0.0).then_some(-p.d_max) };
    }
    let mode = match (scores.s_a >= 0.0, scores.s_b >= 0.0) {
        (false, true) => MergerMode::ApproachLead,
        (true, false) => MergerMode::EvadeTrailer,
        (true, true) => MergerMode::Ramp,
        (false, false) => MergerMode::ApproachLead,
    };
    RegionDecision { mode, trail_cmd: None }
}

/// Commit rule on precomputed quantities.
pub fn merge_allowed(scores: MergeScores, lead_bumper_gap: f64) -> bool {
    scores.both_nonnegative() && lead_bumper_gap >= MIN_LEAD_GAP
}

/// Whether `m` may change lanes into the verified gap `(a, b)` now.
pub fn try_merge(m: &VehicleState, a: Option<&VehicleState>, b: Option<&VehicleState>, p: &ControlParams) -> bool {
    let scores = score_neighbours(m, a, b, p);
    let lead_gap = a.map_or(f64::INFINITY, |a| a.x - m.x - p.d);
    merge_allowed(scores, lead_gap)
}

/// Trigger expression for enhanced braking of `b` behind a merged `m`:
/// the ξ-free follow command scaled by `h/alpha`.
pub fn brake_trigger(b: &VehicleState, m: &VehicleState, p: &ControlParams) -> f64 {
    (m.x - b.x - p.d - p.h * b.v) + p.h * p.k / p.alpha * (m.v - b.v)
}

/// Supervises the vehicle `b` trailing a just-merged `m`.
///
/// Returns the command for `b` and whether enhanced braking is engaged.
/// Engages at `-d_prime_max` once the trigger goes negative. Releases when
/// the ξ-free follow command is above `-d_prime_max` and the closing speed is
/// below `d_prime_max * recovery_time`.
pub fn enhanced_brake_controller(
    b: &VehicleState,
    m: &VehicleState,
    active: bool,
    recovery_time: f64,
    p: &ControlParams,
) -> (f64, bool) {
    let engaged = if active {
        let follow = p.alpha / p.h * (m.x - b.x - p.d - p.h * b.v) + p.k * (m.v - b.v);
        !(follow > -p.d_prime_max && b.v < m.v + p.d_prime_max * recovery_time)
    } else {
        brake_trigger(b, m, p) < 0.0
    };
    if engaged {
        (-p.d_prime_max, true)
    } else {
        let cmd = clamp_accel(follow_law(m.x - b.x, m.v, b.v, b.a, p), p.d_max, p);
        (cmd, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{Lane, VehicleId};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn veh(x: f64, v: f64) -> VehicleState {
        VehicleState::new(VehicleId(0), x, v, Lane::Main)
    }

    #[test]
    fn lead_score_examples() {
        let p = ControlParams::default();
        let m = veh(0.0, 20.0);
        let a = veh(p.d + p.h * 20.0, 20.0);
        assert_abs_diff_eq!(score_lead(&m, &a, &p), 0.0, epsilon = 1e-12);

        let m = veh(100.0, 28.0);
        assert_abs_diff_eq!(score_lead(&m, &veh(150.0, 38.0), &p), 39.5, epsilon = 1e-12);
        assert_abs_diff_eq!(score_trail(&m, &veh(60.0, 38.0), &p), -30.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_tv_drops_velocity_terms() {
        let p = ControlParams { t_v: 0.0, ..Default::default() };
        let m = veh(100.0, 28.0);
        let s = score_gap(&m, &veh(150.0, 38.0), &veh(60.0, 38.0), &p);
        assert_abs_diff_eq!(s.s_a, 50.0 - 7.5 - 28.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.s_b, 40.0 - 7.5 - 38.0, epsilon = 1e-12);
    }

    #[test]
    fn candidate_gap_examples() {
        let p = ControlParams::default();
        assert!(candidate_gap(&veh(-250.0, 38.0), &veh(-450.0, 38.0), &p));
        assert!(!candidate_gap(&veh(300.0, 38.0), &veh(10.0, 38.0), &p));
        assert!(candidate_gap(&veh(-359.0, 38.0), &veh(-450.0, 38.0), &p));
        assert!(!candidate_gap(&veh(-359.001, 38.0), &veh(-450.0, 38.0), &p));
    }

    #[test]
    fn ramp_profile_closed_form() {
        let p = ControlParams::default();
        assert_abs_diff_eq!(ramp_travel_time(&p), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ramp_entry_speed(&p), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn release_window_examples() {
        let p = ControlParams::default();
        let a = veh(-250.0, 38.0);
        let est = ReleaseEstimate::new(&a, &veh(-450.0, 38.0), &p).unwrap();
        let after_a = est.t_a + p.d / 38.0 + (p.h + p.t_v) * 30.0 / 38.0 - p.t_v;
        let before_b = est.t_b - p.d / 38.0 - p.h - p.t_v + p.t_v * 30.0 / 38.0;
        assert_abs_diff_eq!(after_a, 7.039, epsilon = 1e-3);
        assert_abs_diff_eq!(before_b, 10.12, epsilon = 1e-2);
        assert!(release_check(&a, &veh(-450.0, 38.0), &p));
        assert!(!release_check(&a, &veh(-420.0, 38.0), &p));
    }

    #[test]
    fn release_rejects_standing_vehicles() {
        let p = ControlParams::default();
        assert!(!release_check(&veh(-250.0, 0.0), &veh(-450.0, 38.0), &p));
        assert!(!release_check(&veh(-250.0, 38.0), &veh(-450.0, 0.0), &p));
    }

    #[test]
    fn ramp_accel_examples() {
        let p = ControlParams::default();
        assert_eq!(ramp_accel(&veh(-150.0, 0.0), 30.0, &p), 3.0);
        assert_eq!(ramp_accel(&veh(-10.0, 30.0), 30.0, &p), 0.0);
        assert_eq!(ramp_accel(&veh(-10.0, 29.0), 30.0, &p), 1.0);
    }

    #[test]
    fn verified_at_equilibrium_needs_no_correction() {
        let p = ControlParams::default();
        let a = veh(200.0, 30.0);
        let m = veh(200.0 - p.d - p.h * 30.0, 30.0);
        let b = veh(0.0, 30.0);
        let dec = region_control(score_gap(&m, &a, &b, &p), true, false, &p);
        assert_eq!(dec.mode, MergerMode::FollowLead);
        assert_eq!(dec.trail_cmd, None);
        assert_abs_diff_eq!(dec.mode.command(&m, Some(&a), Some(&b), 30.0, &p, false), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn verified_with_negative_trail_score_brakes_b() {
        let p = ControlParams::default();
        let scores = MergeScores { s_a: 39.5, s_b: -30.5 };
        let dec = region_control(scores, true, false, &p);
        assert_eq!(dec.trail_cmd, Some(-2.0));
        assert_eq!(dec.mode, MergerMode::FollowLead);
    }

    #[test]
    fn past_midpoint_rules() {
        let p = ControlParams::default();
        let dec = region_control(MergeScores { s_a: -5.0, s_b: 3.0 }, true, true, &p);
        assert_eq!(dec.mode, MergerMode::Constant(-1.0));
        assert_eq!(dec.trail_cmd, None);
        let dec = region_control(MergeScores { s_a: 5.0, s_b: -3.0 }, false, true, &p);
        assert_eq!(dec.mode, MergerMode::Constant(0.0));
        assert_eq!(dec.trail_cmd, Some(-2.0));
        let dec = region_control(MergeScores { s_a: 5.0, s_b: 3.0 }, true, true, &p);
        assert_eq!(dec.mode, MergerMode::FollowLead);
    }

    #[test]
    fn unverified_dispatch() {
        let p = ControlParams::default();
        let d = |s_a, s_b| region_control(MergeScores { s_a, s_b }, false, false, &p).mode;
        assert_eq!(d(-1.0, 4.0), MergerMode::ApproachLead);
        assert_eq!(d(4.0, -1.0), MergerMode::EvadeTrailer);
        assert_eq!(d(4.0, 4.0), MergerMode::Ramp);
    }

    #[test]
    fn unverified_commands_include_d_unless_literal() {
        let p = ControlParams::default();
        let m = veh(100.0, 28.0);
        let a = veh(130.0, 28.0);
        let with_d = MergerMode::ApproachLead.command(&m, Some(&a), None, 30.0, &p, false);
        let literal = MergerMode::ApproachLead.command(&m, Some(&a), None, 30.0, &p, true);
        // 2 (30 - 7.5 - 28) = -11 -> clamped; literal: 2 (30 - 28) = 4 -> clamped.
        assert_eq!(with_d, -2.0);
        assert_eq!(literal, 3.0);
        let b = veh(80.0, 30.0);
        // -(2 (20 - 7.5 - 30) + (28 - 30)) = 37 -> a_max.
        assert_eq!(MergerMode::EvadeTrailer.command(&m, None, Some(&b), 30.0, &p, false), 3.0);
    }

    #[test]
    fn merge_commit_rule() {
        assert!(merge_allowed(MergeScores { s_a: 39.5, s_b: 2.5 }, 14.5));
        assert!(!merge_allowed(MergeScores { s_a: 39.5, s_b: -30.5 }, 14.5));
        assert!(merge_allowed(MergeScores { s_a: 0.0, s_b: 0.0 }, 10.0));
        assert!(!merge_allowed(MergeScores { s_a: 1.0, s_b: 1.0 }, 9.99));
    }

    #[test]
    fn try_merge_on_states() {
        let p = ControlParams::default();
        let m = veh(100.0, 28.0);
        let a = veh(150.0, 38.0);
        assert!(!try_merge(&m, Some(&a), Some(&veh(60.0, 38.0)), &p));
        // s_b = 100 - x_b - 7.5 - 38 - 25 >= 0 with x_b = 29.5 -> exactly 0.
        assert!(try_merge(&m, Some(&a), Some(&veh(29.5, 38.0)), &p));
        assert!(try_merge(&m, None, None, &p));
    }

    #[test]
    fn enhanced_braking_examples() {
        let p = ControlParams::default();
        let m = veh(100.0, 30.0);
        let b = veh(100.0 - p.d - p.h * 30.0, 30.0);
        assert_abs_diff_eq!(brake_trigger(&b, &m, &p), 0.0, epsilon = 1e-12);
        assert!(!enhanced_brake_controller(&b, &m, false, 2.0, &p).1);

        let m = veh(100.0, 28.0);
        let b = veh(100.0 - p.d - p.h * 38.0, 38.0);
        assert_abs_diff_eq!(brake_trigger(&b, &m, &p), -5.0, epsilon = 1e-12);
        let (cmd, active) = enhanced_brake_controller(&b, &m, false, 2.0, &p);
        assert!(active);
        assert_eq!(cmd, -3.0);
        // Still closing at 10 m/s > d' T = 6: stays engaged.
        assert!(enhanced_brake_controller(&b, &m, true, 2.0, &p).1);
        // Closing speed 4 m/s with a comfortable gap: releases.
        let b = veh(100.0 - p.d - p.h * 32.0 - 5.0, 32.0);
        let (_, active) = enhanced_brake_controller(&b, &m, true, 2.0, &p);
        assert!(!active);
    }

    proptest! {
        #[test]
        fn verified_gap_at_speed_limit_has_positive_score_sum(
            extra in 0.0..400.0f64,
            frac in 0.0..1.0f64,
            v_m in 0.0..38.0f64,
        ) {
            let p = ControlParams::default();
            let b = veh(0.0, p.v_max);
            let a = veh(2.0 * p.h * p.v_max + 2.0 * p.d + extra, p.v_max);
            prop_assert!(gap_verified(&a, &b, &p));
            let m = veh(b.x + frac * (a.x - b.x), v_m);
            let s = score_gap(&m, &a, &b, &p);
            prop_assert!(s.s_a + s.s_b > 0.0);
        }
    }
}
