//! World state and the fixed-step simulation loop.
//!
//! Each step:
//!
//! 1. inject due platoon vehicles at the upstream boundary;
//! 2. on the decision clock (every 0.1 s) run the merge protocol;
//! 3. compute every commanded acceleration from the current states;
//! 4. apply the actuator lag and the ballistic update to all vehicles;
//! 5. accumulate metrics;
//! 6. remove vehicles past `despawn_x` and record their trip delay.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_accel, follow_law, free_road_accel, kinematic_step, lag_step};
use crate::error::{ConfigError, SimFault};
use crate::events::{Event, EventKind, EventLog};
use crate::linear::recovery_time;
use crate::merge::{
    candidate_gap, enhanced_brake_controller, gap_verified, ramp_entry_speed, region_control, score_neighbours,
    try_merge, MergerMode, ReleaseEstimate,
};
use crate::metrics::{Metrics, MetricsAccumulator};
use crate::params::ControlParams;
use crate::traffic::{PlatoonStream, SpawnEvent, TrafficGenConfig};
use crate::vehicle::{Lane, Origin, VehicleId, VehicleState};

/// Protocol decisions happen only on this clock, s.
pub const DECISION_INTERVAL: f64 = 0.1;
pub const DEFAULT_DESPAWN_X: f64 = 1500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampDemand {
    /// A vehicle is always waiting at the hold point.
    Saturated,
    /// Poisson arrivals at the given rate, vehicles/s.
    Poisson {
        rate: f64,
    },
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ControlParams,
    pub traffic: TrafficGenConfig,
    pub t_max: f64,
    pub dt: f64,
    pub despawn_x: f64,
    pub seed: u64,
    pub ramp: RampDemand,
    pub enhanced_braking: bool,
    /// Use the unverified-gap commands without the D term.
    pub literal_eq14: bool,
    /// Metrics start after this many seconds; `None` waits for one full
    /// traversal of the span at `v_max`.
    pub warmup: Option<f64>,
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: ControlParams::default(),
            traffic: TrafficGenConfig::default(),
            t_max: 2000.0,
            dt: 0.1,
            despawn_x: DEFAULT_DESPAWN_X,
            seed: 1,
            ramp: RampDemand::Saturated,
            enhanced_braking: true,
            literal_eq14: false,
            warmup: None,
            record_events: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        self.traffic.validate()?;
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(ConfigError::invalid("t_max", self.t_max, "must be finite and >= 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::invalid("dt", self.dt, "must be > 0"));
        }
        let ratio = DECISION_INTERVAL / self.dt;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(ConfigError::invalid("dt", self.dt, "must divide the 0.1 s decision interval"));
        }
        if self.despawn_x.partial_cmp(&self.params.l) != Some(std::cmp::Ordering::Greater) {
            return Err(ConfigError::invalid("despawn_x", self.despawn_x, "must exceed L"));
        }
        if let RampDemand::Poisson { rate } = self.ramp {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(ConfigError::invalid("ramp.rate", rate, "must be > 0"));
            }
        }
        if let Some(w) = self.warmup {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ConfigError::invalid("warmup", w, "must be >= 0"));
            }
        }
        if ramp_entry_speed(&self.params) > self.params.v_max {
            return Err(ConfigError::invalid(
                "v_max",
                self.params.v_max,
                "must be at least the ramp entry speed a_max * sqrt(2 x_g / a_max)",
            ));
        }
        Ok(())
    }

    pub fn warmup_time(&self) -> f64 {
        self.warmup.unwrap_or((self.despawn_x - self.traffic.spawn_x) / self.params.v_max)
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePhase {
    Queued,
    Released,
    InRegionUnverified,
    InRegionVerified,
    Merged,
    Failed,
}

impl MergePhase {
    pub fn is_in_region(self) -> bool {
        matches!(self, MergePhase::InRegionUnverified | MergePhase::InRegionVerified)
    }

    /// Allowed transitions: queue, ramp, region (verification may flip
    /// either way), then a terminal state.
    pub fn can_transition_to(self, next: MergePhase) -> bool {
        use MergePhase::*;
        match (self, next) {
            (Queued, Released) => true,
            (Released, InRegionUnverified | InRegionVerified) => true,
            (InRegionUnverified | InRegionVerified, InRegionUnverified | InRegionVerified) => true,
            (InRegionUnverified | InRegionVerified, Merged | Failed) => true,
            (a, b) => a == b,
        }
    }
}

/// The single ramp vehicle currently at the hold point or on its way in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merger {
    pub vehicle: VehicleState,
    pub phase: MergePhase,
    pub past_midpoint: bool,
    pub mode: MergerMode,
    pub lead: Option<VehicleId>,
    pub trail: Option<VehicleId>,
    /// Time this vehicle became head of the queue.
    pub head_since: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BrakeFollowUp {
    merged: VehicleId,
    trailer: VehicleId,
    active: bool,
}

/// Scores and lead gap observed at each committed merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub t: f64,
    pub id: VehicleId,
    pub s_a: f64,
    pub s_b: f64,
    pub lead_gap: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleCounts {
    pub spawned: u64,
    pub despawned: u64,
    pub failed: u64,
}

#[derive(Debug, Clone)]
struct RampQueue {
    demand: RampDemand,
    rng: ChaCha8Rng,
    next_arrival: f64,
    waiting: VecDeque<f64>,
}

impl RampQueue {
    fn new(demand: RampDemand, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut queue = Self { demand, rng, next_arrival: 0.0, waiting: VecDeque::new() };
        if let RampDemand::Poisson { rate } = demand {
            queue.next_arrival = queue.exp_sample(rate);
        }
        queue
    }

    fn exp_sample(&mut self, rate: f64) -> f64 {
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / rate
    }

    fn advance(&mut self, clock: f64) {
        if let RampDemand::Poisson { rate } = self.demand {
            while self.next_arrival <= clock {
                self.waiting.push_back(self.next_arrival);
                self.next_arrival += self.exp_sample(rate);
            }
        }
    }

    /// Arrival time of the next vehicle to take the hold point, if any.
    fn pop(&mut self, clock: f64) -> Option<f64> {
        match self.demand {
            RampDemand::Saturated => Some(clock),
            RampDemand::Disabled => None,
            RampDemand::Poisson { .. } => self.waiting.pop_front(),
        }
    }

    fn len(&self) -> usize {
        self.waiting.len()
    }
}

/// Finalised outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub counts: VehicleCounts,
    pub on_road: u64,
    /// Most negative realised acceleration of any main-lane vehicle, m/s^2.
    pub min_main_accel: f64,
    pub merge_records: Vec<MergeRecord>,
    pub queue_wait_max: f64,
    pub event_counts: std::collections::BTreeMap<String, u64>,
}

pub struct World {
    config: SimConfig,
    step_count: u64,
    decision_every: u64,
    warmup_end_step: u64,
    /// Ordered front to back (decreasing x).
    main_lane: Vec<VehicleState>,
    queue: RampQueue,
    merger: Option<Merger>,
    trail_override: Option<(VehicleId, f64)>,
    followup: Option<BrakeFollowUp>,
    stream: Option<PlatoonStream>,
    pending: Option<SpawnEvent>,
    next_id: u64,
    metrics: MetricsAccumulator,
    events: EventLog,
    counts: VehicleCounts,
    recovery_time: f64,
    v_m0: f64,
    merge_records: Vec<MergeRecord>,
    min_main_accel: f64,
}

impl World {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        let mut world = Self::empty(config)?;
        let mut stream = PlatoonStream::new(config.seed, config.traffic, config.params);
        world.pending = stream.next();
        world.stream = Some(stream);
        Ok(world)
    }

    /// World without a platoon stream, seeded with the given main-lane
    /// vehicles (any order). Ids are reassigned in front-to-back order.
    pub fn with_vehicles(config: SimConfig, mut vehicles: Vec<VehicleState>) -> Result<Self, ConfigError> {
        let mut world = Self::empty(config)?;
        vehicles.sort_by(|a, b| b.x.total_cmp(&a.x));
        for mut v in vehicles {
            v.id = world.fresh_id();
            v.lane = Lane::Main;
            world.counts.spawned += 1;
            world.main_lane.push(v);
        }
        Ok(world)
    }

    fn empty(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let decision_every = (DECISION_INTERVAL / config.dt).round() as u64;
        let warmup_end_step = (config.warmup_time() / config.dt - 1e-9).ceil().max(0.0) as u64;
        let total = config.total_steps();
        let window = total.saturating_sub(warmup_end_step) as f64 * config.dt;
        // Only enhanced braking needs the recovery time; underdamped
        // parameter sets fall back to releasing on the command condition.
        let recovery = recovery_time(&config.params).unwrap_or(f64::INFINITY);
        Ok(Self {
            config,
            step_count: 0,
            decision_every,
            warmup_end_step,
            main_lane: Vec::new(),
            queue: RampQueue::new(config.ramp, config.seed),
            merger: None,
            trail_override: None,
            followup: None,
            stream: None,
            pending: None,
            next_id: 0,
            metrics: MetricsAccumulator::new(window),
            events: EventLog::new(config.record_events),
            counts: VehicleCounts::default(),
            recovery_time: recovery,
            v_m0: ramp_entry_speed(&config.params),
            merge_records: Vec::new(),
            min_main_accel: 0.0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.step_count as f64 * self.config.dt
    }

    pub fn main_lane(&self) -> &[VehicleState] {
        &self.main_lane
    }

    pub fn merger(&self) -> Option<&Merger> {
        self.merger.as_ref()
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn counts(&self) -> VehicleCounts {
        self.counts
    }

    pub fn on_road(&self) -> u64 {
        self.main_lane.len() as u64 + self.merger.is_some() as u64
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn merge_records(&self) -> &[MergeRecord] {
        &self.merge_records
    }

    pub fn min_main_accel(&self) -> f64 {
        self.min_main_accel
    }

    fn fresh_id(&mut self) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        id
    }

    fn in_window(&self) -> bool {
        self.step_count >= self.warmup_end_step
    }

    fn log(&mut self, v: &VehicleState, kind: EventKind) {
        let t = self.clock();
        self.events.push(Event { t, id: v.id, kind, x: v.x, v: v.v });
    }

    /// Place a ramp vehicle directly into the main lane as a merge at the
    /// current clock. Used to study a single merge in isolation.
    pub fn force_merge(&mut self, x: f64, v: f64) -> VehicleId {
        let id = self.fresh_id();
        let mut m = VehicleState::new(id, x, v, Lane::Main);
        m.origin = Origin::Ramp;
        m.spawn_time = self.clock();
        self.counts.spawned += 1;
        let idx = self.main_lane.partition_point(|o| o.x > x);
        self.main_lane.insert(idx, m);
        self.metrics.record_merge(self.clock());
        id
    }

    /// Run to the configured horizon.
    pub fn run(&mut self) -> Result<(), SimFault> {
        let total = self.config.total_steps();
        while self.step_count < total {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), SimFault> {
        self.spawn_due();
        self.queue.advance(self.clock());
        if self.step_count.is_multiple_of(self.decision_every) {
            self.decide();
        }
        self.integrate()?;
        self.step_count += 1;
        Ok(())
    }

    fn spawn_due(&mut self) {
        let clock = self.clock();
        let p = self.config.params;
        let spawn_x = self.config.traffic.spawn_x;
        while let Some(ev) = self.pending {
            if ev.nominal_time > clock + 1e-9 {
                break;
            }
            let mut x = spawn_x + p.v_max * (clock - ev.nominal_time);
            if let Some(last) = self.main_lane.last() {
                x = x.min(last.x - p.equilibrium_spacing());
            }
            if x < spawn_x - 1e-9 {
                break;
            }
            let id = self.fresh_id();
            let mut v = VehicleState::new(id, x, p.v_max, Lane::Main);
            v.spawn_time = ev.nominal_time;
            v.spawn_x = spawn_x;
            self.counts.spawned += 1;
            self.log(&v, EventKind::Spawn);
            self.main_lane.push(v);
            self.pending = self.stream.as_mut().and_then(Iterator::next);
        }
    }

    /// Indices of the main-lane vehicles just ahead of and just behind `x`.
    fn neighbours(&self, x: f64) -> (Option<usize>, Option<usize>) {
        let idx = self.main_lane.partition_point(|v| v.x > x);
        let a = idx.checked_sub(1);
        let b = (idx < self.main_lane.len()).then_some(idx);
        (a, b)
    }

    fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.main_lane.iter().position(|v| v.id == id)
    }

    fn admit_queue_head(&mut self) {
        if self.merger.is_some() {
            return;
        }
        let clock = self.clock();
        let Some(arrival) = self.queue.pop(clock) else { return };
        let id = self.fresh_id();
        let mut v = VehicleState::new(id, self.config.params.hold_x(), 0.0, Lane::Ramp);
        v.spawn_time = arrival;
        self.counts.spawned += 1;
        self.log(&v, EventKind::QueueHead);
        self.merger = Some(Merger {
            vehicle: v,
            phase: MergePhase::Queued,
            past_midpoint: false,
            mode: MergerMode::Hold,
            lead: None,
            trail: None,
            head_since: clock.max(arrival),
        });
    }

    /// The earliest-arriving gap that admits a release now.
    fn select_gap(&self) -> Option<(usize, usize)> {
        let p = &self.config.params;
        self.main_lane
            .windows(2)
            .enumerate()
            .filter(|(_, w)| candidate_gap(&w[0], &w[1], p))
            .filter_map(|(i, w)| {
                let est = ReleaseEstimate::new(&w[0], &w[1], p)?;
                est.admits_release(&w[0], &w[1], p).then_some((i, est.t_a))
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| (i, i + 1))
    }

    fn set_phase(merger: &mut Merger, next: MergePhase) {
        debug_assert!(merger.phase.can_transition_to(next), "{:?} -> {:?}", merger.phase, next);
        merger.phase = next;
    }

    fn decide(&mut self) {
        self.trail_override = None;
        self.admit_queue_head();
        self.decide_merger();
        if self.merger.is_none() {
            self.admit_queue_head();
        }
        self.supervise_trailer();
    }

    fn decide_merger(&mut self) {
        let Some(mut merger) = self.merger else { return };
        let p = self.config.params;
        let clock = self.clock();

        if merger.phase == MergePhase::Queued {
            if let Some((ai, bi)) = self.select_gap() {
                let (a, b) = (self.main_lane[ai], self.main_lane[bi]);
                Self::set_phase(&mut merger, MergePhase::Released);
                merger.mode = MergerMode::Ramp;
                merger.lead = Some(a.id);
                merger.trail = Some(b.id);
                if self.in_window() {
                    self.metrics.record_queue_wait(clock - merger.head_since);
                }
                self.log(&merger.vehicle, EventKind::Release { a: Some(a.id), b: Some(b.id) });
            }
            self.merger = Some(merger);
            return;
        }

        let m = merger.vehicle;
        if merger.phase == MergePhase::Released {
            if m.x < 0.0 {
                self.merger = Some(merger);
                return;
            }
            let pos = |id: Option<VehicleId>| id.and_then(|id| self.index_of(id)).map(|i| self.main_lane[i].x);
            let kind = EventKind::EnterRegion {
                a: merger.lead,
                b: merger.trail,
                a_x: pos(merger.lead),
                b_x: pos(merger.trail),
            };
            self.log(&m, kind);
            Self::set_phase(&mut merger, MergePhase::InRegionUnverified);
        }

        if m.x >= p.l {
            Self::set_phase(&mut merger, MergePhase::Failed);
            self.counts.failed += 1;
            if self.in_window() {
                self.metrics.record_failure();
            }
            self.log(&m, EventKind::Fail);
            self.merger = None;
            return;
        }

        let (ai, bi) = self.neighbours(m.x);
        let a = ai.map(|i| self.main_lane[i]);
        let b = bi.map(|i| self.main_lane[i]);
        merger.lead = a.map(|v| v.id);
        merger.trail = b.map(|v| v.id);
        let verified = match (&a, &b) {
            (Some(a), Some(b)) => gap_verified(a, b, &p),
            _ => true,
        };
        if m.x >= p.l / 2.0 {
            merger.past_midpoint = true;
        }
        let next = if verified { MergePhase::InRegionVerified } else { MergePhase::InRegionUnverified };
        Self::set_phase(&mut merger, next);

        if verified && try_merge(&m, a.as_ref(), b.as_ref(), &p) {
            self.commit_merge(merger, a, b, bi);
            return;
        }

        let scores = score_neighbours(&m, a.as_ref(), b.as_ref(), &p);
        let decision = region_control(scores, verified, merger.past_midpoint, &p);
        merger.mode = decision.mode;
        if let (Some(cmd), Some(bi)) = (decision.trail_cmd, bi) {
            self.main_lane[bi].trailing_role = true;
            self.trail_override = Some((self.main_lane[bi].id, cmd));
        }
        self.merger = Some(merger);
    }

    fn commit_merge(
        &mut self,
        mut merger: Merger,
        a: Option<VehicleState>,
        b: Option<VehicleState>,
        bi: Option<usize>,
    ) {
        let p = self.config.params;
        let clock = self.clock();
        let m = merger.vehicle;
        let scores = score_neighbours(&m, a.as_ref(), b.as_ref(), &p);
        let lead_gap = a.map_or(f64::INFINITY, |a| a.x - m.x - p.d);
        let finite = |v: f64| v.is_finite().then_some(v);
        Self::set_phase(&mut merger, MergePhase::Merged);
        self.merge_records.push(MergeRecord { t: clock, id: m.id, s_a: scores.s_a, s_b: scores.s_b, lead_gap });
        self.log(
            &m,
            EventKind::Merge {
                a: a.map(|v| v.id),
                b: b.map(|v| v.id),
                s_a: finite(scores.s_a),
                s_b: finite(scores.s_b),
                lead_gap: finite(lead_gap),
            },
        );
        if self.in_window() {
            self.metrics.record_merge(clock);
        }
        let mut merged = m;
        merged.lane = Lane::Main;
        let idx = bi.unwrap_or(self.main_lane.len());
        self.main_lane.insert(idx, merged);
        if let Some(b) = b {
            self.main_lane[idx + 1].trailing_role = true;
            self.followup = Some(BrakeFollowUp { merged: m.id, trailer: b.id, active: false });
        }
        self.merger = None;
    }

    fn supervise_trailer(&mut self) {
        let Some(mut f) = self.followup else { return };
        let end = |world: &mut World, idx: Option<usize>| {
            if let Some(i) = idx {
                world.main_lane[i].enhanced_brake_active = false;
            }
            world.followup = None;
        };
        let Some(mi) = self.index_of(f.merged) else { return end(self, None) };
        let bi = mi + 1;
        if bi >= self.main_lane.len() || self.main_lane[bi].id != f.trailer {
            let idx = self.index_of(f.trailer);
            return end(self, idx);
        }
        if !self.config.enhanced_braking {
            return end(self, Some(bi));
        }
        let p = self.config.params;
        let (m, b) = (self.main_lane[mi], self.main_lane[bi]);
        let (_, active) = enhanced_brake_controller(&b, &m, f.active, self.recovery_time, &p);
        if active != f.active {
            let kind = if active { EventKind::EnhancedBrakeOn } else { EventKind::EnhancedBrakeOff };
            self.log(&b, kind);
        }
        self.main_lane[bi].enhanced_brake_active = active;
        if f.active && !active {
            return end(self, Some(bi));
        }
        if !active && m.v >= b.v {
            return end(self, Some(bi));
        }
        f.active = active;
        self.followup = Some(f);
    }

    fn integrate(&mut self) -> Result<(), SimFault> {
        let p = self.config.params;
        let dt = self.config.dt;
        let clock = self.clock();

        // Commands from the current (pre-step) states.
        let n = self.main_lane.len();
        let mut commands = Vec::with_capacity(n);
        for i in 0..n {
            let v = &self.main_lane[i];
            let cmd = if v.enhanced_brake_active {
                clamp_accel(-p.d_prime_max, p.d_prime_max, &p)
            } else if let Some(c) = self.trail_override.filter(|(id, _)| *id == v.id).map(|(_, c)| c) {
                clamp_accel(c, p.d_max, &p)
            } else if i == 0 {
                clamp_accel(free_road_accel(v.v, &p), p.d_max, &p)
            } else {
                let lead = &self.main_lane[i - 1];
                clamp_accel(follow_law(lead.x - v.x, lead.v, v.v, v.a, &p), p.d_max, &p)
            };
            commands.push(cmd);
        }
        let merger_cmd = self.merger.as_ref().map(|m| {
            let (ai, bi) = self.neighbours(m.vehicle.x);
            let a = ai.map(|i| &self.main_lane[i]);
            let b = bi.map(|i| &self.main_lane[i]);
            m.mode.command(&m.vehicle, a, b, self.v_m0, &p, self.config.literal_eq14)
        });

        let in_window = self.in_window();
        let mut prev_x = Vec::with_capacity(n);
        for (v, cmd) in self.main_lane.iter_mut().zip(commands) {
            prev_x.push(v.x);
            v.a_cmd = cmd;
            v.a = lag_step(v.a, cmd, p.tau, dt);
            let motion = kinematic_step(v, dt, &p);
            if motion.active_time > 0.0 && motion.accel < self.min_main_accel {
                self.min_main_accel = motion.accel;
            }
            if in_window {
                self.metrics.add_sample(motion.accel, motion.active_time, v.trailing_role);
            }
            *v = motion.state;
        }
        if let (Some(m), Some(cmd)) = (self.merger.as_mut(), merger_cmd) {
            if m.phase != MergePhase::Queued {
                let v = &mut m.vehicle;
                v.a_cmd = cmd;
                v.a = lag_step(v.a, cmd, p.tau, dt);
                *v = kinematic_step(v, dt, &p).state;
            }
        }

        let next_clock = clock + dt;
        for i in 1..self.main_lane.len() {
            let (lead, foll) = (&self.main_lane[i - 1], &self.main_lane[i]);
            if foll.x >= lead.x {
                return Err(SimFault::Ordering { time: next_clock, lead: lead.id, follower: foll.id });
            }
            let gap = lead.x - foll.x - p.d;
            if gap <= 0.0 {
                return Err(SimFault::Collision { time: next_clock, lead: lead.id, follower: foll.id, gap });
            }
        }

        // Despawn from the front.
        let mut gone = 0;
        while gone < self.main_lane.len() && self.main_lane[gone].x >= self.config.despawn_x {
            gone += 1;
        }
        for (&v, &x0) in self.main_lane[..gone].iter().zip(&prev_x) {
            let frac = if v.x > x0 { ((self.config.despawn_x - x0) / (v.x - x0)).clamp(0.0, 1.0) } else { 1.0 };
            let t_out = clock + frac * dt;
            let delay = (t_out - v.spawn_time) - (self.config.despawn_x - v.spawn_x) / p.v_max;
            if v.origin == Origin::Upstream && in_window {
                self.metrics.record_delay(delay);
            }
            self.counts.despawned += 1;
            let t = t_out;
            self.events.push(Event { t, id: v.id, kind: EventKind::Despawn { delay }, x: v.x, v: v.v });
        }
        if gone > 0 {
            self.main_lane.drain(..gone);
        }
        Ok(())
    }

    pub fn result(&self) -> RunResult {
        RunResult {
            seed: self.config.seed,
            metrics: self.metrics.finalize(),
            counts: self.counts,
            on_road: self.on_road(),
            min_main_accel: self.min_main_accel,
            merge_records: self.merge_records.clone(),
            queue_wait_max: self.metrics.queue_head_waits.iter().copied().fold(0.0, f64::max),
            event_counts: self.events.counts(),
        }
    }
}

/// Build a world from `config`, run it to `t_max` and return the result
/// together with the event log.
pub fn run_simulation_with_log(config: SimConfig) -> Result<(RunResult, EventLog), RunError> {
    let mut world = World::new(config)?;
    world.run()?;
    let result = world.result();
    Ok((result, world.events))
}

pub fn run_simulation(config: SimConfig) -> Result<RunResult, RunError> {
    let config = SimConfig { record_events: false, ..config };
    let mut world = World::new(config)?;
    world.run()?;
    Ok(world.result())
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fault(#[from] SimFault),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(t_max: f64) -> SimConfig {
        SimConfig { t_max, ramp: RampDemand::Disabled, ..Default::default() }
    }

    #[test]
    fn phase_transitions() {
        use MergePhase::*;
        assert!(Queued.can_transition_to(Released));
        assert!(!Queued.can_transition_to(InRegionVerified));
        assert!(InRegionUnverified.can_transition_to(InRegionVerified));
        assert!(InRegionVerified.can_transition_to(Merged));
        assert!(!Merged.can_transition_to(Queued));
        assert!(!Released.can_transition_to(Merged));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(World::new(SimConfig { dt: 0.03, ..Default::default() }).is_err());
        assert!(World::new(SimConfig { dt: 0.2, ..Default::default() }).is_err());
        assert!(World::new(SimConfig { despawn_x: 400.0, ..Default::default() }).is_err());
        let mut c = SimConfig::default();
        c.params.v_max = 29.0;
        assert!(World::new(c).is_err());
        World::new(SimConfig { dt: 0.02, ..Default::default() }).unwrap();
    }

    #[test]
    fn equilibrium_platoon_is_invariant() {
        let p = ControlParams::default();
        let vehicles: Vec<_> = (0..8)
            .map(|i| VehicleState::new(VehicleId(0), -(i as f64) * p.equilibrium_spacing(), p.v_max, Lane::Main))
            .collect();
        let mut world = World::with_vehicles(quiet(30.0), vehicles.clone()).unwrap();
        for _ in 0..300 {
            world.step().unwrap();
        }
        let shift = p.v_max * world.clock();
        for (v, v0) in world.main_lane().iter().zip(&vehicles) {
            assert!((v.x - (v0.x + shift)).abs() < 1e-9, "{} vs {}", v.x, v0.x + shift);
            assert!((v.v - p.v_max).abs() < 1e-12);
            assert!(v.a.abs() < 1e-12);
        }
        assert!(world.metrics().sum_acc_sq < 1e-20);
        assert!(world.metrics().sum_dec_sq < 1e-20);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let r = run_simulation(SimConfig { t_max: 0.0, ..Default::default() }).unwrap();
        assert_eq!(r.metrics.merges, 0);
        assert_eq!(r.metrics.a_tot, 0.0);
        assert_eq!(r.metrics.t_ave, 0.0);
    }

    #[test]
    fn unperturbed_stream_has_no_delay() {
        let r = run_simulation(quiet(600.0)).unwrap();
        assert_eq!(r.metrics.merges, 0);
        assert!(r.metrics.delayed_vehicles > 100);
        assert!(r.metrics.t_ave.abs() < 1e-9, "{}", r.metrics.t_ave);
        assert_eq!(r.metrics.a_tot, 0.0);
        assert_eq!(r.metrics.d_tot, 0.0);
    }

    #[test]
    fn spawns_follow_the_platoon_stream() {
        let config = quiet(500.0);
        let mut world = World::new(config).unwrap();
        world.run().unwrap();
        let expected = PlatoonStream::new(config.seed, config.traffic, config.params)
            .take_while(|e| e.nominal_time <= 500.0 - config.dt + 1e-9)
            .count() as u64;
        assert_eq!(world.counts().spawned, expected);
    }

    #[test]
    fn vehicles_are_conserved_every_step() {
        let mut world = World::new(SimConfig { t_max: 400.0, ..Default::default() }).unwrap();
        for _ in 0..4000 {
            world.step().unwrap();
            let c = world.counts();
            assert_eq!(c.spawned, world.on_road() + c.despawned + c.failed);
        }
    }

    #[test]
    fn poisson_ramp_demand_runs() {
        let config = SimConfig { t_max: 600.0, ramp: RampDemand::Poisson { rate: 0.02 }, ..Default::default() };
        let r = run_simulation(config).unwrap();
        assert!(r.metrics.merges > 0);
        assert!(r.metrics.merge_rate <= 0.05);
    }
}
