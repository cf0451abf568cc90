//! Stochastic platoon stream for the main lane and its analytic mean flow.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::params::ControlParams;

/// Default upstream injection point, m.
pub const DEFAULT_SPAWN_X: f64 = -1500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficGenConfig {
    /// Upper bound on the number of gaps inside a platoon.
    pub n_plat: u32,
    /// Upper bound on the platoon separation multiplier.
    pub l_plat: u32,
    /// Injection position, m.
    pub spawn_x: f64,
}

impl Default for TrafficGenConfig {
    fn default() -> Self {
        Self { n_plat: 6, l_plat: 5, spawn_x: DEFAULT_SPAWN_X }
    }
}

impl TrafficGenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_plat < 2 {
            return Err(ConfigError::invalid("N_plat", self.n_plat as f64, "must be >= 2"));
        }
        if self.l_plat < 1 {
            return Err(ConfigError::invalid("L_plat", self.l_plat as f64, "must be >= 1"));
        }
        if !self.spawn_x.is_finite() || self.spawn_x >= 0.0 {
            return Err(ConfigError::invalid("spawn_x", self.spawn_x, "must be upstream of x = 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatoonSpec {
    pub n_vehicles: u32,
    /// Distance from the last vehicle of the previous platoon to this
    /// platoon's first vehicle, front bumper to front bumper.
    pub separation_from_prev: f64,
}

/// Number of gaps for a uniform draw `u` in `[0, 1)`: `max(2, floor(1 + u N))`.
pub fn platoon_gaps_from_uniform(u: f64, n_plat: u32) -> u32 {
    ((1.0 + u * n_plat as f64).trunc() as u32).max(2).min(n_plat)
}

/// Platoon size (gaps + 1) drawn from `rng`.
pub fn sample_platoon_size<R: Rng + ?Sized>(rng: &mut R, n_plat: u32) -> u32 {
    platoon_gaps_from_uniform(rng.gen::<f64>(), n_plat) + 1
}

/// Separation for a uniform draw `u`: `max(1, u L) (h v_max + D)`.
pub fn separation_from_uniform(u: f64, l_plat: u32, p: &ControlParams) -> f64 {
    (u * l_plat as f64).max(1.0) * p.equilibrium_spacing()
}

pub fn sample_separation<R: Rng + ?Sized>(rng: &mut R, l_plat: u32, p: &ControlParams) -> f64 {
    separation_from_uniform(rng.gen::<f64>(), l_plat, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFlow {
    /// Vehicles per second.
    pub flow: f64,
    pub mean_n_gap: f64,
    pub mean_l_sep: f64,
}

impl MeanFlow {
    pub fn per_hour(&self) -> f64 {
        self.flow * 3600.0
    }
}

/// Expected incoming flow of the platoon stream.
pub fn mean_flow(n_plat: u32, l_plat: u32, p: &ControlParams) -> MeanFlow {
    let n = n_plat as f64;
    let l = l_plat as f64;
    let spacing = p.equilibrium_spacing();
    let mean_n_gap = (n + 1.0) / 2.0 + 1.0 / n;
    let mean_l_sep = ((l * l - 1.0) / (2.0 * l) + 1.0 / l) * spacing;
    let flow = (mean_n_gap + 1.0) * p.v_max / (mean_l_sep + mean_n_gap * spacing);
    MeanFlow { flow, mean_n_gap, mean_l_sep }
}

/// Flow of an unbroken stream at equilibrium spacing, vehicles per second.
pub fn max_flow(p: &ControlParams) -> f64 {
    p.v_max / p.equilibrium_spacing()
}

/// One scheduled injection at the upstream boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpawnEvent {
    /// Time at which the vehicle passes `spawn_x` in an unimpeded stream.
    pub nominal_time: f64,
    pub platoon: u64,
    pub index_in_platoon: u32,
}

/// Endless stream of spawn events. Platoons travel at `v_max` with
/// equilibrium spacing inside a platoon and a sampled separation between
/// platoons. Each platoon draws its size, then its separation, from a
/// ChaCha8 stream, so a seed pins the sequence on every platform.
#[derive(Debug, Clone)]
pub struct PlatoonStream {
    rng: ChaCha8Rng,
    config: TrafficGenConfig,
    params: ControlParams,
    platoon: u64,
    current: PlatoonSpec,
    index: u32,
    next_time: f64,
}

impl PlatoonStream {
    pub fn new(seed: u64, config: TrafficGenConfig, params: ControlParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let current = Self::draw(&mut rng, &config, &params);
        Self { rng, config, params, platoon: 0, current, index: 0, next_time: 0.0 }
    }

    fn draw(rng: &mut ChaCha8Rng, config: &TrafficGenConfig, p: &ControlParams) -> PlatoonSpec {
        let n_vehicles = sample_platoon_size(rng, config.n_plat);
        let separation_from_prev = sample_separation(rng, config.l_plat, p);
        PlatoonSpec { n_vehicles, separation_from_prev }
    }

    pub fn current_platoon(&self) -> PlatoonSpec {
        self.current
    }

    /// Time of the next event without consuming it.
    pub fn peek_time(&self) -> f64 {
        self.next_time
    }
}

impl Iterator for PlatoonStream {
    type Item = SpawnEvent;

    fn next(&mut self) -> Option<SpawnEvent> {
        let event = SpawnEvent { nominal_time: self.next_time, platoon: self.platoon, index_in_platoon: self.index };
        self.index += 1;
        let gap = if self.index < self.current.n_vehicles {
            self.params.equilibrium_spacing()
        } else {
            self.current = Self::draw(&mut self.rng, &self.config, &self.params);
            self.platoon += 1;
            self.index = 0;
            self.current.separation_from_prev
        };
        self.next_time += gap / self.params.v_max;
        Some(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn platoon_size_examples() {
        assert_eq!(platoon_gaps_from_uniform(0.0, 6) + 1, 3);
        assert_eq!(platoon_gaps_from_uniform(0.999, 6) + 1, 7);
        for u in [0.0, 0.3, 0.5, 0.99] {
            assert_eq!(platoon_gaps_from_uniform(u, 2) + 1, 3);
        }
    }

    #[test]
    fn separation_examples() {
        let p = ControlParams::default();
        assert_abs_diff_eq!(separation_from_uniform(0.0, 5, &p), 45.5, epsilon = 1e-12);
        assert_abs_diff_eq!(separation_from_uniform(1.0 - 1e-12, 5, &p), 227.5, epsilon = 1e-6);
        assert_abs_diff_eq!(separation_from_uniform(0.8, 1, &p), 45.5, epsilon = 1e-12);
    }

    #[test]
    fn analytic_flow_values() {
        let p = ControlParams::default();
        let f = mean_flow(6, 5, &p);
        assert_abs_diff_eq!(f.mean_n_gap, 3.5 + 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.mean_l_sep, 2.6 * 45.5, epsilon = 1e-12);
        assert!((f.per_hour() - 2239.0).abs() < 1.0, "{}", f.per_hour());
        assert!((max_flow(&p) * 3600.0 - 3007.0).abs() < 1.0);
        // Quoted as 0.61 vehicles/s; the exact value is 0.622.
        assert!((f.flow - 0.61).abs() < 0.015, "{}", f.flow);
    }

    #[test]
    fn stream_starts_immediately_and_uses_equilibrium_spacing() {
        let p = ControlParams::default();
        let mut s = PlatoonStream::new(1, TrafficGenConfig::default(), p);
        let n = s.current_platoon().n_vehicles;
        let first = s.next().unwrap();
        assert_eq!(first.nominal_time, 0.0);
        let second = s.next().unwrap();
        assert_eq!(second.platoon, 0);
        assert_abs_diff_eq!(second.nominal_time, 45.5 / 38.0, epsilon = 1e-12);
        let rest: Vec<_> = s.by_ref().take(n as usize - 2).collect();
        assert!(rest.iter().all(|e| e.platoon == 0));
        assert_eq!(s.next().unwrap().platoon, 1);
    }

    #[test]
    fn stream_is_deterministic() {
        let p = ControlParams::default();
        let a: Vec<_> = PlatoonStream::new(42, TrafficGenConfig::default(), p).take(500).collect();
        let b: Vec<_> = PlatoonStream::new(42, TrafficGenConfig::default(), p).take(500).collect();
        let c: Vec<_> = PlatoonStream::new(43, TrafficGenConfig::default(), p).take(500).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn validation() {
        assert!(TrafficGenConfig { n_plat: 1, ..Default::default() }.validate().is_err());
        assert!(TrafficGenConfig { l_plat: 0, ..Default::default() }.validate().is_err());
        TrafficGenConfig::default().validate().unwrap();
    }
}
