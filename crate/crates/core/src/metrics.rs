//! Performance measures: acceleration/deceleration measures per merge, mean
//! trip delay, merge rate and queue waits.

use serde::{Deserialize, Serialize};

/// Running sums for one simulation window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    /// Sum over main-lane vehicles of the integral of a^2 while a > 0.
    pub sum_acc_sq: f64,
    /// Sum over main-lane vehicles of the integral of a^2 while a < 0.
    pub sum_dec_sq: f64,
    /// Part of `sum_dec_sq` contributed by vehicles that acted as a trailing
    /// vehicle of a merge gap.
    pub sum_dec_sq_trailing: f64,
    pub merge_times: Vec<f64>,
    pub delays: Vec<f64>,
    pub queue_head_waits: Vec<f64>,
    pub failures: u64,
    /// Length of the measurement window, s.
    pub t_max: f64,
}

impl MetricsAccumulator {
    pub fn new(t_max: f64) -> Self {
        Self { t_max, ..Default::default() }
    }

    pub fn merges(&self) -> usize {
        self.merge_times.len()
    }

    /// Add one tick of realised accelerations, each acting for `dt`.
    pub fn accumulate(&mut self, accelerations: &[f64], dt: f64) {
        for &a in accelerations {
            self.add_sample(a, dt, false);
        }
    }

    /// Add an acceleration that acted for `duration` seconds.
    pub fn add_sample(&mut self, a: f64, duration: f64, trailing: bool) {
        let sq = a * a * duration;
        if a > 0.0 {
            self.sum_acc_sq += sq;
        } else if a < 0.0 {
            self.sum_dec_sq += sq;
            if trailing {
                self.sum_dec_sq_trailing += sq;
            }
        }
    }

    pub fn record_merge(&mut self, time: f64) {
        self.merge_times.push(time);
    }

    pub fn record_delay(&mut self, delay: f64) {
        self.delays.push(delay);
    }

    pub fn record_queue_wait(&mut self, wait: f64) {
        self.queue_head_waits.push(wait);
    }

    pub fn record_failure(&mut self) {
        self.failures += 1;
    }

    pub fn finalize(&self) -> Metrics {
        let m = self.merges();
        let norm = m as f64 * self.t_max;
        let measure = |sum: f64| if norm > 0.0 { (sum / norm).sqrt() } else { 0.0 };
        Metrics {
            a_tot: measure(self.sum_acc_sq),
            d_tot: measure(self.sum_dec_sq),
            d_tot_excluding_trailing: measure(self.sum_dec_sq - self.sum_dec_sq_trailing),
            t_ave: mean(&self.delays),
            merge_rate: if self.t_max > 0.0 { m as f64 / self.t_max } else { 0.0 },
            mean_queue_wait: mean(&self.queue_head_waits),
            merges: m as u64,
            failures: self.failures,
            delayed_vehicles: self.delays.len() as u64,
            window: self.t_max,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Finalised measures of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub a_tot: f64,
    pub d_tot: f64,
    pub d_tot_excluding_trailing: f64,
    pub t_ave: f64,
    pub merge_rate: f64,
    pub mean_queue_wait: f64,
    pub merges: u64,
    pub failures: u64,
    pub delayed_vehicles: u64,
    pub window: f64,
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, se: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt() }
    }
}

/// Per-seed measures averaged across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub runs: usize,
    pub a_tot: Estimate,
    pub d_tot: Estimate,
    pub t_ave: Estimate,
    pub merge_rate: Estimate,
    pub mean_queue_wait: Estimate,
    pub failures: u64,
}

impl AggregateMetrics {
    pub fn from_runs(runs: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: runs.len(),
            a_tot: col(|m| m.a_tot),
            d_tot: col(|m| m.d_tot),
            t_ave: col(|m| m.t_ave),
            merge_rate: col(|m| m.merge_rate),
            mean_queue_wait: col(|m| m.mean_queue_wait),
            failures: runs.iter().map(|m| m.failures).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cruising_adds_nothing() {
        let mut acc = MetricsAccumulator::new(10.0);
        acc.accumulate(&[0.0, 0.0, 0.0], 0.1);
        assert_eq!(acc.sum_acc_sq, 0.0);
        assert_eq!(acc.sum_dec_sq, 0.0);
    }

    #[test]
    fn heaviside_split() {
        let mut acc = MetricsAccumulator::new(10.0);
        acc.accumulate(&[3.0], 0.1);
        assert_abs_diff_eq!(acc.sum_acc_sq, 0.9, epsilon = 1e-12);
        acc.accumulate(&[-2.0], 0.1);
        assert_abs_diff_eq!(acc.sum_dec_sq, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(acc.sum_acc_sq, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn single_climb_contribution() {
        // Constant a_max climb from 28 to 38 m/s.
        let mut acc = MetricsAccumulator::new(2.0e4);
        let steps = (10.0 / 3.0 / 0.1f64).round() as usize;
        for _ in 0..steps {
            acc.accumulate(&[3.0], 10.0 / 3.0 / steps as f64);
        }
        acc.record_merge(100.0);
        let m = acc.finalize();
        assert_abs_diff_eq!(m.a_tot, (3.0f64 * 10.0 / 2.0e4).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.a_tot, 0.039, epsilon = 0.0005);
    }

    #[test]
    fn no_events_is_all_zero() {
        let m = MetricsAccumulator::new(100.0).finalize();
        assert_eq!((m.a_tot, m.d_tot, m.t_ave, m.merge_rate, m.mean_queue_wait), (0.0, 0.0, 0.0, 0.0, 0.0));
        let m = MetricsAccumulator::new(0.0).finalize();
        assert_eq!(m.merge_rate, 0.0);
    }

    #[test]
    fn concatenated_replicas_keep_the_measure() {
        // Two identical runs pooled: sums and merge count double over the
        // same per-run window.
        let mut one = MetricsAccumulator::new(500.0);
        one.accumulate(&[1.5, -0.7], 0.3);
        one.record_merge(1.0);
        let mut two = one.clone();
        two.sum_acc_sq *= 2.0;
        two.sum_dec_sq *= 2.0;
        two.record_merge(2.0);
        assert_abs_diff_eq!(one.finalize().a_tot, two.finalize().a_tot, epsilon = 1e-15);
        assert_abs_diff_eq!(one.finalize().d_tot, two.finalize().d_tot, epsilon = 1e-15);
    }

    #[test]
    fn riemann_sums_are_refinement_invariant() {
        let mut coarse = MetricsAccumulator::new(1.0);
        let mut fine = MetricsAccumulator::new(1.0);
        for &a in &[1.0, -2.0, 0.5] {
            coarse.accumulate(&[a], 0.1);
            for _ in 0..10 {
                fine.accumulate(&[a], 0.01);
            }
        }
        assert_abs_diff_eq!(coarse.sum_acc_sq, fine.sum_acc_sq, epsilon = 1e-12);
        assert_abs_diff_eq!(coarse.sum_dec_sq, fine.sum_dec_sq, epsilon = 1e-12);
    }

    #[test]
    fn merge_rate_times_window_is_count() {
        let mut acc = MetricsAccumulator::new(1234.5);
        for t in 0..7 {
            acc.record_merge(t as f64);
        }
        let m = acc.finalize();
        assert_eq!((m.merge_rate * acc.t_max).round() as u64, m.merges);
        assert_eq!(m.merges, 7);
    }

    #[test]
    fn estimate_mean_and_se() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(e.mean, 2.5, epsilon = 1e-15);
        // sample sd = sqrt(5/3), se = sd / 2
        assert_abs_diff_eq!(e.se, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(Estimate::from_samples(&[7.0]).se, 0.0);
    }
}
