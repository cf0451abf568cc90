//! Seeded replications and one-dimensional parameter sweeps.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_simulation, RunError, SimConfig};
use crate::error::{ConfigError, ExperimentError};
use crate::merge::ramp_entry_speed;
use crate::metrics::{AggregateMetrics, Metrics};

pub const TV_GRID: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
pub const VMAX_GRID: [f64; 6] = [33.0, 34.0, 35.0, 36.0, 37.0, 38.0];

pub const DESK_REPLICATIONS: usize = 5;
pub const DESK_T_MAX: f64 = 2000.0;
pub const FULL_REPLICATIONS: usize = 25;
pub const FULL_T_MAX: f64 = 20_000.0;

pub const CSV_COLUMNS: [&str; 17] = [
    "kind",
    "seed",
    "T_v",
    "v_max",
    "L_plat",
    "N_plat",
    "a_tot",
    "d_tot",
    "t_ave",
    "merge_rate",
    "mean_queue_wait",
    "failures",
    "a_tot_se",
    "d_tot_se",
    "t_ave_se",
    "merge_rate_se",
    "mean_queue_wait_se",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "T_v", alias = "tv", alias = "t_v")]
    TV,
    #[serde(rename = "v_max", alias = "vmax")]
    VMax,
}

impl SweepVariable {
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepVariable::TV => TV_GRID.to_vec(),
            SweepVariable::VMax => VMAX_GRID.to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::TV => "T_v",
            SweepVariable::VMax => "v_max",
        }
    }

    pub fn apply(self, config: &mut SimConfig, value: f64) {
        match self {
            SweepVariable::TV => config.params.t_v = value,
            SweepVariable::VMax => config.params.v_max = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub base: SimConfig,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub replications: usize,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn desk(base: SimConfig, variable: SweepVariable) -> Self {
        Self {
            base: SimConfig { t_max: DESK_T_MAX, ..base },
            variable,
            values: variable.default_grid(),
            replications: DESK_REPLICATIONS,
            workers: 0,
            out: None,
        }
    }

    pub fn full_scale(mut self) -> Self {
        self.base.t_max = FULL_T_MAX;
        self.replications = FULL_REPLICATIONS;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications < 1 {
            return Err(ConfigError::invalid("replications", self.replications as f64, "must be >= 1"));
        }
        if self.values.is_empty() {
            return Err(ConfigError::invalid("values", 0.0, "sweep needs at least one value"));
        }
        for &value in &self.values {
            let mut c = self.base;
            self.variable.apply(&mut c, value);
            if self.variable == SweepVariable::VMax && value < ramp_entry_speed(&c.params) {
                return Err(ConfigError::invalid("v_max", value, "below the ramp entry speed"));
            }
            c.validate()?;
        }
        Ok(())
    }

    /// Every `(value, seed)` job in output order. Replication `i` uses seed
    /// `base.seed + i`.
    pub fn jobs(&self) -> Vec<(f64, SimConfig)> {
        let mut out = Vec::with_capacity(self.values.len() * self.replications);
        for &value in &self.values {
            for rep in 0..self.replications {
                let mut c = self.base;
                self.variable.apply(&mut c, value);
                c.seed = self.base.seed.wrapping_add(rep as u64);
                c.record_events = false;
                out.push((value, c));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub seed: u64,
    pub t_v: f64,
    pub v_max: f64,
    pub l_plat: u32,
    pub n_plat: u32,
    pub metrics: Metrics,
    pub min_main_accel: f64,
    pub min_commit_s_a: f64,
    pub min_commit_s_b: f64,
    pub min_commit_lead_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub value: f64,
    pub t_v: f64,
    pub v_max: f64,
    pub l_plat: u32,
    pub n_plat: u32,
    pub aggregate: AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub base: SimConfig,
    pub replications: usize,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Scientific notation with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    format!("{:.5e}", x)
}

impl SweepTable {
    pub fn aggregate_for(&self, value: f64) -> Option<&AggregateMetrics> {
        self.aggregates.iter().find(|a| a.value == value).map(|a| &a.aggregate)
    }

    /// Metadata comment block followed by run rows then aggregate rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        writeln!(out, "# hov-merge {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# sweep: {}", self.variable.name())?;
        writeln!(out, "# base_seed: {}", self.base.seed)?;
        writeln!(out, "# replications: {}", self.replications)?;
        let echo = serde_json::to_string(&self.base).map_err(|e| std::io::Error::other(e.to_string()))?;
        writeln!(out, "# config: {echo}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                "run".to_string(),
                r.seed.to_string(),
                fmt_sig6(r.t_v),
                fmt_sig6(r.v_max),
                r.l_plat.to_string(),
                r.n_plat.to_string(),
                fmt_sig6(m.a_tot),
                fmt_sig6(m.d_tot),
                fmt_sig6(m.t_ave),
                fmt_sig6(m.merge_rate),
                fmt_sig6(m.mean_queue_wait),
                m.failures.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        for a in &self.aggregates {
            let g = &a.aggregate;
            w.write_record([
                "mean".to_string(),
                String::new(),
                fmt_sig6(a.t_v),
                fmt_sig6(a.v_max),
                a.l_plat.to_string(),
                a.n_plat.to_string(),
                fmt_sig6(g.a_tot.mean),
                fmt_sig6(g.d_tot.mean),
                fmt_sig6(g.t_ave.mean),
                fmt_sig6(g.merge_rate.mean),
                fmt_sig6(g.mean_queue_wait.mean),
                g.failures.to_string(),
                fmt_sig6(g.a_tot.se),
                fmt_sig6(g.d_tot.se),
                fmt_sig6(g.t_ave.se),
                fmt_sig6(g.merge_rate.se),
                fmt_sig6(g.mean_queue_wait.se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One parsed CSV line of a results file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRecord {
    pub kind: String,
    pub seed: Option<u64>,
    #[serde(rename = "T_v")]
    pub t_v: f64,
    pub v_max: f64,
    #[serde(rename = "L_plat")]
    pub l_plat: u32,
    #[serde(rename = "N_plat")]
    pub n_plat: u32,
    pub a_tot: f64,
    pub d_tot: f64,
    pub t_ave: f64,
    pub merge_rate: f64,
    pub mean_queue_wait: f64,
    pub failures: u64,
    pub a_tot_se: Option<f64>,
    pub d_tot_se: Option<f64>,
    pub t_ave_se: Option<f64>,
    pub merge_rate_se: Option<f64>,
    pub mean_queue_wait_se: Option<f64>,
}

pub fn read_csv(text: &str) -> Result<Vec<CsvRecord>, csv::Error> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes()).deserialize().collect()
}

fn min_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

/// Run every job of `plan`, in parallel, and assemble the ordered table.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepTable, ExperimentError> {
    plan.validate()?;
    let jobs = plan.jobs();
    let execute = || -> Result<Vec<RunRow>, ExperimentError> {
        jobs.par_iter()
            .map(|(value, c)| {
                let result = run_simulation(*c).map_err(|e| match e {
                    RunError::Config(e) => ExperimentError::Config(e),
                    RunError::Fault(fault) => ExperimentError::Fault {
                        seed: c.seed,
                        context: format!(
                            "{} = {value}, T_v = {}, v_max = {}",
                            plan.variable.name(),
                            c.params.t_v,
                            c.params.v_max
                        ),
                        fault,
                    },
                })?;
                Ok(RunRow {
                    seed: c.seed,
                    t_v: c.params.t_v,
                    v_max: c.params.v_max,
                    l_plat: c.traffic.l_plat,
                    n_plat: c.traffic.n_plat,
                    metrics: result.metrics,
                    min_main_accel: result.min_main_accel,
                    min_commit_s_a: min_of(result.merge_records.iter().map(|r| r.s_a)),
                    min_commit_s_b: min_of(result.merge_records.iter().map(|r| r.s_b)),
                    min_commit_lead_gap: min_of(result.merge_records.iter().map(|r| r.lead_gap)),
                })
            })
            .collect()
    };
    let rows = if plan.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(execute)?
    } else {
        execute()?
    };

    let aggregates = plan
        .values
        .iter()
        .zip(rows.chunks(plan.replications))
        .map(|(&value, chunk)| {
            let metrics: Vec<Metrics> = chunk.iter().map(|r| r.metrics).collect();
            AggregateRow {
                value,
                t_v: chunk[0].t_v,
                v_max: chunk[0].v_max,
                l_plat: chunk[0].l_plat,
                n_plat: chunk[0].n_plat,
                aggregate: AggregateMetrics::from_runs(&metrics),
            }
        })
        .collect();

    Ok(SweepTable { variable: plan.variable, base: plan.base, replications: plan.replications, rows, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimConfig;

    fn tiny(values: Vec<f64>, reps: usize) -> ExperimentPlan {
        let mut plan = ExperimentPlan::desk(SimConfig::default(), SweepVariable::TV);
        plan.base.t_max = 300.0;
        plan.values = values;
        plan.replications = reps;
        plan
    }

    #[test]
    fn one_value_one_rep_gives_two_rows() {
        let table = run_sweep(&tiny(vec![2.5], 1)).unwrap();
        let records = read_csv(&table.to_csv_string()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].kind, "run");
        assert_eq!(records[1].kind, "mean");
        assert_eq!(records[1].a_tot, records[0].a_tot);
    }

    #[test]
    fn jobs_are_ordered_by_value_then_seed() {
        let mut plan = tiny(vec![0.0, 1.0], 3);
        plan.base.seed = 10;
        let jobs = plan.jobs();
        let keys: Vec<_> = jobs.iter().map(|(v, c)| (*v, c.seed)).collect();
        assert_eq!(keys, vec![(0.0, 10), (0.0, 11), (0.0, 12), (1.0, 10), (1.0, 11), (1.0, 12)]);
    }

    #[test]
    fn sig6_formatting_round_trips() {
        for x in [0.0, 1.0, 0.0123456789, 12345.678, 3.0e-9] {
            let s = fmt_sig6(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(fmt_sig6(back), s);
            if x != 0.0 {
                assert!((back / x - 1.0).abs() < 5e-6);
            }
        }
        assert_eq!(fmt_sig6(0.0390123), "3.90123e-2");
    }

    #[test]
    fn validation() {
        assert!(tiny(vec![], 1).validate().is_err());
        assert!(tiny(vec![1.0], 0).validate().is_err());
        let mut p = tiny(vec![29.0], 1);
        p.variable = SweepVariable::VMax;
        assert!(p.validate().is_err());
    }

    #[test]
    fn full_scale_restores_long_runs() {
        let p = ExperimentPlan::desk(SimConfig::default(), SweepVariable::TV).full_scale();
        assert_eq!((p.replications, p.base.t_max), (25, 20_000.0));
    }
}
