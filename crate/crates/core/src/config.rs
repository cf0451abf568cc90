//! TOML configuration files. Every key is optional; omitted keys keep the
//! defaults, unknown keys are rejected.
//!
//! ```toml
//! [params]
//! T_v = 2.5
//! v_max = 38.0
//!
//! [traffic]
//! N_plat = 6
//! L_plat = 5
//!
//! [sim]
//! t_max = 2000.0
//! seed = 7
//! ramp = "saturated"          # or "disabled", or { poisson = { rate = 0.05 } }
//!
//! [sweep]                     # only read by `parse_plan`
//! variable = "T_v"            # or "v_max"
//! values = [0.0, 2.5]
//! replications = 5
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::engine::{RampDemand, SimConfig};
use crate::error::ConfigError;
use crate::experiment::{ExperimentPlan, SweepVariable};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    params: ParamsFile,
    traffic: TrafficFile,
    sim: SimFile,
    sweep: Option<SweepFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParamsFile {
    alpha: Option<f64>,
    h: Option<f64>,
    k: Option<f64>,
    xi: Option<f64>,
    tau: Option<f64>,
    #[serde(rename = "D", alias = "d")]
    d: Option<f64>,
    d_max: Option<f64>,
    a_max: Option<f64>,
    v_max: Option<f64>,
    #[serde(rename = "L", alias = "l")]
    l: Option<f64>,
    x_g_dist: Option<f64>,
    #[serde(rename = "T_v", alias = "t_v")]
    t_v: Option<f64>,
    d_prime_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrafficFile {
    #[serde(rename = "N_plat", alias = "n_plat")]
    n_plat: Option<u32>,
    #[serde(rename = "L_plat", alias = "l_plat")]
    l_plat: Option<u32>,
    spawn_x: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimFile {
    t_max: Option<f64>,
    dt: Option<f64>,
    despawn_x: Option<f64>,
    seed: Option<u64>,
    ramp: Option<RampDemand>,
    enhanced_braking: Option<bool>,
    literal_eq14: Option<bool>,
    warmup: Option<f64>,
    record_events: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    variable: SweepVariable,
    values: Option<Vec<f64>>,
    replications: Option<usize>,
    workers: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigFile {
    fn into_sim_config(self) -> (SimConfig, Option<SweepFile>) {
        let mut c = SimConfig::default();
        let p = &mut c.params;
        let f = self.params;
        set(&mut p.alpha, f.alpha);
        set(&mut p.h, f.h);
        set(&mut p.k, f.k);
        set(&mut p.xi, f.xi);
        set(&mut p.tau, f.tau);
        set(&mut p.d, f.d);
        set(&mut p.d_max, f.d_max);
        set(&mut p.a_max, f.a_max);
        set(&mut p.v_max, f.v_max);
        set(&mut p.l, f.l);
        set(&mut p.x_g_dist, f.x_g_dist);
        set(&mut p.t_v, f.t_v);
        p.d_prime_max = f.d_prime_max.unwrap_or(1.5 * p.d_max);

        set(&mut c.traffic.n_plat, self.traffic.n_plat);
        set(&mut c.traffic.l_plat, self.traffic.l_plat);
        set(&mut c.traffic.spawn_x, self.traffic.spawn_x);

        let s = self.sim;
        set(&mut c.t_max, s.t_max);
        set(&mut c.dt, s.dt);
        set(&mut c.despawn_x, s.despawn_x);
        set(&mut c.seed, s.seed);
        set(&mut c.ramp, s.ramp);
        set(&mut c.enhanced_braking, s.enhanced_braking);
        set(&mut c.literal_eq14, s.literal_eq14);
        set(&mut c.record_events, s.record_events);
        c.warmup = s.warmup;
        (c, self.sweep)
    }
}

fn parse_file(text: &str) -> Result<ConfigFile, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Parse a simulation config; a `[sweep]` table, if present, is ignored.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let (config, _) = parse_file(text)?.into_sim_config();
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    parse_config_str(&read(path.as_ref())?)
}

/// Parse an experiment plan. Without a `[sweep]` table the plan is a
/// desk-scale T_v sweep over the default grid.
pub fn parse_plan_str(text: &str) -> Result<ExperimentPlan, ConfigError> {
    let (config, sweep) = parse_file(text)?.into_sim_config();
    config.validate()?;
    let mut plan = match &sweep {
        Some(s) => ExperimentPlan::desk(config, s.variable),
        None => ExperimentPlan::desk(config, SweepVariable::TV),
    };
    if let Some(s) = sweep {
        set(&mut plan.values, s.values);
        set(&mut plan.replications, s.replications);
        set(&mut plan.workers, s.workers);
    }
    plan.validate()?;
    Ok(plan)
}

pub fn parse_plan(path: impl AsRef<Path>) -> Result<ExperimentPlan, ConfigError> {
    parse_plan_str(&read(path.as_ref())?)
}
