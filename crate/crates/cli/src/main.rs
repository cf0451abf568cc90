use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hov_merge::experiment::{run_sweep, ExperimentPlan, SweepVariable};
use hov_merge::linear::{peak_deceleration, LinearSpectrum};
use hov_merge::traffic::{max_flow, mean_flow};
use hov_merge::{parse_config, parse_plan, run_simulation_with_log, SimConfig};

#[derive(Parser)]
#[command(name = "hovmerge", version, about = "On-ramp merging into a dedicated platoon lane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation and print its result as JSON.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the event log (one JSON record per line).
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Sweep T_v or v_max over seeded replications and emit CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep variable (default: the config's `[sweep]` table, else T_v).
        #[arg(long, value_enum)]
        var: Option<Var>,
        /// Comma-separated sweep values (default grid otherwise).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        reps: Option<usize>,
        /// 25 replications of 20000 s.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print eigenvalues, peak-deceleration prediction and recovery time.
    Analysis {
        #[command(flatten)]
        common: Common,
        /// Closing speed for the peak prediction (default v_max - 28).
        #[arg(long)]
        delta_v: Option<f64>,
    },
    /// Analytic mean and maximum incoming flow.
    Flow {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Var {
    Tv,
    Vmax,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tv: Option<f64>,
    #[arg(long)]
    vmax: Option<f64>,
    #[arg(long)]
    lplat: Option<u32>,
    #[arg(long)]
    nplat: Option<u32>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn apply(&self, c: &mut SimConfig) {
        if let Some(v) = self.tv {
            c.params.t_v = v;
        }
        if let Some(v) = self.vmax {
            c.params.v_max = v;
        }
        if let Some(v) = self.lplat {
            c.traffic.l_plat = v;
        }
        if let Some(v) = self.nplat {
            c.traffic.n_plat = v;
        }
        if let Some(v) = self.tmax {
            c.t_max = v;
        }
        if let Some(v) = self.dt {
            c.dt = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
    }

    fn sim_config(&self) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(path) => parse_config(path).with_context(|| format!("loading {}", path.display()))?,
            None => SimConfig::default(),
        };
        self.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => {
                Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
            }
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, events } => {
            let config = common.sim_config()?;
            let (result, log) = run_simulation_with_log(config)?;
            let mut out = common.output()?;
            serde_json::to_writer_pretty(&mut out, &serde_json::json!({ "config": config, "result": result }))?;
            writeln!(out)?;
            if let Some(path) = events {
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                log.write_jsonl(BufWriter::new(file))?;
            }
        }
        Command::Sweep { common, var, values, reps, paper_scale, workers } => {
            let variable = var.map(|v| match v {
                Var::Tv => SweepVariable::TV,
                Var::Vmax => SweepVariable::VMax,
            });
            let mut plan = match &common.config {
                Some(path) => parse_plan(path).with_context(|| format!("loading {}", path.display()))?,
                None => ExperimentPlan::desk(SimConfig::default(), variable.unwrap_or(SweepVariable::TV)),
            };
            if let Some(variable) = variable.filter(|v| *v != plan.variable) {
                plan.variable = variable;
                plan.values = variable.default_grid();
            }
            if paper_scale {
                plan = plan.full_scale();
            }
            common.apply(&mut plan.base);
            if let Some(v) = values {
                plan.values = v;
            }
            if let Some(r) = reps {
                plan.replications = r;
            }
            if let Some(w) = workers {
                plan.workers = w;
            }
            plan.out = common.out.clone();
            let table = run_sweep(&plan)?;
            table.write_csv(common.output()?)?;
        }
        Command::Analysis { common, delta_v } => {
            let config = common.sim_config()?;
            let p = config.params;
            let spectrum = LinearSpectrum::new(&p)?;
            let dv = delta_v.unwrap_or(p.v_max - 28.0);
            let (decel, theta) = peak_deceleration(dv, &p)?;
            let mut out = common.output()?;
            writeln!(out, "lambda1 = {:.6} 1/s", spectrum.lambda1)?;
            writeln!(out, "lambda2 = {:.6} 1/s", spectrum.lambda2)?;
            writeln!(out, "theta_peak = {:.6} s", spectrum.theta_peak)?;
            writeln!(out, "peak_factor = {:.6} 1/s", spectrum.peak_factor)?;
            writeln!(out, "recovery_time = {:.6} s", spectrum.t_recover)?;
            writeln!(out, "delta_v = {dv:.6} m/s")?;
            writeln!(out, "peak_deceleration = {decel:.6} m/s^2 at {theta:.6} s")?;
            writeln!(out, "d_max = {:.6} m/s^2, d_prime_max = {:.6} m/s^2", p.d_max, p.d_prime_max)?;
        }
        Command::Flow { common } => {
            let config = common.sim_config()?;
            let p = config.params;
            let f = mean_flow(config.traffic.n_plat, config.traffic.l_plat, &p);
            let mut out = common.output()?;
            writeln!(
                out,
                "N_plat = {}, L_plat = {}, v_max = {} m/s",
                config.traffic.n_plat, config.traffic.l_plat, p.v_max
            )?;
            writeln!(out, "mean_n_gap = {:.6}", f.mean_n_gap)?;
            writeln!(out, "mean_l_sep = {:.6} m", f.mean_l_sep)?;
            writeln!(out, "mean_flow = {:.6} vehicles/s", f.flow)?;
            writeln!(out, "mean_flow_per_hour = {:.2} vehicles/h", f.per_hour())?;
            writeln!(out, "max_flow_per_hour = {:.2} vehicles/h", max_flow(&p) * 3600.0)?;
        }
    }
    Ok(())
}
