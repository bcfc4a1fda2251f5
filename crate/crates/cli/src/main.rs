use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use omc_cli::{
    cmd_noise_report, cmd_oracle, cmd_simulate, cmd_sweep, cmd_validate, load_config, thread_count,
    DEFAULT_SWEEP_PERIODS, DEFAULT_SWEEP_PULSES,
};

/// Odor-based molecular communication simulator.
#[derive(Debug, Parser)]
#[command(name = "omc-sim", version, about)]
struct Cli {
    /// Scenario JSON; the bounded laboratory preset when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for noise and particle streams; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Concentration, clean and noisy voltage traces for the configured schedule.
    Simulate,
    /// Five-pulse trains at several symbol periods with a per-period ISI summary.
    Sweep {
        /// Comma-separated symbol periods, s.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_PERIODS)]
        tsym: Vec<f64>,
        /// Pulses per train.
        #[arg(long, default_value_t = DEFAULT_SWEEP_PULSES)]
        pulses: usize,
    },
    /// Compare a measured `time_s,voltage_v` CSV with the model.
    Validate {
        /// Measured trace.
        data: PathBuf,
    },
    /// Residual histogram, Q-Q points and normality test for a measured trace.
    NoiseReport {
        /// Measured trace.
        data: PathBuf,
    },
    /// Particle-tracking check of the closed-form channel.
    Oracle {
        /// Number of particles; the config value when omitted.
        #[arg(long)]
        particles: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = thread_count(std::env::var("OMC_SIM_THREADS").ok().as_deref())?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let for_oracle = matches!(cli.command, Command::Oracle { .. });
    let cfg = load_config(cli.config.as_deref(), cli.seed, for_oracle)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => {
            let s = cmd_simulate(&cfg, out)?;
            println!(
                "{}: onset {:.2} s, peak {:.4} mg/L at {:.2} s, voltage peak {:.3} V",
                s.geometry,
                s.onset_time_s,
                s.peak_concentration_mg_per_l,
                s.peak_time_s,
                s.peak_voltage_v
            );
        }
        Command::Sweep { tsym, pulses } => {
            for row in cmd_sweep(&cfg, out, &tsym, pulses)? {
                println!(
                    "T_sym {:>6} s: drift {:.4}, monotone buildup {}",
                    row.t_sym_s, row.isi.drift_fraction, row.isi.monotone_buildup
                );
            }
        }
        Command::Validate { data } => {
            let r = cmd_validate(&cfg, &data, out)?;
            println!(
                "r = {:.4}, NRMSE = {:.4} ({}), peak error = {:.4}, lag = {} s",
                r.pearson_r, r.nrmse, r.nrmse_normalizer, r.peak_error, r.alignment_lag_s
            );
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::NoiseReport { data } => {
            let r = cmd_noise_report(&cfg, &data, out)?;
            println!(
                "n = {}, std = {:.5} V, Q-Q slope = {:.4}, KS p = {:.4}",
                r.n_samples, r.std_v, r.qq_slope, r.ks_p
            );
        }
        Command::Oracle { particles } => {
            let r = cmd_oracle(&cfg, out, particles)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            match r.exact_match {
                Some(exact) => println!("pure advection, exact match: {exact}"),
                None => println!(
                    "{} bins, {:.1} % within 3 standard errors: {}",
                    r.comparisons.len(),
                    100.0 * r.fraction_within_band,
                    if r.pass { "pass" } else { "fail" }
                ),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<omc_core::Error>()
                .map_or(1, omc_core::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
