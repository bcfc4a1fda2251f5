//! Subcommands of `omc-sim`. Each writes plot-ready CSV files and a JSON
//! report into an output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use omc_core::channel::Geometry;
use omc_core::io::{compare, save_concentration_csv, save_voltage_csv, write_table};
use omc_core::metrics::{histogram, qq_against_normal, std_dev};
use omc_core::oracle::{
    compare_probe, compare_transverse, fraction_within, simulate_bounded, simulate_unbounded,
    BinComparison, MIN_PARTICLES,
};
use omc_core::sequence::{isi_summary, run_chain, IsiSummary, SimulationGrid};
use omc_core::{
    load_csv, travel_parameter, ConcentrationTrace, Error, Result, ScenarioConfig, SpacePoint,
    TransmissionSchedule, ValidationReport, VoltageTrace,
};
use rayon::prelude::*;
use serde::Serialize;

/// Symbol periods of the inter-symbol interference sweep, s.
pub const DEFAULT_SWEEP_PERIODS: [f64; 5] = [300.0, 150.0, 75.0, 30.0, 10.0];
pub const DEFAULT_SWEEP_PULSES: usize = 5;

/// Share of comparison bins that must fall inside their band.
pub const ORACLE_PASS_FRACTION: f64 = 0.95;

/// Residual spread, relative to the model's largest magnitude, below which
/// residuals are CSV rounding only.
const QUANTISATION_FLOOR: f64 = 1e-8;

/// Probe times for the open-air oracle, as multiples of the arrival time.
const PROBE_TIME_FACTORS: [f64; 3] = [0.7, 1.0, 1.6];

/// Scenario from a JSON file, or the bounded preset when no file is
/// given. `seed` overrides the file's seed.
pub fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    for_oracle: bool,
) -> Result<ScenarioConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p)?,
        None => "{}".to_string(),
    };
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.oracle.seed = s;
    }
    if for_oracle {
        cfg.validate_for_oracle()?;
    } else {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn metadata(cfg: &ScenarioConfig, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::from([
        (
            "geometry".to_string(),
            cfg.channel.geometry.label().to_string(),
        ),
        ("seed".to_string(), cfg.seed.to_string()),
    ]);
    for (k, v) in extra {
        m.insert(k.to_string(), v.clone());
    }
    m
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub geometry: String,
    pub seed: u64,
    /// Advective arrival `x/u`, s.
    pub arrival_time_s: f64,
    /// First sample at or above half the concentration peak, s.
    pub onset_time_s: f64,
    pub peak_time_s: f64,
    pub peak_concentration_mg_per_l: f64,
    /// From the last sample at or above half the peak to the first one
    /// after it below 1 % of the peak, s.
    pub concentration_fall_time_s: Option<f64>,
    pub baseline_voltage_v: f64,
    pub peak_voltage_v: f64,
    /// Time after the voltage peak until the clean trace is back within
    /// 1 % of its swing from baseline, s.
    pub voltage_recovery_s: Option<f64>,
    pub clipped_samples: usize,
    pub clamped_negatives: usize,
    pub files: Vec<String>,
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > x[best] { i } else { best })
}

fn concentration_features(c: &ConcentrationTrace) -> (f64, f64, f64, Option<f64>) {
    let k_peak = argmax(&c.samples);
    let peak = c.samples[k_peak];
    let onset = c
        .samples
        .iter()
        .position(|&v| v >= 0.5 * peak)
        .unwrap_or(k_peak);
    let last_half = c
        .samples
        .iter()
        .rposition(|&v| v >= 0.5 * peak)
        .unwrap_or(k_peak);
    let fall = c.samples[last_half..]
        .iter()
        .position(|&v| v < 0.01 * peak)
        .map(|j| j as f64 * c.dt);
    (c.time(onset), c.time(k_peak), peak, fall)
}

fn recovery_time(v: &VoltageTrace, baseline: f64) -> Option<f64> {
    let k_peak = argmax(&v.samples);
    let swing = v.samples[k_peak] - baseline;
    v.samples[k_peak..]
        .iter()
        .position(|&x| x - baseline <= 0.01 * swing)
        .map(|j| j as f64 * v.dt)
}

/// Single run of the configured schedule: concentration, clean and
/// noisy voltage traces.
pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<SimulateSummary> {
    prepare_out(out)?;
    let schedule = cfg.transmission_schedule()?;
    let grid = cfg.simulation_grid()?;
    let chain = run_chain(
        &cfg.channel,
        &cfg.receiver,
        cfg.receiver_position,
        &schedule,
        &grid,
        Some(cfg.seed),
    )?;
    let noisy = chain.noisy.expect("seeded run is noisy");
    let meta = metadata(cfg, &[]);
    let files = [
        "concentration.csv",
        "voltage_clean.csv",
        "voltage_noisy.csv",
        "simulate_summary.json",
    ];
    save_concentration_csv(&out.join(files[0]), &chain.concentration, &meta)?;
    save_voltage_csv(&out.join(files[1]), &chain.clean, &meta)?;
    save_voltage_csv(&out.join(files[2]), &noisy.trace, &meta)?;

    let (onset, peak_t, peak_c, fall) = concentration_features(&chain.concentration);
    let baseline = cfg.receiver.baseline_voltage();
    let summary = SimulateSummary {
        geometry: cfg.channel.geometry.label().to_string(),
        seed: cfg.seed,
        arrival_time_s: cfg.channel.arrival_time(cfg.receiver_position.x),
        onset_time_s: onset,
        peak_time_s: peak_t,
        peak_concentration_mg_per_l: peak_c,
        concentration_fall_time_s: fall,
        baseline_voltage_v: baseline,
        peak_voltage_v: chain.clean.max(),
        voltage_recovery_s: recovery_time(&chain.clean, baseline),
        clipped_samples: noisy.clipped,
        clamped_negatives: chain.diagnostics.clamped_negatives,
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out.join(files[3]), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t_sym_s: f64,
    pub pulses: usize,
    pub isi: IsiSummary,
    pub clipped_samples: usize,
}

fn period_label(t: f64) -> String {
    format!("{t}")
}

/// Regular pulse trains at each symbol period, run concurrently.
pub fn cmd_sweep(
    cfg: &ScenarioConfig,
    out: &Path,
    periods: &[f64],
    pulses: usize,
) -> Result<Vec<SweepRow>> {
    if periods.is_empty() {
        return Err(Error::InvalidParameter {
            field: "tsym".into(),
            reason: "at least one symbol period is required".into(),
        });
    }
    for &t in periods {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter {
                field: "tsym".into(),
                reason: format!("symbol periods must be > 0 (got {t})"),
            });
        }
    }
    if pulses == 0 {
        return Err(Error::InvalidParameter {
            field: "pulses".into(),
            reason: "must be >= 1".into(),
        });
    }
    prepare_out(out)?;
    let pulse = cfg.transmission_schedule()?.pulse();
    let runs = periods
        .par_iter()
        .map(|&t| {
            let schedule = TransmissionSchedule::regular(pulses, t, pulse)?;
            let mut grid = SimulationGrid::default_for(&schedule, &cfg.receiver)?;
            if let Some(dt) = cfg.grid.dt {
                grid = SimulationGrid::new(dt, grid.t_end, &schedule)?;
            }
            let chain = run_chain(
                &cfg.channel,
                &cfg.receiver,
                cfg.receiver_position,
                &schedule,
                &grid,
                Some(cfg.seed),
            )?;
            let isi = isi_summary(&chain.clean, &schedule, cfg.receiver.baseline_voltage())?;
            Ok((t, chain, isi))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(runs.len());
    for (t, chain, isi) in runs {
        let label = period_label(t);
        let meta = metadata(
            cfg,
            &[("t_sym", label.clone()), ("pulses", pulses.to_string())],
        );
        let noisy = chain.noisy.expect("seeded run is noisy");
        save_concentration_csv(
            &out.join(format!("sweep_tsym{label}_concentration.csv")),
            &chain.concentration,
            &meta,
        )?;
        save_voltage_csv(
            &out.join(format!("sweep_tsym{label}_clean.csv")),
            &chain.clean,
            &meta,
        )?;
        save_voltage_csv(
            &out.join(format!("sweep_tsym{label}_noisy.csv")),
            &noisy.trace,
            &meta,
        )?;
        rows.push(SweepRow {
            t_sym_s: t,
            pulses,
            isi,
            clipped_samples: noisy.clipped,
        });
    }

    let mut columns = vec![
        "t_sym_s".to_string(),
        "baseline_v".to_string(),
        "peak_v".to_string(),
        "drift_fraction".to_string(),
        "monotone_buildup".to_string(),
    ];
    columns.extend((1..=pulses).map(|j| format!("min_v_symbol_{j}")));
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.t_sym_s,
                r.isi.baseline,
                r.isi.peak,
                r.isi.drift_fraction,
                if r.isi.monotone_buildup { 1.0 } else { 0.0 },
            ];
            row.extend(&r.isi.minima);
            row
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_table(
        &out.join("sweep_summary.csv"),
        &cols,
        &table,
        &metadata(cfg, &[]),
    )?;
    write_json(&out.join("sweep_summary.json"), &rows)?;
    Ok(rows)
}

/// Compares a measured trace with the scenario model and writes
/// `validation_report.json`.
pub fn cmd_validate(cfg: &ScenarioConfig, data: &Path, out: &Path) -> Result<ValidationReport> {
    let raw = load_csv(data)?;
    let report = compare(&raw, cfg)?.report;
    prepare_out(out)?;
    write_json(&out.join("validation_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    pub n_samples: usize,
    pub mean_v: f64,
    pub std_v: f64,
    pub qq_slope: f64,
    pub qq_intercept: f64,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub histogram_bins: usize,
    pub histogram_total: usize,
    pub alignment_lag_s: f64,
    pub files: Vec<String>,
}

/// Residual distribution of a measured trace against the model: histogram,
/// normal Q-Q points and a Kolmogorov–Smirnov p-value.
pub fn cmd_noise_report(cfg: &ScenarioConfig, data: &Path, out: &Path) -> Result<NoiseReport> {
    let raw = load_csv(data)?;
    let cmp = compare(&raw, cfg)?;
    let res = cmp.residuals();
    let scale = cmp.model.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if std_dev(&res) <= QUANTISATION_FLOOR * scale {
        return Err(Error::Domain(
            "degenerate residuals: measurement equals the model up to rounding".into(),
        ));
    }
    let qq = qq_against_normal(&res)?;
    let hist = histogram(&res, cfg.validation.histogram_bins)?;
    prepare_out(out)?;
    let meta = metadata(cfg, &[]);
    let files = [
        "noise_residuals.csv",
        "noise_histogram.csv",
        "noise_qq.csv",
        "noise_report.json",
    ];
    let res_rows: Vec<Vec<f64>> = res
        .iter()
        .enumerate()
        .map(|(k, &r)| vec![cmp.t0 + k as f64 * cmp.dt, r])
        .collect();
    write_table(
        &out.join(files[0]),
        &["time_s", "residual_v"],
        &res_rows,
        &meta,
    )?;
    let hist_rows: Vec<Vec<f64>> = hist
        .edges
        .windows(2)
        .zip(&hist.counts)
        .map(|(w, &c)| vec![w[0], w[1], c as f64])
        .collect();
    write_table(
        &out.join(files[1]),
        &["bin_lo_v", "bin_hi_v", "count"],
        &hist_rows,
        &meta,
    )?;
    let qq_rows: Vec<Vec<f64>> = qq
        .points
        .iter()
        .map(|p| vec![p.theoretical, p.empirical])
        .collect();
    write_table(
        &out.join(files[2]),
        &["theoretical_quantile", "empirical_quantile"],
        &qq_rows,
        &meta,
    )?;
    let report = NoiseReport {
        n_samples: res.len(),
        mean_v: qq.mean,
        std_v: qq.std,
        qq_slope: qq.slope,
        qq_intercept: qq.intercept,
        ks_statistic: qq.ks_statistic,
        ks_p: qq.ks_p,
        histogram_bins: hist.counts.len(),
        histogram_total: hist.total(),
        alignment_lag_s: cmp.report.alignment_lag_s,
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out.join(files[3]), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub geometry: String,
    pub n_particles: usize,
    pub seed: u64,
    pub dt_s: f64,
    /// Set for `K = 0`: every particle sits exactly where pure advection
    /// puts it.
    pub exact_match: Option<bool>,
    pub comparisons: Vec<BinComparison>,
    pub fraction_within_band: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Particle-tracking reference against the closed-form channel. The duct
/// is compared through its transverse histogram at the receiver distance;
/// open air through the mean concentration in a small cube riding with the
/// flow at several times.
pub fn cmd_oracle(
    cfg: &ScenarioConfig,
    out: &Path,
    particles: Option<usize>,
) -> Result<OracleReport> {
    let mut ocfg = cfg.oracle;
    if let Some(n) = particles {
        ocfg.n_particles = n;
    }
    let mut check = cfg.clone();
    check.oracle = ocfg;
    check.validate_for_oracle()?;

    let params = &cfg.channel;
    let rx = cfg.receiver_position;
    let mut warnings = Vec::new();
    if ocfg.n_particles < MIN_PARTICLES {
        warnings.push(format!(
            "insufficient statistics: {} particles < {MIN_PARTICLES}; bands are unreliable",
            ocfg.n_particles
        ));
    }
    let pure = params.diffusivity == 0.0;
    let arrival = params.arrival_time(rx.x);
    let (exact_match, comparisons) = match params.geometry {
        Geometry::BoundedSquare { .. } => {
            let r = travel_parameter(params, rx.x)?;
            let cloud = simulate_bounded(params, &ocfg, r)?;
            if pure {
                (Some(cloud.is_pure_advection()), Vec::new())
            } else {
                (None, compare_transverse(&cloud, r, ocfg.bins)?)
            }
        }
        Geometry::Unbounded { .. } => {
            if pure {
                let cloud = simulate_unbounded(params, &ocfg, arrival)?;
                let target = [params.flow_speed * arrival, 0.0, 0.0];
                let exact = cloud.is_pure_advection() && cloud.positions().all(|p| p == target);
                (Some(exact), Vec::new())
            } else {
                let mut cloud = simulate_unbounded(params, &ocfg, 0.0)?;
                let mut bins = Vec::new();
                for f in PROBE_TIME_FACTORS {
                    let t = f * arrival;
                    cloud.advance_to(t)?;
                    let probe = SpacePoint::new(params.flow_speed * t, rx.y, rx.z);
                    bins.push(compare_probe(&cloud, probe, ocfg.probe_half_width)?);
                }
                (None, bins)
            }
        }
    };
    let fraction = if comparisons.is_empty() {
        1.0
    } else {
        fraction_within(&comparisons)
    };
    let pass = match exact_match {
        Some(exact) => exact,
        None => fraction >= ORACLE_PASS_FRACTION,
    };
    let report = OracleReport {
        geometry: params.geometry.label().to_string(),
        n_particles: ocfg.n_particles,
        seed: ocfg.seed,
        dt_s: ocfg.dt,
        exact_match,
        comparisons,
        fraction_within_band: fraction,
        pass,
        warnings,
    };
    prepare_out(out)?;
    let rows: Vec<Vec<f64>> = report
        .comparisons
        .iter()
        .map(|b| {
            vec![
                b.lo,
                b.hi,
                b.analytic,
                b.empirical,
                b.standard_error,
                if b.within_band { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    write_table(
        &out.join("oracle_bins.csv"),
        &[
            "lo",
            "hi",
            "analytic",
            "empirical",
            "standard_error",
            "within_band",
        ],
        &rows,
        &metadata(cfg, &[("n_particles", ocfg.n_particles.to_string())]),
    )?;
    write_json(&out.join("oracle_report.json"), &report)?;
    Ok(report)
}

/// Parses `OMC_SIM_THREADS`; unset or empty means rayon's default.
pub fn thread_count(value: Option<&str>) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidParameter {
                field: "OMC_SIM_THREADS".into(),
                reason: format!("must be a positive integer (got {v:?})"),
            }),
        },
    }
}
