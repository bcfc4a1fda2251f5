//! Pulse trains: schedules, LTI superposition at the concentration level,
//! and the full transmitter-to-voltage chain.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    bounded_impulse, pulse_response_unbounded, ChannelParams, Geometry, PulseShape, SpacePoint,
};
use crate::error::{Error, Result};
use crate::receiver::{NoisyTrace, ReceiverParams};
use crate::trace::{ConcentrationTrace, ConcentrationUnit, VoltageTrace};

/// Default sample spacing, s.
pub const DEFAULT_DT: f64 = 0.01;

/// Pulse start times (s) sharing one pulse shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionSchedule {
    pulse_starts: Vec<f64>,
    pulse: PulseShape,
    symbol_period: Option<f64>,
}

impl TransmissionSchedule {
    /// `count` pulses at `k·symbol_period`.
    pub fn regular(count: usize, symbol_period: f64, pulse: PulseShape) -> Result<Self> {
        if !(symbol_period.is_finite() && symbol_period > 0.0) {
            return Err(Error::invalid(
                "schedule.symbol_period",
                format!("must be > 0 (got {symbol_period})"),
            ));
        }
        Ok(Self {
            pulse_starts: (0..count).map(|k| k as f64 * symbol_period).collect(),
            pulse,
            symbol_period: Some(symbol_period),
        })
    }

    /// A single pulse at t = 0.
    pub fn single(pulse: PulseShape) -> Self {
        Self {
            pulse_starts: vec![0.0],
            pulse,
            symbol_period: None,
        }
    }

    pub fn from_starts(pulse_starts: Vec<f64>, pulse: PulseShape) -> Result<Self> {
        if pulse_starts.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                "schedule.starts",
                "pulse starts must be finite and >= 0",
            ));
        }
        if pulse_starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "schedule.starts",
                "pulse starts must be strictly increasing",
            ));
        }
        Ok(Self {
            pulse_starts,
            pulse,
            symbol_period: None,
        })
    }

    pub fn starts(&self) -> &[f64] {
        &self.pulse_starts
    }

    pub fn pulse(&self) -> PulseShape {
        self.pulse
    }

    pub fn symbol_period(&self) -> Option<f64> {
        self.symbol_period
    }

    pub fn count(&self) -> usize {
        self.pulse_starts.len()
    }

    pub fn last_start(&self) -> Option<f64> {
        self.pulse_starts.last().copied()
    }

    /// Both schedules' pulses in one schedule. Pulse shapes must match and
    /// no start may appear twice.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.pulse != other.pulse {
            return Err(Error::invalid(
                "schedule",
                "cannot merge different pulse shapes",
            ));
        }
        let mut starts: Vec<f64> = self
            .pulse_starts
            .iter()
            .chain(&other.pulse_starts)
            .copied()
            .collect();
        starts.sort_by(f64::total_cmp);
        Self::from_starts(starts, self.pulse)
    }

    /// Every start moved by `delta` (which must keep starts >= 0).
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        let mut s = Self::from_starts(
            self.pulse_starts.iter().map(|t| t + delta).collect(),
            self.pulse,
        )?;
        s.symbol_period = self.symbol_period;
        Ok(s)
    }
}

/// Uniform output grid `0, dt, 2dt, …` up to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationGrid {
    pub dt: f64,
    pub t_end: f64,
}

impl SimulationGrid {
    pub fn new(dt: f64, t_end: f64, schedule: &TransmissionSchedule) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("grid.dt", format!("must be > 0 (got {dt})")));
        }
        let limit = schedule.pulse().duration / 10.0;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "grid.dt",
                format!("must be <= pulse duration / 10 = {limit} (got {dt})"),
            ));
        }
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::invalid(
                "grid.t_end",
                format!("must be > 0 (got {t_end})"),
            ));
        }
        if let Some(last) = schedule.last_start() {
            if t_end <= last {
                return Err(Error::invalid(
                    "grid.t_end",
                    format!("must exceed the last pulse start {last} (got {t_end})"),
                ));
            }
        }
        Ok(Self { dt, t_end })
    }

    /// 10 ms spacing (or T_p/10 if shorter) and a horizon of one symbol
    /// period plus five decay constants past the last pulse.
    pub fn default_for(schedule: &TransmissionSchedule, rx: &ReceiverParams) -> Result<Self> {
        let dt = DEFAULT_DT.min(schedule.pulse().duration / 10.0);
        let period = schedule
            .symbol_period()
            .unwrap_or(schedule.pulse().duration);
        let t_end = schedule.last_start().unwrap_or(0.0) + period + 5.0 * rx.tau_decay;
        Self::new(dt, t_end, schedule)
    }

    pub fn len(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Counters for values that were adjusted rather than rejected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChannelDiagnostics {
    pub clamped_negatives: usize,
}

/// Pulses further than this many puff spreads from the receiver contribute
/// exactly zero in f64.
const UNDERFLOW_SPREADS: f64 = 40.0;

/// Time since pulse start for sample `k`. Starts that sit on the grid are
/// snapped to an integer sample offset so that shifting a schedule by a
/// whole number of samples shifts the output sample-exactly.
fn local_times(grid: &SimulationGrid, start: f64) -> impl Fn(usize) -> f64 {
    let offset = start / grid.dt;
    let snapped = offset.round();
    let dt = grid.dt;
    let aligned = (offset - snapped).abs() < 1e-6;
    move |k| {
        if aligned {
            (k as f64 - snapped) * dt
        } else {
            k as f64 * dt - start
        }
    }
}

/// Concentration (mol/m³) at `p` from every pulse of `schedule`, summed in
/// schedule order.
pub fn superpose_with_diagnostics(
    params: &ChannelParams,
    p: SpacePoint,
    schedule: &TransmissionSchedule,
    grid: &SimulationGrid,
) -> Result<(ConcentrationTrace, ChannelDiagnostics)> {
    params.validate()?;
    let n = grid.len();
    let pulse = schedule.pulse();
    let mut total = vec![0.0; n];
    let mut diag = ChannelDiagnostics::default();

    match params.geometry {
        Geometry::BoundedSquare { .. } => {
            let imp = bounded_impulse(params, p)?;
            for &start in schedule.starts() {
                diag.clamped_negatives += imp.clamped as usize;
                let local = local_times(grid, start);
                for (k, slot) in total.iter_mut().enumerate() {
                    *slot += imp.pulse_value(pulse, local(k));
                }
            }
        }
        Geometry::Unbounded { .. } => {
            // Validates the point once; errors surface before the loop.
            let r = crate::channel::travel_parameter(params, p.x)?.value();
            let arrival = params.arrival_time(p.x);
            let spread = (2.0 * r).sqrt() / params.flow_speed;
            let horizon_lo = arrival - UNDERFLOW_SPREADS * spread;
            let horizon_hi = arrival + pulse.duration + UNDERFLOW_SPREADS * spread;
            for &start in schedule.starts() {
                let local = local_times(grid, start);
                let contrib: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|k| {
                        let t = local(k);
                        if t <= 0.0 || t < horizon_lo || t > horizon_hi {
                            Ok(0.0)
                        } else {
                            pulse_response_unbounded(params, p, pulse, t)
                        }
                    })
                    .collect::<Result<_>>()?;
                for (slot, c) in total.iter_mut().zip(contrib) {
                    *slot += c;
                }
            }
        }
    }

    let trace = ConcentrationTrace::new(0.0, grid.dt, ConcentrationUnit::MolPerCubicMetre, total)?;
    Ok((trace, diag))
}

pub fn superpose(
    params: &ChannelParams,
    p: SpacePoint,
    schedule: &TransmissionSchedule,
    grid: &SimulationGrid,
) -> Result<ConcentrationTrace> {
    superpose_with_diagnostics(params, p, schedule, grid).map(|(t, _)| t)
}

/// Every stage of the chain for one scenario.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Ambient concentration at the receiver, mg/L.
    pub concentration: ConcentrationTrace,
    pub clean: VoltageTrace,
    pub noisy: Option<NoisyTrace>,
    pub diagnostics: ChannelDiagnostics,
}

/// Channel superposition, unit conversion, sensor kinetics from the
/// clean-air baseline, and noise when `seed` is given.
pub fn run_chain(
    params: &ChannelParams,
    rx: &ReceiverParams,
    p: SpacePoint,
    schedule: &TransmissionSchedule,
    grid: &SimulationGrid,
    seed: Option<u64>,
) -> Result<ChainOutput> {
    rx.validate()?;
    let (conc, diagnostics) = superpose_with_diagnostics(params, p, schedule, grid)?;
    let concentration = conc.to_mg_per_l(rx.molar_mass);
    let clean = rx.integrate_kinetics(&concentration, rx.baseline_voltage())?;
    let noisy = seed.map(|s| rx.add_noise(&clean, s));
    Ok(ChainOutput {
        concentration,
        clean,
        noisy,
        diagnostics,
    })
}

/// Voltage trace at the receiver; noisy when `seed` is given.
pub fn end_to_end(
    params: &ChannelParams,
    rx: &ReceiverParams,
    p: SpacePoint,
    schedule: &TransmissionSchedule,
    grid: &SimulationGrid,
    seed: Option<u64>,
) -> Result<VoltageTrace> {
    let out = run_chain(params, rx, p, schedule, grid, seed)?;
    Ok(match out.noisy {
        Some(n) => n.trace,
        None => out.clean,
    })
}

/// Per-symbol inter-pulse minima of a voltage trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsiSummary {
    pub baseline: f64,
    pub peak: f64,
    /// Lowest voltage after each symbol's peak and before the next symbol.
    pub minima: Vec<f64>,
    /// `(max(minima) − baseline) / (peak − baseline)`.
    pub drift_fraction: f64,
    /// Minima strictly increase from symbol to symbol.
    pub monotone_buildup: bool,
}

/// Symbol `j` owns the samples from its start up to the next start (or
/// one symbol period, or the end of the trace for the last irregular
/// pulse). Its minimum is taken after the window's maximum.
pub fn isi_summary(
    v: &VoltageTrace,
    schedule: &TransmissionSchedule,
    baseline: f64,
) -> Result<IsiSummary> {
    if schedule.count() == 0 || v.is_empty() {
        return Err(Error::Domain("ISI summary needs pulses and samples".into()));
    }
    let index_of = |t: f64| (((t - v.t0) / v.dt) - 1e-9).ceil().max(0.0) as usize;
    let starts = schedule.starts();
    let mut minima = Vec::with_capacity(starts.len());
    for (j, &s) in starts.iter().enumerate() {
        let end = match (starts.get(j + 1), schedule.symbol_period()) {
            (Some(&next), _) => next,
            (None, Some(period)) => s + period,
            (None, None) => f64::INFINITY,
        };
        let lo = index_of(s).min(v.len());
        let hi = if end.is_finite() {
            index_of(end).min(v.len())
        } else {
            v.len()
        };
        let window = &v.samples[lo..hi];
        if window.is_empty() {
            return Err(Error::Domain(format!(
                "symbol {j} at {s} s has no samples in the trace"
            )));
        }
        let peak_at = window
            .iter()
            .enumerate()
            .fold(0, |best, (i, &x)| if x > window[best] { i } else { best });
        let min = window[peak_at..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        minima.push(min);
    }
    let peak = v.max();
    let top = minima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let swing = peak - baseline;
    let drift_fraction = if swing > 0.0 {
        (top - baseline) / swing
    } else {
        0.0
    };
    let monotone_buildup = minima.windows(2).all(|w| w[1] > w[0]);
    Ok(IsiSummary {
        baseline,
        peak,
        minima,
        drift_fraction,
        monotone_buildup,
    })
}
