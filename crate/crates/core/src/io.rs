//! Experimental trace ingestion and the model-vs-measurement workflow.
//!
//! Time series are stored as two-column CSV with a `time_s` first column,
//! `.` as decimal separator, LF or CRLF line ends, and optional
//! `# key: value` comment lines carrying metadata. Values are written with
//! nine significant digits so that reading and re-writing a file
//! reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{pearson, ValidationReport};
use crate::sequence::end_to_end;
use crate::trace::{ConcentrationTrace, VoltageTrace};

pub const TIME_COLUMN: &str = "time_s";
pub const VOLTAGE_COLUMN: &str = "voltage_v";

/// Nine significant digits in scientific notation.
pub fn format_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// A numeric CSV table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

/// Parses a numeric CSV table from text. `source` names the input in error
/// messages.
pub fn parse_table(text: &str, source: &str) -> Result<Table> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source.to_string(),
        line,
        message,
    };
    let mut metadata = BTreeMap::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                let key = k.trim();
                if !key.is_empty() {
                    metadata.insert(key.to_string(), v.trim().to_string());
                }
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match &columns {
            None => {
                if cells.iter().any(|c| c.is_empty()) {
                    return Err(parse_err(lineno, "empty column name in header".into()));
                }
                columns = Some(cells.iter().map(|c| c.to_string()).collect());
            }
            Some(cols) => {
                if cells.len() != cols.len() {
                    return Err(parse_err(
                        lineno,
                        format!("expected {} cells, found {}", cols.len(), cells.len()),
                    ));
                }
                let row = cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match c.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(parse_err(
                            lineno,
                            format!("non-numeric value {c:?} in column `{}`", cols[i]),
                        )),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
        }
    }
    let columns = columns.ok_or_else(|| parse_err(1, "missing header line".into()))?;
    Ok(Table {
        columns,
        rows,
        metadata,
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string())
}

fn render_table(
    columns: &[&str],
    rows: &[Vec<f64>],
    metadata: &BTreeMap<String, String>,
) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_sig9(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(
    path: &Path,
    columns: &[&str],
    rows: &[Vec<f64>],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    fs::write(path, render_table(columns, rows, metadata))?;
    Ok(())
}

/// Time series with a strictly increasing time axis and one value column.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub value_column: String,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

/// Parses a `time_s,<value>` series; when `value_column` is given the
/// second header cell must match it.
pub fn parse_series(text: &str, source: &str, value_column: Option<&str>) -> Result<Series> {
    let table = parse_table(text, source)?;
    let header_line = text
        .split('\n')
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map_or(1, |i| i + 1);
    let bad_header = |msg: String| Error::Parse {
        source_name: source.to_string(),
        line: header_line,
        message: msg,
    };
    if table.columns.len() != 2 || table.columns[0] != TIME_COLUMN {
        return Err(bad_header(format!(
            "header must be `{TIME_COLUMN},{}`, found `{}`",
            value_column.unwrap_or("<value>"),
            table.columns.join(",")
        )));
    }
    if let Some(expected) = value_column {
        if table.columns[1] != expected {
            return Err(bad_header(format!(
                "header must be `{TIME_COLUMN},{expected}`, found `{}`",
                table.columns.join(",")
            )));
        }
    }
    // map data rows back to line numbers for monotonicity errors
    let data_lines: Vec<usize> = text
        .split('\n')
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, _)| i + 1)
        .skip(1)
        .collect();
    let mut timestamps = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        if let Some(&prev) = timestamps.last() {
            if !(row[0] > prev) {
                return Err(Error::Parse {
                    source_name: source.to_string(),
                    line: data_lines[i],
                    message: format!(
                        "time {} s does not increase past the previous {} s",
                        row[0], prev
                    ),
                });
            }
        }
        timestamps.push(row[0]);
        values.push(row[1]);
    }
    Ok(Series {
        value_column: table.columns[1].clone(),
        timestamps,
        values,
        metadata: table.metadata,
    })
}

/// Any `time_s,<value>` series file.
pub fn load_series_csv(path: &Path) -> Result<Series> {
    let text = fs::read_to_string(path)?;
    parse_series(&text, &path.display().to_string(), None)
}

/// Measured sensor output, possibly on a non-uniform time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub timestamps: Vec<f64>,
    pub voltages: Vec<f64>,
    /// Free-form `# key: value` annotations such as `geometry` or `t_sym`.
    pub metadata: BTreeMap<String, String>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn from_voltage_trace(v: &VoltageTrace, metadata: BTreeMap<String, String>) -> Self {
        Self {
            timestamps: v.times().collect(),
            voltages: v.samples.clone(),
            metadata,
        }
    }

    /// Clips voltages into `[0, v_c]` and returns how many were changed.
    pub fn sanitize(&mut self, v_c: f64) -> usize {
        let mut n = 0;
        for v in &mut self.voltages {
            let c = v.clamp(0.0, v_c);
            if c != *v {
                *v = c;
                n += 1;
            }
        }
        n
    }

    pub fn to_csv_string(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .timestamps
            .iter()
            .zip(&self.voltages)
            .map(|(&t, &v)| vec![t, v])
            .collect();
        render_table(&[TIME_COLUMN, VOLTAGE_COLUMN], &rows, &self.metadata)
    }
}

pub fn parse_voltage_csv(text: &str, source: &str) -> Result<RawTrace> {
    let s = parse_series(text, source, Some(VOLTAGE_COLUMN))?;
    Ok(RawTrace {
        timestamps: s.timestamps,
        voltages: s.values,
        metadata: s.metadata,
    })
}

/// Reads a `time_s,voltage_v` file.
pub fn load_csv(path: &Path) -> Result<RawTrace> {
    let text = fs::read_to_string(path)?;
    parse_voltage_csv(&text, &path.display().to_string())
}

pub fn save_csv(path: &Path, trace: &RawTrace) -> Result<()> {
    fs::write(path, trace.to_csv_string())?;
    Ok(())
}

pub fn save_voltage_csv(
    path: &Path,
    trace: &VoltageTrace,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    save_csv(path, &RawTrace::from_voltage_trace(trace, metadata.clone()))
}

pub fn save_concentration_csv(
    path: &Path,
    trace: &ConcentrationTrace,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let rows: Vec<Vec<f64>> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, &c)| vec![trace.time(k), c])
        .collect();
    write_table(
        path,
        &[TIME_COLUMN, trace.unit.column_name()],
        &rows,
        metadata,
    )
}

/// Uniform sampling `t0 + k·dt`, `k < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// Grid points closer than this fraction of `dt` to a raw timestamp take
/// that sample's value exactly.
const SNAP_FRACTION: f64 = 1e-4;

/// Linear interpolation of `raw` onto `grid`. Points outside the raw time
/// span are refused.
pub fn resample(raw: &RawTrace, grid: &UniformGrid) -> Result<VoltageTrace> {
    if raw.is_empty() {
        return Err(Error::Domain("cannot resample an empty trace".into()));
    }
    if !(grid.dt > 0.0) {
        return Err(Error::Domain(format!(
            "grid spacing must be > 0 (got {})",
            grid.dt
        )));
    }
    let ts = &raw.timestamps;
    let snap = SNAP_FRACTION * grid.dt;
    let (first, last) = (ts[0], ts[ts.len() - 1]);
    if grid.len > 0 {
        let (g0, g1) = (grid.time(0), grid.time(grid.len - 1));
        if g0 < first - snap || g1 > last + snap {
            return Err(Error::Domain(format!(
                "resampling grid [{g0}, {g1}] s extrapolates beyond data [{first}, {last}] s"
            )));
        }
    }
    let mut out = Vec::with_capacity(grid.len);
    let mut j = 0;
    for k in 0..grid.len {
        let t = grid.time(k);
        while j + 1 < ts.len() && ts[j + 1] <= t {
            j += 1;
        }
        let v = if (t - ts[j]).abs() <= snap {
            raw.voltages[j]
        } else if j + 1 < ts.len() && (ts[j + 1] - t).abs() <= snap {
            raw.voltages[j + 1]
        } else if j + 1 < ts.len() {
            let w = (t - ts[j]) / (ts[j + 1] - ts[j]);
            raw.voltages[j] + w * (raw.voltages[j + 1] - raw.voltages[j])
        } else {
            raw.voltages[j]
        };
        out.push(v);
    }
    VoltageTrace::new(grid.t0, grid.dt, out)
}

/// Averages several measurements after resampling each onto `grid`.
pub fn average_traces(traces: &[RawTrace], grid: &UniformGrid) -> Result<VoltageTrace> {
    if traces.is_empty() {
        return Err(Error::Domain("nothing to average".into()));
    }
    let mut acc = vec![0.0; grid.len];
    for t in traces {
        for (a, v) in acc.iter_mut().zip(resample(t, grid)?.samples) {
            *a += v;
        }
    }
    let n = traces.len() as f64;
    VoltageTrace::new(grid.t0, grid.dt, acc.into_iter().map(|a| a / n).collect())
}

fn overlap(n: usize, shift: isize) -> (usize, usize) {
    // indices k of exp with 0 <= k - shift < n
    let lo = shift.max(0) as usize;
    let hi = (n as isize + shift).min(n as isize).max(0) as usize;
    (lo.min(hi), hi)
}

/// Experiment and model samples paired after shifting the model by
/// `shift` samples: `exp[k]` against `model[k − shift]`.
pub fn aligned_pairs<'a>(exp: &'a [f64], model: &'a [f64], shift: isize) -> (&'a [f64], &'a [f64]) {
    let (lo, hi) = overlap(exp.len(), shift);
    let mlo = (lo as isize - shift) as usize;
    (&exp[lo..hi], &model[mlo..mlo + (hi - lo)])
}

/// Shift (s) to apply to `model` that maximises its correlation with
/// `exp`, searched over whole samples within `±max_lag`. Ties go to the
/// smaller shift.
pub fn align(exp: &VoltageTrace, model: &VoltageTrace, max_lag: f64) -> Result<f64> {
    if !exp.same_grid(model) {
        return Err(Error::Alignment("traces must share a sampling grid".into()));
    }
    if !(max_lag >= 0.0) {
        return Err(Error::Alignment(format!(
            "max lag must be >= 0 (got {max_lag})"
        )));
    }
    if max_lag == 0.0 {
        return Ok(0.0);
    }
    let flat = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if exp.is_empty() || flat(&exp.samples) || flat(&model.samples) {
        return Err(Error::Alignment(
            "cross-correlation undefined for flat traces".into(),
        ));
    }
    let max_shift = (max_lag / exp.dt + 1e-9).floor() as isize;
    let mut best: Option<(isize, f64)> = None;
    let mut shifts: Vec<isize> = vec![0];
    for s in 1..=max_shift {
        shifts.push(-s);
        shifts.push(s);
    }
    for s in shifts {
        let (e, m) = aligned_pairs(&exp.samples, &model.samples, s);
        if e.len() < 2 {
            continue;
        }
        let Ok(r) = pearson(e, m) else { continue };
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((s, r));
        }
    }
    best.map(|(s, _)| s as f64 * exp.dt)
        .ok_or_else(|| Error::Alignment("no admissible lag in the search window".into()))
}

/// Measured and modelled samples after resampling and alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub report: ValidationReport,
    /// Time of the first paired sample on the experiment axis, s.
    pub t0: f64,
    pub dt: f64,
    pub experiment: Vec<f64>,
    pub model: Vec<f64>,
}

impl Comparison {
    /// `experiment − model` for every paired sample.
    pub fn residuals(&self) -> Vec<f64> {
        self.experiment
            .iter()
            .zip(&self.model)
            .map(|(e, m)| e - m)
            .collect()
    }
}

/// Compares a measured trace with the noise-free model of `scenario`.
///
/// The model runs on the scenario grid; the measurement is resampled onto
/// the part of that grid it covers, the model is aligned within
/// `scenario.validation.max_lag`, and every metric is computed on the
/// overlapping samples.
pub fn compare(exp: &RawTrace, scenario: &ScenarioConfig) -> Result<Comparison> {
    if exp.len() < 2 {
        return Err(Error::Parse {
            source_name: "experiment".into(),
            line: 0,
            message: format!("trace needs at least 2 samples (got {})", exp.len()),
        });
    }
    let mut exp = exp.clone();
    let clipped = exp.sanitize(scenario.receiver.circuit_voltage);

    let schedule = scenario.transmission_schedule()?;
    let grid = scenario.simulation_grid()?;
    let model = end_to_end(
        &scenario.channel,
        &scenario.receiver,
        scenario.receiver_position,
        &schedule,
        &grid,
        None,
    )?;

    let dt = grid.dt;
    let first = exp.timestamps[0];
    let last = exp.timestamps[exp.len() - 1];
    let snap = SNAP_FRACTION * dt;
    let k_lo = ((first - snap) / dt).ceil().max(0.0) as usize;
    let k_hi = (((last + snap) / dt).floor() as usize).min(model.len().saturating_sub(1));
    if k_hi < k_lo + 1 {
        return Err(Error::Domain(format!(
            "measurement [{first}, {last}] s overlaps the model grid in fewer than 2 samples"
        )));
    }
    let sub = UniformGrid {
        t0: k_lo as f64 * dt,
        dt,
        len: k_hi - k_lo + 1,
    };
    let exp_on_grid = resample(&exp, &sub)?;
    let model_sub = VoltageTrace::new(sub.t0, dt, model.samples[k_lo..=k_hi].to_vec())?;

    let lag = align(&exp_on_grid, &model_sub, scenario.validation.max_lag)?;
    let shift = (lag / dt).round() as isize;
    let (e, m) = aligned_pairs(&exp_on_grid.samples, &model_sub.samples, shift);
    let mut report = ValidationReport::from_aligned(e, m, lag)?;
    if clipped > 0 {
        report
            .warnings
            .push(format!("{clipped} measured samples clipped into [0, V_c]"));
    }
    Ok(Comparison {
        report,
        t0: sub.t0 + shift.max(0) as f64 * dt,
        dt,
        experiment: e.to_vec(),
        model: m.to_vec(),
    })
}

/// [`compare`], keeping only the report.
pub fn validate(exp: &RawTrace, scenario: &ScenarioConfig) -> Result<ValidationReport> {
    Ok(compare(exp, scenario)?.report)
}
