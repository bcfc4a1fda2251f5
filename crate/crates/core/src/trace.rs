//! Uniformly sampled time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationUnit {
    MolPerCubicMetre,
    MilligramPerLitre,
}

impl ConcentrationUnit {
    pub fn column_name(self) -> &'static str {
        match self {
            ConcentrationUnit::MolPerCubicMetre => "concentration_mol_per_m3",
            ConcentrationUnit::MilligramPerLitre => "concentration_mg_per_l",
        }
    }
}

/// Concentration at the receiver sampled at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTrace {
    pub t0: f64,
    pub dt: f64,
    pub unit: ConcentrationUnit,
    pub samples: Vec<f64>,
}

/// Sensor output voltage sampled at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageTrace {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "sample spacing must be > 0 (got {dt})"
        )))
    }
}

impl ConcentrationTrace {
    pub fn new(t0: f64, dt: f64, unit: ConcentrationUnit, samples: Vec<f64>) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            t0,
            dt,
            unit,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

impl VoltageTrace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self { t0, dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| self.time(k))
    }

    /// Same start, spacing and length, up to a relative 1e-9 on the spacing.
    pub fn same_grid(&self, other: &VoltageTrace) -> bool {
        self.samples.len() == other.samples.len()
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt
            && (self.dt - other.dt).abs() <= 1e-9 * self.dt
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
