//! Closed-form concentration fields for a point release carried by a
//! uniform wind along +x.
//!
//! Two media are modelled: an open half-space above a reflecting ground
//! plane ([`unbounded`]) and a square duct with reflecting walls
//! ([`bounded`]). Both are parameterised by the travel parameter
//! `r(x) = (1/u) ∫₀ˣ K(ξ) dξ`, which plays the role of an elapsed diffusion
//! "time" in m².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod bounded;
pub mod unbounded;

pub use bounded::{
    bounded_impulse, pulse_response_bounded, transverse_profile, transverse_profile_checked,
    transverse_profile_images, transverse_profile_series, BoundedImpulse, SERIES_CROSSOVER_FACTOR,
};
pub use unbounded::{pulse_response_unbounded, unbounded_impulse};

/// Shape of the medium around the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Open air above a reflecting ground plane at `z = -source_height`.
    Unbounded { source_height: f64 },
    /// Square duct with reflecting walls at `y, z = ±half_width`; the source
    /// sits on the duct axis.
    BoundedSquare { half_width: f64 },
}

impl Geometry {
    pub fn label(&self) -> &'static str {
        match self {
            Geometry::Unbounded { .. } => "unbounded",
            Geometry::BoundedSquare { .. } => "bounded",
        }
    }
}

/// Physical description of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Released amount per pulse, mol.
    pub released_amount: f64,
    /// Effective (turbulent) diffusivity, m²/s.
    pub diffusivity: f64,
    /// Mean wind speed along +x, m/s.
    pub flow_speed: f64,
    pub geometry: Geometry,
}

impl ChannelParams {
    /// Open-air laboratory configuration (0.32 mol, K = 0.05 m²/s,
    /// u = 5 m/s, source 0.125 m above the table).
    pub fn table1_unbounded() -> Self {
        Self {
            released_amount: 0.32,
            diffusivity: 0.05,
            flow_speed: 5.0,
            geometry: Geometry::Unbounded {
                source_height: 0.125,
            },
        }
    }

    /// 25 cm × 25 cm tunnel configuration.
    pub fn table1_bounded() -> Self {
        Self {
            geometry: Geometry::BoundedSquare { half_width: 0.125 },
            ..Self::table1_unbounded()
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("released_amount", self.released_amount)?;
        positive("diffusivity", self.diffusivity)?;
        positive("flow_speed", self.flow_speed)?;
        match self.geometry {
            Geometry::Unbounded { source_height } => {
                if !(source_height.is_finite() && source_height >= 0.0) {
                    return Err(Error::invalid(
                        "geometry.source_height",
                        format!("must be >= 0 (got {source_height})"),
                    ));
                }
            }
            Geometry::BoundedSquare { half_width } => positive("geometry.half_width", half_width)?,
        }
        Ok(())
    }

    /// Advective arrival time `x / u` at downwind distance `x`.
    pub fn arrival_time(&self, x: f64) -> f64 {
        x / self.flow_speed
    }
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0 (got {v})")))
    }
}

/// Evaluation point in metres; x is downwind of the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpacePoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Receiver position used in all the laboratory runs.
    pub const fn table1_receiver() -> Self {
        Self::new(1.10, 0.0, 0.0)
    }
}

/// `r = (1/u) ∫₀ˣ K dξ`, in m².
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TravelParameter(f64);

impl TravelParameter {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_finite() && r >= 0.0 {
            Ok(Self(r))
        } else {
            Err(Error::Domain(format!(
                "travel parameter must be >= 0 (got {r})"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Duration of a rectangular release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub duration: f64,
}

impl PulseShape {
    pub fn new(duration: f64) -> Result<Self> {
        positive("pulse.duration", duration)?;
        Ok(Self { duration })
    }
}

/// Travel parameter for the constant diffusivity in `params`.
pub fn travel_parameter(params: &ChannelParams, x: f64) -> Result<TravelParameter> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!(
            "travel parameter needs x >= 0 (got {x})"
        )));
    }
    TravelParameter::new(params.diffusivity * x / params.flow_speed)
}

/// Piecewise-constant diffusivity along x. Segment `i` starts at
/// `starts[i]` and holds `values[i]` until the next start; the last
/// segment extends to infinity. The first start must be 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDiffusivity {
    starts: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseDiffusivity {
    pub fn new(starts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::invalid(
                "diffusivity_profile",
                "needs one value per segment start and at least one segment",
            ));
        }
        if starts[0] != 0.0 {
            return Err(Error::invalid(
                "diffusivity_profile",
                "first segment must start at x = 0",
            ));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "diffusivity_profile",
                "segment starts must be strictly increasing",
            ));
        }
        for &k in &values {
            positive("diffusivity_profile", k)?;
        }
        Ok(Self { starts, values })
    }

    pub fn constant(k: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![k])
    }

    /// `(1/u) ∫₀ˣ K(ξ) dξ`, summed segment by segment.
    pub fn travel_parameter(&self, flow_speed: f64, x: f64) -> Result<TravelParameter> {
        positive("flow_speed", flow_speed)?;
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Domain(format!(
                "travel parameter needs x >= 0 (got {x})"
            )));
        }
        let mut integral = 0.0;
        for (i, (&start, &k)) in self.starts.iter().zip(&self.values).enumerate() {
            if start >= x {
                break;
            }
            let end = self
                .starts
                .get(i + 1)
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(x);
            integral += k * (end - start);
        }
        TravelParameter::new(integral / flow_speed)
    }
}

/// Pulse response at `p`, dispatching on the channel geometry.
pub fn pulse_response(
    params: &ChannelParams,
    p: SpacePoint,
    pulse: PulseShape,
    t: f64,
) -> Result<f64> {
    match params.geometry {
        Geometry::Unbounded { .. } => pulse_response_unbounded(params, p, pulse, t),
        Geometry::BoundedSquare { .. } => pulse_response_bounded(params, p, pulse, t),
    }
}
