//! Gaussian puff above a perfectly reflecting ground plane.

use std::f64::consts::PI;

use super::{travel_parameter, ChannelParams, Geometry, PulseShape, SpacePoint};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_trapezoid, TrapezoidTolerance};

/// Time-independent part of the puff at a fixed point: prefactor times the
/// transverse and ground-image factors, plus the travel parameter.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PuffAtPoint {
    pub amplitude: f64,
    pub r: f64,
    pub x: f64,
    pub u: f64,
}

impl PuffAtPoint {
    pub(crate) fn new(params: &ChannelParams, p: SpacePoint) -> Result<Self> {
        let Geometry::Unbounded { source_height } = params.geometry else {
            return Err(Error::Domain(
                "unbounded response requested for a bounded channel".into(),
            ));
        };
        let r = travel_parameter(params, p.x)?.value();
        if r == 0.0 {
            return Err(Error::Singular(format!(
                "puff is singular at r = 0 (x = {})",
                p.x
            )));
        }
        let four_r = 4.0 * r;
        let direct = (-p.z * p.z / four_r).exp();
        let zi = p.z + 2.0 * source_height;
        let image = (-zi * zi / four_r).exp();
        let amplitude = params.released_amount / (8.0 * (PI * r).powf(1.5))
            * (-p.y * p.y / four_r).exp()
            * (direct + image);
        Ok(Self {
            amplitude,
            r,
            x: p.x,
            u: params.flow_speed,
        })
    }

    #[inline]
    pub(crate) fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.gaussian(t)
    }

    /// The puff without the causal cut at `t = 0`.
    #[inline]
    fn gaussian(&self, t: f64) -> f64 {
        let d = self.x - self.u * t;
        self.amplitude * (-d * d / (4.0 * self.r)).exp()
    }

    /// Standard deviation of the puff's passage in time, `√(2r)/u`.
    pub(crate) fn time_spread(&self) -> f64 {
        (2.0 * self.r).sqrt() / self.u
    }
}

/// Concentration (mol/m³) at `p` and time `t` after an instantaneous release
/// at the origin, with the ground plane `source_height` below the source.
///
/// Returns 0 for `t <= 0`. Evaluation at `x = 0` (where `r = 0`) is refused
/// with [`Error::Singular`].
pub fn unbounded_impulse(params: &ChannelParams, p: SpacePoint, t: f64) -> Result<f64> {
    if !matches!(params.geometry, Geometry::Unbounded { .. }) {
        return Err(Error::Domain(
            "unbounded response requested for a bounded channel".into(),
        ));
    }
    let puff = PuffAtPoint::new(params, p)?;
    Ok(puff.at(t))
}

/// Response to a rectangular release of duration `T_p` starting at t = 0:
/// `(1/T_p) ∫₀^{min(t,T_p)} C(p, t−τ) dτ`.
pub fn pulse_response_unbounded(
    params: &ChannelParams,
    p: SpacePoint,
    pulse: PulseShape,
    t: f64,
) -> Result<f64> {
    let puff = PuffAtPoint::new(params, p)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let upper = t.min(pulse.duration);
    let center = t - puff.x / puff.u;
    let spread = puff.time_spread();
    let breakpoints: Vec<f64> = [-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|k| center + k * spread)
        .collect();
    let integral = adaptive_trapezoid(
        // t − τ ≥ 0 over the whole window; the endpoint takes the limit
        // from inside rather than the causal zero.
        |tau| puff.gaussian(t - tau),
        0.0,
        upper,
        &breakpoints,
        TrapezoidTolerance::default(),
    )?;
    Ok((integral / pulse.duration).max(0.0))
}
