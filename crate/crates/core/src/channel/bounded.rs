//! Square duct with reflecting walls.
//!
//! Longitudinal diffusion is neglected, so the release arrives as a sheet
//! at the advective time `x/u` and the transverse profile is the Neumann
//! heat kernel on `[-l, l]` evaluated at the travel parameter `r`.

use std::f64::consts::PI;

use super::{travel_parameter, ChannelParams, Geometry, PulseShape, SpacePoint, TravelParameter};
use crate::error::{Error, Result};

/// Below `r* = SERIES_CROSSOVER_FACTOR · (l/π)²` the profile is summed over
/// mirror images instead of cosine modes.
pub const SERIES_CROSSOVER_FACTOR: f64 = 1e-2;

const TERM_TOL: f64 = 1e-14;
const MAX_TERMS: usize = 100_000;
const NEGATIVE_TOL: f64 = 1e-12;

fn check_args(r: f64, y: f64, l: f64) -> Result<()> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Domain(format!("half-width must be > 0 (got {l})")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!(
            "travel parameter must be >= 0 (got {r})"
        )));
    }
    if !(y.abs() <= l * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "transverse coordinate {y} lies outside [-{l}, {l}]"
        )));
    }
    if r == 0.0 {
        return Err(Error::Singular(
            "transverse profile is a Dirac mass at r = 0".into(),
        ));
    }
    Ok(())
}

/// Cosine-mode form `1/(2l) + (1/l) Σ exp(-(nπ/l)² r) cos(nπy/l)`.
pub fn transverse_profile_series(r: f64, y: f64, l: f64) -> Result<f64> {
    check_args(r, y, l)?;
    let k = PI / l;
    let mut sum = 0.0;
    for n in 1..=MAX_TERMS {
        let nf = n as f64;
        let decay = (-(nf * k) * (nf * k) * r).exp();
        if decay < TERM_TOL {
            return Ok(0.5 / l + sum / l);
        }
        sum += decay * (nf * k * y).cos();
    }
    Err(Error::Numerical(format!(
        "cosine series for r = {r:e}, l = {l} not converged after {MAX_TERMS} terms"
    )))
}

/// Mirror-image form: free-space kernel `(4πr)^{-1/2} exp(-d²/4r)` summed
/// over the source and its reflections at `y = 2kl`, `k ∈ ℤ`.
pub fn transverse_profile_images(r: f64, y: f64, l: f64) -> Result<f64> {
    check_args(r, y, l)?;
    let pref = 1.0 / (4.0 * PI * r).sqrt();
    let four_r = 4.0 * r;
    let mut sum = (-y * y / four_r).exp();
    for k in 1..=MAX_TERMS {
        let shift = 2.0 * k as f64 * l;
        let near = shift - y.abs();
        if pref * (-near * near / four_r).exp() < TERM_TOL / l {
            return Ok(pref * sum);
        }
        let (a, b) = (y - shift, y + shift);
        sum += (-a * a / four_r).exp() + (-b * b / four_r).exp();
    }
    Err(Error::Numerical(format!(
        "image sum for r = {r:e}, l = {l} not converged after {MAX_TERMS} images"
    )))
}

/// Transverse profile `a(r, y)` in 1/m together with a flag that is set
/// when a truncation-level negative value was clamped to zero.
pub fn transverse_profile_checked(r: TravelParameter, y: f64, l: f64) -> Result<(f64, bool)> {
    let r = r.value();
    let crossover = SERIES_CROSSOVER_FACTOR * (l / PI) * (l / PI);
    let raw = if r < crossover {
        transverse_profile_images(r, y, l)?
    } else {
        transverse_profile_series(r, y, l)?
    };
    if raw < -NEGATIVE_TOL {
        return Err(Error::Numerical(format!(
            "transverse profile {raw:e} at r = {r:e}, y = {y} is below the truncation tolerance"
        )));
    }
    Ok(if raw < 0.0 { (0.0, true) } else { (raw, false) })
}

/// Transverse profile `a(r, y)` in 1/m; integrates to one over `[-l, l]`.
pub fn transverse_profile(r: TravelParameter, y: f64, l: f64) -> Result<f64> {
    transverse_profile_checked(r, y, l).map(|(v, _)| v)
}

/// Impulse response of the duct at one point: a Dirac pulse of weight
/// `amplitude` (mol·s/m³) arriving at `arrival_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedImpulse {
    pub arrival_time: f64,
    pub amplitude: f64,
    /// Number of transverse factors clamped from a tiny negative value.
    pub clamped: u32,
}

pub fn bounded_impulse(params: &ChannelParams, p: SpacePoint) -> Result<BoundedImpulse> {
    let Geometry::BoundedSquare { half_width } = params.geometry else {
        return Err(Error::Domain(
            "bounded response requested for an unbounded channel".into(),
        ));
    };
    if !(p.x > 0.0) {
        return Err(Error::Domain(format!(
            "bounded response needs x > 0 (got {})",
            p.x
        )));
    }
    let r = travel_parameter(params, p.x)?;
    let (ay, cy) = transverse_profile_checked(r, p.y, half_width)?;
    let (bz, cz) = transverse_profile_checked(r, p.z, half_width)?;
    Ok(BoundedImpulse {
        arrival_time: params.arrival_time(p.x),
        amplitude: params.released_amount / params.flow_speed * ay * bz,
        clamped: cy as u32 + cz as u32,
    })
}

/// Window edges are snapped by this many seconds so that samples landing
/// on the arrival time up to rounding count as inside.
const WINDOW_SNAP: f64 = 1e-9;

impl BoundedImpulse {
    /// Convolution with a rectangular release of duration `T_p`: a plateau
    /// of height `amplitude / T_p` on `[t_a, t_a + T_p)`.
    pub fn pulse_value(&self, pulse: PulseShape, t: f64) -> f64 {
        let start = self.arrival_time - WINDOW_SNAP;
        let end = self.arrival_time + pulse.duration - WINDOW_SNAP;
        if t >= start && t < end {
            self.amplitude / pulse.duration
        } else {
            0.0
        }
    }
}

pub fn pulse_response_bounded(
    params: &ChannelParams,
    p: SpacePoint,
    pulse: PulseShape,
    t: f64,
) -> Result<f64> {
    Ok(bounded_impulse(params, p)?.pulse_value(pulse, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 0.125;

    fn r(v: f64) -> TravelParameter {
        TravelParameter::new(v).unwrap()
    }

    #[test]
    fn well_mixed_limit() {
        let a = transverse_profile(r(10.0), 0.05, L).unwrap();
        assert!((a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn forms_agree_at_crossover() {
        let rstar = SERIES_CROSSOVER_FACTOR * (L / PI).powi(2);
        for y in [0.0, 0.01, 0.05, -0.1, L, -L] {
            let s = transverse_profile_series(rstar, y, L).unwrap();
            let i = transverse_profile_images(rstar, y, L).unwrap();
            assert!((s - i).abs() < 1e-9, "y={y}: {s} vs {i}");
        }
    }

    #[test]
    fn boundary_value_is_finite_and_symmetric() {
        let rr = r(0.011);
        let a = transverse_profile(rr, L, L).unwrap();
        let b = transverse_profile(rr, -L, L).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            transverse_profile(r(0.01), 0.2, L),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            transverse_profile(r(0.0), 0.0, L),
            Err(Error::Singular(_))
        ));
        assert!(TravelParameter::new(-1.0).is_err());
        let p = ChannelParams::table1_bounded();
        assert!(bounded_impulse(&p, SpacePoint::new(0.0, 0.0, 0.0)).is_err());
        assert!(bounded_impulse(&p, SpacePoint::new(1.0, 0.2, 0.0)).is_err());
        assert!(bounded_impulse(
            &ChannelParams::table1_unbounded(),
            SpacePoint::table1_receiver()
        )
        .is_err());
    }

    #[test]
    fn arrival_and_plateau() {
        let p = ChannelParams::table1_bounded();
        let imp = bounded_impulse(&p, SpacePoint::table1_receiver()).unwrap();
        assert_eq!(imp.arrival_time, 1.10 / 5.0);
        let a = transverse_profile(r(0.011), 0.0, L).unwrap();
        assert!((imp.amplitude - 0.32 / 5.0 * a * a).abs() < 1e-14);
        let pulse = PulseShape::new(1.0).unwrap();
        assert_eq!(imp.pulse_value(pulse, 0.2), 0.0);
        assert_eq!(imp.pulse_value(pulse, 0.5), imp.amplitude);
        assert_eq!(imp.pulse_value(pulse, 1.3), 0.0);
    }

    #[test]
    fn corner_amplitude_uses_boundary_profile() {
        let p = ChannelParams::table1_bounded();
        let imp = bounded_impulse(&p, SpacePoint::new(1.1, L, -L)).unwrap();
        let a = transverse_profile(r(0.011), L, L).unwrap();
        assert!((imp.amplitude - 0.32 / 5.0 * a * a).abs() < 1e-14);
    }

    #[test]
    fn far_downstream_is_fully_mixed() {
        let p = ChannelParams::table1_bounded();
        let imp = bounded_impulse(&p, SpacePoint::new(500.0, 0.03, 0.1)).unwrap();
        let mixed = 0.32 / 5.0 / (2.0 * L * 2.0 * L);
        assert!(((imp.amplitude - mixed) / mixed).abs() < 1e-12);
    }
}
