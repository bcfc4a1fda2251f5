//! Monte Carlo particle oracle for the closed-form channel responses.
//!
//! Particles are advected with the mean wind and take Gaussian diffusion
//! steps of standard deviation `√(2K·dt)` per axis. Walls reflect
//! specularly; a step that overshoots by more than a full duct width is
//! folded repeatedly until it lands inside. Particles are split into a
//! fixed number of lanes, each with its own ChaCha stream derived from the
//! master seed, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    transverse_profile, unbounded_impulse, ChannelParams, Geometry, SpacePoint, TravelParameter,
};
use crate::error::{Error, Result};
use crate::metrics::Histogram;
use crate::quadrature::gauss_kronrod;

const LANES: usize = 64;

/// Smallest ensemble for which comparison bands are considered meaningful.
pub const MIN_PARTICLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n_particles: usize,
    /// Random-walk step, s.
    pub dt: f64,
    pub seed: u64,
    /// Transverse histogram bins across the duct.
    pub bins: usize,
    /// Half-width of the cubic receiver cell, m.
    pub probe_half_width: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_particles: 1_000_000,
            dt: 1e-3,
            seed: 2024,
            bins: 20,
            probe_half_width: 0.02,
        }
    }
}

/// Checks the parameters the oracle needs. Unlike
/// [`ChannelParams::validate`] this accepts `K = 0` (pure advection).
pub fn validate_oracle(params: &ChannelParams, cfg: &OracleConfig) -> Result<()> {
    let invalid = |f: &str, why: String| Err(Error::invalid(f, why));
    if !(params.released_amount > 0.0) {
        return invalid("released_amount", "must be > 0".into());
    }
    if !(params.flow_speed > 0.0) {
        return invalid("flow_speed", "must be > 0".into());
    }
    if !(params.diffusivity.is_finite() && params.diffusivity >= 0.0) {
        return invalid("diffusivity", "must be >= 0 for the oracle".into());
    }
    if cfg.n_particles == 0 {
        return invalid("oracle.n_particles", "must be >= 1".into());
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return invalid("oracle.dt", format!("must be > 0 (got {})", cfg.dt));
    }
    if cfg.bins == 0 {
        return invalid("oracle.bins", "must be >= 1".into());
    }
    if !(cfg.probe_half_width > 0.0) {
        return invalid("oracle.probe_half_width", "must be > 0".into());
    }
    match params.geometry {
        Geometry::Unbounded { source_height } if !(source_height >= 0.0) => {
            invalid("geometry.source_height", "must be >= 0".into())
        }
        Geometry::BoundedSquare { half_width } => {
            if !(half_width > 0.0) {
                return invalid("geometry.half_width", "must be > 0".into());
            }
            let step = (2.0 * params.diffusivity * cfg.dt).sqrt();
            if step >= half_width / 10.0 {
                return invalid(
                    "oracle.dt",
                    format!(
                        "diffusion step {step:.4e} m must stay below a tenth of the half-width \
                         ({:.4e} m)",
                        half_width / 10.0
                    ),
                );
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Reflects `v` into `[-l, l]`, folding as many times as needed.
pub fn fold_into_interval(v: f64, l: f64) -> f64 {
    if (-l..=l).contains(&v) {
        return v;
    }
    let period = 4.0 * l;
    let mut s = (v + l).rem_euclid(period);
    if s > 2.0 * l {
        s = period - s;
    }
    s - l
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Walls {
    Ground { floor: f64 },
    Duct { half_width: f64 },
}

/// Particle ensemble released at the origin at t = 0.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    /// Displacement from the advected centre `(u·t, 0, 0)`.
    offsets: Vec<[f64; 3]>,
    lanes: Vec<ChaCha8Rng>,
    time: f64,
    walls: Walls,
    longitudinal: bool,
    params: ChannelParams,
    dt: f64,
}

impl ParticleCloud {
    fn release(params: &ChannelParams, cfg: &OracleConfig) -> Result<Self> {
        validate_oracle(params, cfg)?;
        let (walls, longitudinal) = match params.geometry {
            Geometry::Unbounded { source_height } => (
                Walls::Ground {
                    floor: -source_height,
                },
                true,
            ),
            Geometry::BoundedSquare { half_width } => (Walls::Duct { half_width }, false),
        };
        let lanes = (0..LANES)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Ok(Self {
            offsets: vec![[0.0; 3]; cfg.n_particles],
            lanes,
            time: 0.0,
            walls,
            longitudinal,
            params: *params,
            dt: cfg.dt,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Mass carried by each particle, mol.
    pub fn particle_mass(&self) -> f64 {
        self.params.released_amount / self.offsets.len() as f64
    }

    /// Steps the ensemble forward to time `t` using steps no longer than
    /// the configured `dt`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if !(t >= self.time) {
            return Err(Error::Domain(format!(
                "cannot step back from {} s to {t} s",
                self.time
            )));
        }
        let steps = ((t - self.time) / self.dt).ceil() as usize;
        if steps > 0 {
            let h = (t - self.time) / steps as f64;
            let sigma = (2.0 * self.params.diffusivity * h).sqrt();
            let walls = self.walls;
            let longitudinal = self.longitudinal;
            let chunk = self.offsets.len().div_ceil(LANES).max(1);
            self.offsets
                .par_chunks_mut(chunk)
                .zip(self.lanes.par_iter_mut())
                .for_each(|(particles, rng)| {
                    if sigma == 0.0 {
                        return;
                    }
                    for p in particles.iter_mut() {
                        for _ in 0..steps {
                            if longitudinal {
                                p[0] += sigma * rng.sample::<f64, _>(StandardNormal);
                            }
                            p[1] += sigma * rng.sample::<f64, _>(StandardNormal);
                            p[2] += sigma * rng.sample::<f64, _>(StandardNormal);
                            match walls {
                                Walls::Ground { floor } => {
                                    if p[2] < floor {
                                        p[2] = 2.0 * floor - p[2];
                                    }
                                }
                                Walls::Duct { half_width } => {
                                    p[1] = fold_into_interval(p[1], half_width);
                                    p[2] = fold_into_interval(p[2], half_width);
                                }
                            }
                        }
                    }
                });
        }
        self.time = t;
        Ok(())
    }

    /// Absolute particle positions.
    pub fn positions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let cx = self.params.flow_speed * self.time;
        self.offsets.iter().map(move |o| [cx + o[0], o[1], o[2]])
    }

    pub fn mean_position(&self) -> [f64; 3] {
        let n = self.offsets.len() as f64;
        let mut s = [0.0; 3];
        for p in self.positions() {
            for i in 0..3 {
                s[i] += p[i];
            }
        }
        s.map(|v| v / n)
    }

    /// Number of particles inside the axis-aligned box.
    pub fn count_in_box(&self, center: SpacePoint, half: [f64; 3]) -> usize {
        let c = [center.x, center.y, center.z];
        self.positions()
            .filter(|p| (0..3).all(|i| (p[i] - c[i]).abs() <= half[i]))
            .count()
    }

    /// Histogram of the y (axis 1) or z (axis 2) coordinate over `[-l, l]`.
    pub fn transverse_histogram(&self, axis: usize, bins: usize, l: f64) -> Histogram {
        let width = 2.0 * l / bins as f64;
        let edges = (0..=bins).map(|i| -l + i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for o in &self.offsets {
            let i = (((o[axis] + l) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    /// True when no particle has left the duct (always true for open air
    /// above the ground plane in z).
    pub fn all_inside_walls(&self) -> bool {
        match self.walls {
            Walls::Duct { half_width: l } => self
                .offsets
                .iter()
                .all(|o| o[1].abs() <= l && o[2].abs() <= l),
            Walls::Ground { floor } => self.offsets.iter().all(|o| o[2] >= floor),
        }
    }

    /// Every particle sits exactly on the advected centre.
    pub fn is_pure_advection(&self) -> bool {
        self.offsets.iter().all(|o| *o == [0.0; 3])
    }
}

/// Releases an open-air ensemble and advances it to time `t`.
pub fn simulate_unbounded(
    params: &ChannelParams,
    cfg: &OracleConfig,
    t: f64,
) -> Result<ParticleCloud> {
    if !matches!(params.geometry, Geometry::Unbounded { .. }) {
        return Err(Error::Domain(
            "simulate_unbounded needs an unbounded channel".into(),
        ));
    }
    let mut cloud = ParticleCloud::release(params, cfg)?;
    cloud.advance_to(t)?;
    Ok(cloud)
}

/// Releases a duct ensemble and advances it to the time `r/K` at which the
/// transverse spread corresponds to travel parameter `r`.
pub fn simulate_bounded(
    params: &ChannelParams,
    cfg: &OracleConfig,
    r: TravelParameter,
) -> Result<ParticleCloud> {
    if !matches!(params.geometry, Geometry::BoundedSquare { .. }) {
        return Err(Error::Domain(
            "simulate_bounded needs a bounded channel".into(),
        ));
    }
    if params.diffusivity == 0.0 && r.value() > 0.0 {
        return Err(Error::Domain(
            "travel parameter r > 0 is unreachable with K = 0".into(),
        ));
    }
    let mut cloud = ParticleCloud::release(params, cfg)?;
    let t = if params.diffusivity > 0.0 {
        r.value() / params.diffusivity
    } else {
        0.0
    };
    cloud.advance_to(t)?;
    Ok(cloud)
}

/// One analytic-vs-empirical comparison cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub within_band: bool,
}

impl BinComparison {
    fn new(label: String, lo: f64, hi: f64, analytic: f64, empirical: f64, se: f64) -> Self {
        let within_band = (empirical - analytic).abs() <= 3.0 * se;
        Self {
            label,
            lo,
            hi,
            analytic,
            empirical,
            standard_error: se,
            within_band,
        }
    }

    pub fn z_score(&self) -> f64 {
        (self.empirical - self.analytic) / self.standard_error
    }
}

/// Fraction of comparisons whose empirical value lies inside its
/// three-standard-error band.
pub fn fraction_within(bins: &[BinComparison]) -> f64 {
    if bins.is_empty() {
        return 0.0;
    }
    bins.iter().filter(|b| b.within_band).count() as f64 / bins.len() as f64
}

/// Transverse (y) histogram probabilities against `∫ a(r, y) dy` per bin.
/// Standard errors are binomial, from the analytic bin probability.
pub fn compare_transverse(
    cloud: &ParticleCloud,
    r: TravelParameter,
    bins: usize,
) -> Result<Vec<BinComparison>> {
    let Walls::Duct { half_width: l } = cloud.walls else {
        return Err(Error::Domain(
            "transverse comparison needs a duct ensemble".into(),
        ));
    };
    let hist = cloud.transverse_histogram(1, bins, l);
    let n = cloud.len() as f64;
    hist.edges
        .windows(2)
        .zip(&hist.counts)
        .enumerate()
        .map(|(i, (w, &count))| {
            let p = gauss_kronrod(
                |y| transverse_profile(r, y, l).unwrap_or(f64::NAN),
                w[0],
                w[1],
                1e-11,
                1e-14,
            )?;
            let se = (p * (1.0 - p) / n).sqrt();
            Ok(BinComparison::new(
                format!("y_bin_{i}"),
                w[0],
                w[1],
                p,
                count as f64 / n,
                se,
            ))
        })
        .collect()
}

/// Mean concentration in a cube around `center` from the particles versus
/// the closed-form puff averaged over the same cube, both in mol/m³.
pub fn compare_probe(
    cloud: &ParticleCloud,
    center: SpacePoint,
    half_width: f64,
) -> Result<BinComparison> {
    let Walls::Ground { .. } = cloud.walls else {
        return Err(Error::Domain(
            "probe comparison needs an open-air ensemble".into(),
        ));
    };
    let params = cloud.params;
    let t = cloud.time;
    let h = half_width;
    let volume = (2.0 * h).powi(3);
    let integral = gauss_kronrod(
        |x| {
            gauss_kronrod(
                |y| {
                    gauss_kronrod(
                        |z| {
                            unbounded_impulse(&params, SpacePoint::new(x, y, z), t)
                                .unwrap_or(f64::NAN)
                        },
                        center.z - h,
                        center.z + h,
                        1e-9,
                        0.0,
                    )
                    .unwrap_or(f64::NAN)
                },
                center.y - h,
                center.y + h,
                1e-9,
                0.0,
            )
            .unwrap_or(f64::NAN)
        },
        center.x - h,
        center.x + h,
        1e-9,
        0.0,
    )?;
    if !integral.is_finite() {
        return Err(Error::Numerical("probe quadrature failed".into()));
    }
    let analytic = integral / volume;
    let n = cloud.len() as f64;
    let m = cloud.particle_mass();
    let p = analytic * volume / params.released_amount;
    let se = (n * p * (1.0 - p)).max(0.0).sqrt() * m / volume;
    let count = cloud.count_in_box(center, [h; 3]);
    Ok(BinComparison::new(
        format!("probe_x{:.3}_t{:.3}", center.x, t),
        center.x - h,
        center.x + h,
        analytic,
        count as f64 * m / volume,
        se,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> OracleConfig {
        OracleConfig {
            n_particles: n,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn folding_handles_multiple_reflections() {
        let l = 0.125;
        assert_eq!(fold_into_interval(0.05, l), 0.05);
        assert!((fold_into_interval(0.15, l) - 0.10).abs() < 1e-15);
        assert!((fold_into_interval(-0.15, l) + 0.10).abs() < 1e-15);
        // 0.45 → reflect at 0.125 → -0.2 → reflect at -0.125 → -0.05
        assert!((fold_into_interval(0.45, l) + 0.05).abs() < 1e-15);
        for i in -200..200 {
            let v = fold_into_interval(i as f64 * 0.0731, l);
            assert!(v.abs() <= l);
        }
    }

    #[test]
    fn zero_diffusivity_is_pure_advection() {
        let mut p = ChannelParams::table1_unbounded();
        p.diffusivity = 0.0;
        let cloud = simulate_unbounded(&p, &small(1000), 0.22).unwrap();
        assert!(cloud.is_pure_advection());
        assert!(cloud.positions().all(|q| q == [5.0 * 0.22, 0.0, 0.0]));
    }

    #[test]
    fn duct_walls_contain_every_particle() {
        let p = ChannelParams::table1_bounded();
        let cloud =
            simulate_bounded(&p, &small(20_000), TravelParameter::new(0.05).unwrap()).unwrap();
        assert!(cloud.all_inside_walls());
        assert_eq!(cloud.len(), 20_000);
    }

    #[test]
    fn same_seed_same_cloud() {
        let p = ChannelParams::table1_unbounded();
        let a = simulate_unbounded(&p, &small(5000), 0.1).unwrap();
        let b = simulate_unbounded(&p, &small(5000), 0.1).unwrap();
        assert!(a.positions().eq(b.positions()));
    }

    #[test]
    fn coarse_dt_rejected_in_duct() {
        let p = ChannelParams::table1_bounded();
        let cfg = OracleConfig {
            dt: 0.01,
            ..small(10)
        };
        assert!(validate_oracle(&p, &cfg).is_err());
    }
}
