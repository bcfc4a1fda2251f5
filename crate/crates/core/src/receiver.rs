//! Metal-oxide sensor receiver: power-law resistance, voltage divider,
//! asymmetric first-order kinetics and signal-dependent Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::positive;
use crate::error::{Error, Result};
use crate::trace::{ConcentrationTrace, ConcentrationUnit, VoltageTrace};

/// Molar mass of ethanol, g/mol.
pub const ETHANOL_MOLAR_MASS: f64 = 46.07;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    /// R0, Ω.
    pub reference_resistance: f64,
    /// Power-law slope m (negative).
    pub sensitivity_slope: f64,
    /// Power-law intercept b.
    pub sensitivity_intercept: f64,
    /// Divider supply V_c, V.
    pub circuit_voltage: f64,
    /// Divider load R_L, Ω.
    pub load_resistance: f64,
    /// Time constant while the output rises, s.
    pub tau_rise: f64,
    /// Time constant while the output falls, s.
    pub tau_decay: f64,
    /// Noise scaling κ: noise std is κ·V.
    pub noise_kappa: f64,
    /// Clean-air resistance over R0 (Γ).
    pub clean_air_ratio: f64,
    /// Analyte molar mass, g/mol.
    pub molar_mass: f64,
    /// Lowest concentration fed to the power law, mg/L.
    pub concentration_floor: f64,
}

impl ReceiverParams {
    fn table1_common() -> Self {
        Self {
            reference_resistance: 302.8,
            sensitivity_slope: -1.03,
            sensitivity_intercept: 0.40,
            circuit_voltage: 5.0,
            load_resistance: 20_000.0,
            tau_rise: 0.23,
            tau_decay: 30.0,
            noise_kappa: 0.01,
            clean_air_ratio: 60.0,
            molar_mass: ETHANOL_MOLAR_MASS,
            concentration_floor: 1e-6,
        }
    }

    /// Sensor kinetics measured in the tunnel runs.
    pub fn table1_bounded() -> Self {
        Self::table1_common()
    }

    /// Sensor kinetics measured in the open-air runs (slower desorption).
    pub fn table1_unbounded() -> Self {
        Self {
            tau_rise: 0.05,
            tau_decay: 45.0,
            ..Self::table1_common()
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("reference_resistance", self.reference_resistance)?;
        positive("circuit_voltage", self.circuit_voltage)?;
        positive("load_resistance", self.load_resistance)?;
        positive("tau_rise", self.tau_rise)?;
        positive("tau_decay", self.tau_decay)?;
        positive("clean_air_ratio", self.clean_air_ratio)?;
        positive("molar_mass", self.molar_mass)?;
        positive("concentration_floor", self.concentration_floor)?;
        if !(self.sensitivity_slope.is_finite() && self.sensitivity_slope < 0.0) {
            return Err(Error::invalid(
                "sensitivity_slope",
                format!("must be < 0 (got {})", self.sensitivity_slope),
            ));
        }
        if !self.sensitivity_intercept.is_finite() {
            return Err(Error::invalid("sensitivity_intercept", "must be finite"));
        }
        if !(self.noise_kappa.is_finite() && self.noise_kappa >= 0.0) {
            return Err(Error::invalid(
                "noise_kappa",
                format!("must be >= 0 (got {})", self.noise_kappa),
            ));
        }
        Ok(())
    }

    /// Γ·R0, the resistance in clean air and the cap on the power law.
    pub fn clean_air_resistance(&self) -> f64 {
        self.clean_air_ratio * self.reference_resistance
    }

    /// Steady-state resistance at concentration `c` (mg/L).
    pub fn static_resistance(&self, c: f64) -> f64 {
        let c = c.max(self.concentration_floor);
        let r = self.reference_resistance
            * 10f64.powf(self.sensitivity_intercept)
            * c.powf(self.sensitivity_slope);
        r.min(self.clean_air_resistance())
    }

    /// Steady-state divider output at concentration `c` (mg/L).
    pub fn static_voltage(&self, c: f64) -> f64 {
        divider(
            self.circuit_voltage,
            self.load_resistance,
            self.static_resistance(c),
        )
    }

    /// Output voltage in clean air.
    pub fn baseline_voltage(&self) -> f64 {
        divider(
            self.circuit_voltage,
            self.load_resistance,
            self.clean_air_resistance(),
        )
    }

    /// Runs the first-order sensor kinetics over a concentration trace in
    /// mg/L, starting from `v0` at the first sample.
    ///
    /// Each step holds the static voltage of the step's first sample and
    /// applies the exact exponential update, so the result is exact for
    /// piecewise-constant input. The time constant is picked from the sign
    /// of the gap at the start of the step.
    pub fn integrate_kinetics(&self, c: &ConcentrationTrace, v0: f64) -> Result<VoltageTrace> {
        if c.unit != ConcentrationUnit::MilligramPerLitre {
            return Err(Error::Domain(
                "receiver expects concentration in mg/L; convert the trace first".into(),
            ));
        }
        if !(c.dt.is_finite() && c.dt > 0.0) {
            return Err(Error::Domain(format!(
                "sample spacing must be > 0 (got {})",
                c.dt
            )));
        }
        if !(0.0..=self.circuit_voltage).contains(&v0) {
            return Err(Error::Domain(format!(
                "initial voltage {v0} outside [0, {}]",
                self.circuit_voltage
            )));
        }
        let rise = (-c.dt / self.tau_rise).exp();
        let decay = (-c.dt / self.tau_decay).exp();
        let mut out = Vec::with_capacity(c.samples.len());
        let mut v = v0;
        for &ck in &c.samples {
            out.push(v);
            let vs = self.static_voltage(ck);
            let factor = if vs > v { rise } else { decay };
            v = vs + (v - vs) * factor;
        }
        VoltageTrace::new(c.t0, c.dt, out)
    }

    /// [`add_noise`] with this receiver's κ and supply voltage.
    pub fn add_noise(&self, v: &VoltageTrace, seed: u64) -> NoisyTrace {
        add_noise(
            v,
            self.noise_kappa,
            self.circuit_voltage,
            ChaCha8Rng::seed_from_u64(seed),
        )
    }
}

fn divider(v_c: f64, r_load: f64, r_sensor: f64) -> f64 {
    v_c * r_load / (r_load + r_sensor)
}

/// Noisy voltage trace and the number of samples clipped into `[0, V_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTrace {
    pub trace: VoltageTrace,
    pub clipped: usize,
}

/// Adds independent `N(0, κ²V²)` noise to every sample. The generator is
/// taken by value; the same generator state yields the same trace.
pub fn add_noise<R: Rng>(v: &VoltageTrace, kappa: f64, v_c: f64, mut rng: R) -> NoisyTrace {
    if kappa == 0.0 {
        return NoisyTrace {
            trace: v.clone(),
            clipped: 0,
        };
    }
    let mut clipped = 0;
    let samples = v
        .samples
        .iter()
        .map(|&x| {
            let z: f64 = rng.sample(StandardNormal);
            let noisy = x + kappa * x * z;
            if noisy < 0.0 || noisy > v_c {
                clipped += 1;
            }
            noisy.clamp(0.0, v_c)
        })
        .collect();
    NoisyTrace {
        trace: VoltageTrace {
            t0: v.t0,
            dt: v.dt,
            samples,
        },
        clipped,
    }
}

/// Intercept `b` that puts the power law through a datasheet anchor:
/// `R_s/R0 = anchor_ratio` at `anchor_concentration` mg/L.
pub fn calibrate_intercept(
    anchor_concentration: f64,
    anchor_ratio: f64,
    slope: f64,
) -> Result<f64> {
    positive("anchor_concentration", anchor_concentration)?;
    positive("anchor_ratio", anchor_ratio)?;
    Ok(anchor_ratio.log10() - slope * anchor_concentration.log10())
}

/// R0 from the clean-air resistance and the datasheet ratio Γ.
pub fn reference_resistance(clean_air_resistance: f64, clean_air_ratio: f64) -> Result<f64> {
    positive("clean_air_resistance", clean_air_resistance)?;
    positive("clean_air_ratio", clean_air_ratio)?;
    Ok(clean_air_resistance / clean_air_ratio)
}

/// 1 mol/m³ of a species with molar mass `M` g/mol is `M` g/m³ = `M` mg/L.
pub fn mol_per_m3_to_mg_per_l(c: f64, molar_mass: f64) -> f64 {
    c * molar_mass
}

impl ConcentrationTrace {
    /// Converts a mol/m³ trace to mg/L; a trace already in mg/L is copied.
    pub fn to_mg_per_l(&self, molar_mass: f64) -> ConcentrationTrace {
        let samples = match self.unit {
            ConcentrationUnit::MilligramPerLitre => self.samples.clone(),
            ConcentrationUnit::MolPerCubicMetre => self
                .samples
                .iter()
                .map(|&c| mol_per_m3_to_mg_per_l(c, molar_mass))
                .collect(),
        };
        ConcentrationTrace {
            t0: self.t0,
            dt: self.dt,
            unit: ConcentrationUnit::MilligramPerLitre,
            samples,
        }
    }
}
