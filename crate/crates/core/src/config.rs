//! JSON scenario files.
//!
//! A scenario starts from one of the laboratory presets named by its
//! `defaults` key (`table1_bounded` when absent) and overrides any subset
//! of fields. Nested objects merge key by key, except objects carrying a
//! `kind` tag, which replace the preset value as a whole.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use crate::channel::{ChannelParams, PulseShape, SpacePoint};
use crate::error::{Error, Result};
use crate::oracle::{validate_oracle, OracleConfig};
use crate::receiver::ReceiverParams;
use crate::sequence::{SimulationGrid, TransmissionSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Table1Bounded,
    Table1Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Pulse duration, s.
    pub pulse_duration: f64,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub symbol_period: Option<f64>,
    /// Explicit pulse start times, s; overrides `count`/`symbol_period`.
    #[serde(default)]
    pub starts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Largest model shift searched during alignment, s.
    pub max_lag: f64,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub defaults: Preset,
    pub channel: ChannelParams,
    pub receiver_position: SpacePoint,
    pub receiver: ReceiverParams,
    pub schedule: ScheduleConfig,
    pub grid: GridConfig,
    pub seed: u64,
    pub validation: ValidationConfig,
    pub oracle: OracleConfig,
}

impl ScenarioConfig {
    pub fn preset(preset: Preset) -> Self {
        let (channel, receiver) = match preset {
            Preset::Table1Bounded => (
                ChannelParams::table1_bounded(),
                ReceiverParams::table1_bounded(),
            ),
            Preset::Table1Unbounded => (
                ChannelParams::table1_unbounded(),
                ReceiverParams::table1_unbounded(),
            ),
        };
        Self {
            defaults: preset,
            channel,
            receiver_position: SpacePoint::table1_receiver(),
            receiver,
            schedule: ScheduleConfig {
                pulse_duration: 1.0,
                count: Some(1),
                symbol_period: None,
                starts: None,
            },
            grid: GridConfig {
                dt: None,
                t_end: None,
            },
            seed: 42,
            validation: ValidationConfig {
                max_lag: 2.0,
                histogram_bins: 40,
            },
            oracle: OracleConfig::default(),
        }
    }

    /// Parses, expands and fully validates a scenario document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(user: Value) -> Result<Self> {
        let cfg = Self::expand(user)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and expands a document, checking field names and types but
    /// not value ranges.
    pub fn parse(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::Config {
            path: "<document>".into(),
            message: e.to_string(),
        })?;
        Self::expand(user)
    }

    fn expand(user: Value) -> Result<Self> {
        let Value::Object(mut user) = user else {
            return Err(Error::Config {
                path: "<document>".into(),
                message: "top level must be a JSON object".into(),
            });
        };
        let preset = match user.get("defaults") {
            None => Preset::Table1Bounded,
            Some(v) => serde_json::from_value(v.clone()).map_err(|_| Error::Config {
                path: "defaults".into(),
                message: format!(
                    "unknown preset {v} (expected \"table1_bounded\" or \"table1_unbounded\")"
                ),
            })?,
        };
        user.insert(
            "defaults".into(),
            serde_json::to_value(preset).expect("preset serialises"),
        );

        let mut base = serde_json::to_value(Self::preset(preset)).expect("preset serialises");
        // explicit start times supersede the preset pulse count
        if let Some(Value::Object(s)) = user.get("schedule") {
            if s.contains_key("starts") && !s.contains_key("count") {
                base["schedule"]["count"] = Value::Null;
            }
        }
        merge(&mut base, Value::Object(user));

        serde_path_to_error::deserialize(base).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Checks only what the particle oracle needs; `K = 0` is allowed.
    pub fn validate_for_oracle(&self) -> Result<()> {
        self.check_position()?;
        validate_oracle(&self.channel, &self.oracle).map_err(|e| match e {
            Error::InvalidParameter { field, reason } if field.starts_with("oracle.") => {
                Error::Config {
                    path: field,
                    message: reason,
                }
            }
            Error::InvalidParameter { field, reason } => Error::Config {
                path: format!("channel.{field}"),
                message: reason,
            },
            other => other,
        })
    }

    fn check_position(&self) -> Result<()> {
        let p = self.receiver_position;
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(cfg_err("receiver_position", "coordinates must be finite"));
        }
        if !(p.x > 0.0) {
            return Err(cfg_err(
                "receiver_position.x",
                &format!("must be > 0 (got {})", p.x),
            ));
        }
        Ok(())
    }

    /// Checks every section and reports the first offending field by its
    /// dotted path.
    pub fn validate(&self) -> Result<()> {
        let scoped = |section: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::Config {
                    path: format!("{section}.{field}"),
                    message: reason,
                },
                other => other,
            })
        };
        scoped("channel", self.channel.validate())?;
        scoped("receiver", self.receiver.validate())?;
        self.check_position()?;
        self.transmission_schedule()?;
        self.simulation_grid()?;
        if !(self.validation.max_lag.is_finite() && self.validation.max_lag >= 0.0) {
            return Err(cfg_err(
                "validation.max_lag",
                &format!("must be >= 0 (got {})", self.validation.max_lag),
            ));
        }
        if self.validation.histogram_bins < 2 {
            return Err(cfg_err("validation.histogram_bins", "must be >= 2"));
        }
        self.validate_for_oracle()
    }

    pub fn transmission_schedule(&self) -> Result<TransmissionSchedule> {
        let s = &self.schedule;
        let pulse = PulseShape::new(s.pulse_duration).map_err(|_| {
            cfg_err(
                "schedule.pulse_duration",
                &format!("must be > 0 (got {})", s.pulse_duration),
            )
        })?;
        if let Some(starts) = &s.starts {
            if let Some(n) = s.count {
                if n != starts.len() {
                    return Err(cfg_err(
                        "schedule.count",
                        &format!("{n} disagrees with {} explicit starts", starts.len()),
                    ));
                }
            }
            return TransmissionSchedule::from_starts(starts.clone(), pulse)
                .map_err(|e| cfg_err("schedule.starts", &reason(e)));
        }
        let count = s.count.unwrap_or(1);
        match s.symbol_period {
            Some(t) => TransmissionSchedule::regular(count, t, pulse)
                .map_err(|e| cfg_err("schedule.symbol_period", &reason(e))),
            None if count == 1 => Ok(TransmissionSchedule::single(pulse)),
            None => Err(cfg_err("schedule.symbol_period", "required when count > 1")),
        }
    }

    pub fn simulation_grid(&self) -> Result<SimulationGrid> {
        let sched = self.transmission_schedule()?;
        let to_cfg = |e: Error| match e {
            Error::InvalidParameter { field, reason } => Error::Config {
                path: field,
                message: reason,
            },
            other => other,
        };
        let auto = SimulationGrid::default_for(&sched, &self.receiver).map_err(to_cfg)?;
        SimulationGrid::new(
            self.grid.dt.unwrap_or(auto.dt),
            self.grid.t_end.unwrap_or(auto.t_end),
            &sched,
        )
        .map_err(to_cfg)
    }
}

fn cfg_err(path: &str, message: &str) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn reason(e: Error) -> String {
    match e {
        Error::InvalidParameter { reason, .. } => reason,
        other => other.to_string(),
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if is_plain_object(slot) && is_plain_object(&v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn is_plain_object(v: &Value) -> bool {
    matches!(v, Value::Object(m) if !m.contains_key("kind"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Geometry;

    #[test]
    fn empty_is_bounded_preset() {
        let c = ScenarioConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ScenarioConfig::preset(Preset::Table1Bounded));
    }

    #[test]
    fn partial_override_merges() {
        let c = ScenarioConfig::from_json_str(
            r#"{"defaults":"table1_unbounded","channel":{"flow_speed":4.0},"schedule":{"count":3,"symbol_period":10}}"#,
        )
        .unwrap();
        assert_eq!(c.channel.flow_speed, 4.0);
        assert_eq!(c.channel.diffusivity, 0.05);
        assert_eq!(c.receiver.tau_decay, 45.0);
        assert_eq!(c.transmission_schedule().unwrap().count(), 3);
    }

    #[test]
    fn tagged_geometry_replaces() {
        let c = ScenarioConfig::from_json_str(
            r#"{"channel":{"geometry":{"kind":"unbounded","source_height":0.5}}}"#,
        )
        .unwrap();
        assert_eq!(
            c.channel.geometry,
            Geometry::Unbounded { source_height: 0.5 }
        );
    }

    #[test]
    fn field_paths_in_errors() {
        let e = ScenarioConfig::from_json_str(r#"{"channel":{"diffusivity":-0.05}}"#).unwrap_err();
        assert_eq!(
            e.to_string(),
            "config error at `channel.diffusivity`: must be > 0 (got -0.05)"
        );
        let e = ScenarioConfig::from_json_str(r#"{"receiver":{"tau_rise":"fast"}}"#).unwrap_err();
        assert!(e.to_string().contains("`receiver.tau_rise`"), "{e}");
        let e = ScenarioConfig::from_json_str(r#"{"channel":{"wind":1}}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field `wind`"), "{e}");
        let e = ScenarioConfig::from_json_str(r#"{"defaults":"outdoor"}"#).unwrap_err();
        assert!(e.to_string().contains("`defaults`"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn explicit_starts() {
        let c = ScenarioConfig::from_json_str(r#"{"schedule":{"starts":[0,5,12]}}"#).unwrap();
        assert_eq!(
            c.transmission_schedule().unwrap().starts(),
            &[0.0, 5.0, 12.0]
        );
        let e = ScenarioConfig::from_json_str(r#"{"schedule":{"starts":[0,5],"count":3}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("schedule.count"));
    }
}
