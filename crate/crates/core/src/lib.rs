//! Simulation of odor-based molecular communication links: closed-form
//! channel responses for open-air and ducted propagation, a metal-oxide
//! sensor receiver model, multi-pulse sequences, a particle-tracking
//! reference, and validation against measured traces.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod quadrature;
pub mod receiver;
pub mod sequence;
pub mod trace;

pub use channel::{
    bounded_impulse, pulse_response, transverse_profile, travel_parameter, unbounded_impulse,
    ChannelParams, Geometry, PiecewiseDiffusivity, PulseShape, SpacePoint, TravelParameter,
};
pub use config::{Preset, ScenarioConfig};
pub use error::{Error, Result};
pub use io::{align, load_csv, resample, save_csv, validate, RawTrace, UniformGrid};
pub use metrics::ValidationReport;
pub use receiver::{NoisyTrace, ReceiverParams};
pub use sequence::{
    end_to_end, run_chain, superpose, ChainOutput, SimulationGrid, TransmissionSchedule,
};
pub use trace::{ConcentrationTrace, ConcentrationUnit, VoltageTrace};
