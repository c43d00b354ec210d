//! Time-dependent photoionization of Li₂ rotational wave packets and readout
//! of a binary register stored in the relative phases of rovibrational
//! levels.
//!
//! Pipeline: [`potentials`] and [`boundstates`] give the rovibrational levels,
//! [`angmom`] the rotational coupling between bound and ion channels,
//! [`propagator`] drives the coupled radial equations through the pulse, and
//! [`spectra`] turns final continuum amplitudes into photoelectron spectra and
//! decoded register values. [`experiment`] ties these together from a config.

pub mod angmom;
pub mod boundstates;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod potentials;
pub mod propagator;
pub mod quantumstate;
pub mod selftest;
pub mod spectra;
pub mod units;

pub use angmom::{IonAngular, QuantumDefects};
pub use boundstates::{LevelTable, RovibLevel};
pub use error::{Error, Result};
pub use experiment::{ArtifactSet, DecodeOutcome, ExperimentConfig, RegisterBasis, Scenario, Simulator};
pub use grid::{EnergyGrid, RadialGrid};
pub use potentials::{CurveLabel, MolecularModel};
pub use propagator::{PropagationConfig, Propagator, PulseParams};
pub use quantumstate::{ChannelLabel, PhaseRegister, RotationalComponents, WavepacketState};
pub use spectra::{BandTable, DecodeReport, DecoderCalibration, SpectrumResult};
