//! Quantum fractals in a one-dimensional box and the Bohmian trajectories
//! they guide.
//!
//! * [`domain`]: box parameters, eigenbasis, exact time phases.
//! * [`spectral`]: state construction and termwise evaluation.
//! * [`dynamics`]: guidance velocity, adaptive trajectories, ladder limits.
//! * [`observables`]: density, phase, quantum potential and energies.
//! * [`fractal`]: curve-length and spectral-slope dimension estimates.
//! * [`io`]: run configuration and file formats.
//! * [`commands`]: the CLI commands as library calls.

pub mod commands;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod fractal;
pub mod io;
pub mod observables;
pub mod spectral;

pub use domain::{BoxDomain, Mode, PeriodFraction, TimePoint};
pub use dynamics::{
    ensemble, integrate, integrate_limit, velocity, IntegratorOptions, LimitTrajectory, Sample,
    Trajectory, TruncationLadder,
};
pub use error::{Error, Result};
pub use spectral::{SpectralState, StateLabel, Term, WavefieldSample};
