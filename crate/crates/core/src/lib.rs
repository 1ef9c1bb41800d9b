//! Synthesis of multi-polarization static passive electromagnetic skins.
//!
//! A skin is a `P × Q` grid of rectangular-patch meta-atoms. Two plane waves with
//! orthogonal polarizations (TE and TM) illuminate it at the same frequency, and
//! the layout is optimized so that each polarization is reflected towards its own
//! direction. The pieces are:
//!
//! - [`wavegeom`]: wave vectors, polarization bases, direction cosines.
//! - [`atoms`]: atom descriptors, the synthetic reflection model, table I/O, sampling.
//! - [`surrogate`]: the Ordinary Kriging twin of the atom response and its lookup tables.
//! - [`fields`]: surface currents and far-field patterns of a layout.
//! - [`objective`]: the two-polarization cost function.
//! - [`pso`]: a bound-constrained particle swarm optimizer.
//! - [`pipeline`]: the synthesis loop, the phase-conjugation reference designer, reports.
//! - [`config`] and [`cli`]: the JSON run configuration and the command-line surface.

pub mod atoms;
pub mod cli;
pub mod config;
pub mod fields;
pub mod objective;
pub mod pipeline;
pub mod pso;
pub mod surrogate;
pub mod wavegeom;

pub use atoms::{AtomBounds, AtomDescriptor, CellSpec, GammaSource, ReflectionSample, SyntheticAtom};
pub use fields::{EmsLayout, FarFieldPattern, GammaMap};
pub use pipeline::{synthesize, SynthesisResult};
pub use surrogate::{GammaLut, GammaTwin};
pub use wavegeom::{Direction, PlaneWaveSpec, Polarization, Uv, Vec3C};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Atom(#[from] atoms::AtomError),
    #[error(transparent)]
    Surrogate(#[from] surrogate::SurrogateError),
    #[error(transparent)]
    Field(#[from] fields::FieldError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
