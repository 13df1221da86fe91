//! Homodyne measurement: quadrature densities, samplers, trace synthesis and
//! temporal-mode projection.
//!
//! Convention throughout: `x = (a + a†)/√2`, vacuum variance 1/2.

mod sampler;
mod trace;
mod wavefunction;

use thiserror::Error;

use crate::modes::ModeError;

pub use sampler::{
    joint_sample_two_modes, joint_sample_two_modes_with, sample_quadratures, sample_quadratures_with,
    JointQuadratureSample, JointTable, PhaseSchedule, QuadratureSample, QuadratureTable, CELLS_2D, GRID_1D, X_RANGE,
};
pub use trace::{
    embed_quadratures, project_trace, read_quadrature_csv, read_trace_binary, read_trace_csv, synthesize_trace,
    vacuum_trace, write_quadrature_csv, write_trace_binary, write_trace_csv, QuadratureRecord, QuadratureTrace,
    TraceSynthesizer,
};
pub use wavefunction::{fock_quadrature_pdf, hermite_functions, mixture_pdf, quadrature_pdf, MAX_FOCK};

#[derive(Debug, Error)]
pub enum HomodyneError {
    #[error("Fock number {n} exceeds the supported cutoff {max}")]
    CutoffExceeded { n: usize, max: usize },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("requested zero samples")]
    EmptyRequest,
    #[error("analysis modes are not orthogonal (overlap {overlap:e})")]
    ModesNotOrthogonal { overlap: f64 },
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed file: {0}")]
    Format(String),
}
