//! Flipped Legendre-Gauss-Radau collocation.
//!
//! Each mesh interval carries `n` Radau nodes that include its right end but
//! not its left end. States live at the left end of the horizon and at every
//! node, so the state polynomial on an interval is supported on its left end
//! plus its nodes; controls live at the nodes only. The dynamics are
//! enforced at the nodes and integrals use the matching Radau weights.

mod diff;
mod grid;
mod lgr;
mod transcribe;

use thiserror::Error;

pub use diff::{barycentric_weights, differentiation_matrix, lagrange_basis};
pub use grid::CollocationGrid;
pub use lgr::{legendre, lgr_nodes};
pub use transcribe::{CollocationSolution, Layout, Transcription};

use crate::nlp::NlpError;
use crate::ocp::OcpError;

#[derive(Debug, Error)]
pub enum CollocationError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("duplicate support point {value} at index {index}")]
    DuplicatePoint { index: usize, value: f64 },
    #[error("normalized position {s} outside [0, 1]")]
    OutsideHorizon { s: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite model output at the initial guess")]
    NonFiniteGuess,
    #[error(transparent)]
    Problem(#[from] OcpError),
    #[error(transparent)]
    Solver(#[from] NlpError),
}
