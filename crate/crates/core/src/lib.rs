//! Explicit deterministic measurement ensembles for phase retrieval and
//! low-rank PSD matrix recovery, with completeness certification and
//! convex recovery solvers.

mod error;
pub mod bench;
pub mod completeness;
pub mod frames;
pub mod hermitian;
pub mod linalg;
pub mod measurement;
pub mod nonsingular;
pub mod recovery;
pub mod sampling;

pub use error::{Error, Result};
pub use frames::{MeasurementEnsemble, NodeList, Recipe};
pub use hermitian::{HermitianMatrix, C64};
pub use measurement::{KernelBasis, MeasurementOperator};
