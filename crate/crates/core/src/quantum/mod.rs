//! Dense complex linear algebra and quantum states for registers of up to
//! ten qubits.

pub mod eigen;
pub mod matrix;
pub mod measure;
pub mod noise;
pub mod pauli;
pub mod state;

use thiserror::Error;

pub use eigen::{hermitian_eigensystem, hermitian_eigenvalues, EigenPair};
pub use matrix::{kron, ComplexMatrix, C64};
pub use measure::{measure_projective, ProjectiveMeasurement};
pub use noise::{apply_noise, MixtureComponent, NoiseModel};
pub use pauli::{Pauli, PauliString};
pub use state::{fidelity, make_theta_phase_state, make_theta_state, make_w_state, DensityMatrix, PureState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("qubit count {n} outside supported range {min}..={max}")]
    QubitCount { n: usize, min: usize, max: usize },
    #[error("matrix is not Hermitian: entry ({row}, {col}) deviates by {deviation:.3e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("Jacobi iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("density matrix trace {0} differs from 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("mixture weights invalid (sum {0})")]
    BadWeights(f64),
    #[error("invalid noise parameter: {0}")]
    NoiseParameter(String),
    #[error("invalid projective measurement: {0}")]
    IncompleteMeasurement(String),
    #[error("{0}")]
    Parse(String),
}
