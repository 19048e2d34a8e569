use serde::{Deserialize, Serialize};

use super::eigen::hermitian_eigensystem;
use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use super::QuantumError;

pub const NORM_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// Largest register handled by the dense simulator.
pub const MAX_QUBITS: usize = 10;

/// Unit-norm state vector over `n` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, QuantumError> {
        let n_qubits = qubits_for_dim(amplitudes.len())?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Normalizes the given amplitudes first.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self, QuantumError> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(QuantumError::NotNormalized(0.0));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(amplitudes)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, QuantumError> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(QuantumError::Shape(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amplitudes: amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|ψ><ψ|`
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { n_qubits: self.n_qubits, matrix: self.projector() }
    }

    /// Applies a unitary; the caller guarantees unitarity.
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self, QuantumError> {
        if u.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch(u.dim(), self.dim()));
        }
        Self::normalized(u.apply(&self.amplitudes))
    }
}

/// Trace-one positive semidefinite Hermitian matrix over `n` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates trace, hermiticity and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self, QuantumError> {
        let n_qubits = qubits_for_dim(matrix.dim())?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::BadTrace(tr.re));
        }
        let min = hermitian_eigensystem(&matrix)?
            .last()
            .map(|p| p.value)
            .unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(QuantumError::NotPositive(min));
        }
        let mut matrix = matrix;
        matrix.hermitize();
        Ok(Self { n_qubits, matrix })
    }

    /// Wraps a matrix known to be valid by construction (e.g. a channel
    /// output). Only rounding asymmetry is removed.
    pub(crate) fn from_valid(mut matrix: ComplexMatrix) -> Self {
        let n_qubits = matrix.dim().trailing_zeros() as usize;
        matrix.hermitize();
        Self { n_qubits, matrix }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self, QuantumError> {
        check_qubits(n_qubits)?;
        let d = 1usize << n_qubits;
        Ok(Self { n_qubits, matrix: ComplexMatrix::identity(d).scale(1.0 / d as f64) })
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights must be nonnegative and sum to 1.
    pub fn mixture(components: &[(f64, &DensityMatrix)]) -> Result<Self, QuantumError> {
        let first = components
            .first()
            .ok_or_else(|| QuantumError::Shape("empty mixture".into()))?;
        let dim = first.1.dim();
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if components.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(QuantumError::BadWeights(total));
        }
        let mut out = ComplexMatrix::zeros(dim);
        for (w, rho) in components {
            if rho.dim() != dim {
                return Err(QuantumError::DimensionMismatch(rho.dim(), dim));
            }
            out = &out + &rho.matrix.scale(*w);
        }
        Ok(Self::from_valid(out))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// `Re Tr(O ρ)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        op.trace_product(&self.matrix).re
    }

    /// `⟨ψ|ρ|ψ⟩`, clamped into `[0, 1]` only when within 1e-10 of the boundary.
    pub fn fidelity(&self, psi: &PureState) -> Result<f64, QuantumError> {
        if psi.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch(psi.dim(), self.dim()));
        }
        let f = self.matrix.expectation(psi.amplitudes());
        Ok(clamp_unit(f))
    }

    /// Eigenvector of the largest eigenvalue.
    pub fn dominant_state(&self) -> Result<PureState, QuantumError> {
        let pairs = hermitian_eigensystem(&self.matrix)?;
        PureState::normalized(pairs[0].vector.clone())
    }

    /// `Tr|ρ - σ| / 2`
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64, QuantumError> {
        if other.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch(other.dim(), self.dim()));
        }
        let diff = &self.matrix - &other.matrix;
        let vals = hermitian_eigensystem(&diff)?;
        Ok(0.5 * vals.iter().map(|p| p.value.abs()).sum::<f64>())
    }

    /// Smallest eigenvalue; negative values beyond rounding flag invalid states.
    pub fn min_eigenvalue(&self) -> Result<f64, QuantumError> {
        Ok(hermitian_eigensystem(&self.matrix)?.last().map_or(0.0, |p| p.value))
    }
}

/// Free-function form of [`DensityMatrix::fidelity`].
pub fn fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64, QuantumError> {
    rho.fidelity(psi)
}

pub(crate) fn clamp_unit(f: f64) -> f64 {
    if (-1e-10..0.0).contains(&f) {
        0.0
    } else if f > 1.0 && f <= 1.0 + 1e-10 {
        1.0
    } else {
        f
    }
}

fn check_qubits(n: usize) -> Result<(), QuantumError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(QuantumError::QubitCount { n, min: 1, max: MAX_QUBITS });
    }
    Ok(())
}

fn qubits_for_dim(dim: usize) -> Result<usize, QuantumError> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(QuantumError::Shape(format!("dimension {dim} is not 2^n with n >= 1")));
    }
    let n = dim.trailing_zeros() as usize;
    check_qubits(n)?;
    Ok(n)
}

/// `Wₙ`: the uniform superposition of the `n` single-excitation basis states.
pub fn make_w_state(n: usize) -> Result<PureState, QuantumError> {
    if !(2..=MAX_QUBITS).contains(&n) {
        return Err(QuantumError::QubitCount { n, min: 2, max: MAX_QUBITS });
    }
    let dim = 1usize << n;
    let amp = ONE / (n as f64).sqrt();
    let mut amps = vec![ZERO; dim];
    for q in 0..n {
        amps[1 << q] = amp;
    }
    Ok(PureState { n_qubits: n, amplitudes: amps })
}

/// `sinθ|01⟩ + cosθ|10⟩`.
pub fn make_theta_state(theta: f64) -> PureState {
    make_theta_phase_state(theta, 0.0)
}

/// `sinθ|01⟩ + e^{iφ}cosθ|10⟩`, the two-photon source family.
pub fn make_theta_phase_state(theta: f64, phi: f64) -> PureState {
    let amps = vec![ZERO, ONE * theta.sin(), C64::from_polar(theta.cos(), phi), ZERO];
    PureState { n_qubits: 2, amplitudes: amps }
}
