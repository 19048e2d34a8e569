use rand::Rng;

use super::matrix::{ComplexMatrix, PROJECTOR_TOL};
use super::state::{clamp_unit, DensityMatrix};
use super::QuantumError;

const COMPLETENESS_TOL: f64 = 1e-9;

/// A complete set of mutually orthogonal projectors.
#[derive(Clone, Debug)]
pub struct ProjectiveMeasurement {
    projectors: Vec<ComplexMatrix>,
}

impl ProjectiveMeasurement {
    pub fn new(projectors: Vec<ComplexMatrix>) -> Result<Self, QuantumError> {
        let dim = projectors
            .first()
            .map(ComplexMatrix::dim)
            .ok_or_else(|| QuantumError::IncompleteMeasurement("no projectors".into()))?;
        let mut sum = ComplexMatrix::zeros(dim);
        for (k, p) in projectors.iter().enumerate() {
            if p.dim() != dim {
                return Err(QuantumError::DimensionMismatch(p.dim(), dim));
            }
            if !p.is_projector(COMPLETENESS_TOL.max(PROJECTOR_TOL)) {
                return Err(QuantumError::IncompleteMeasurement(format!("element {k} is not a projector")));
            }
            for (j, q) in projectors.iter().enumerate().skip(k + 1) {
                if (p * q).frobenius_norm() > COMPLETENESS_TOL {
                    return Err(QuantumError::IncompleteMeasurement(format!(
                        "elements {k} and {j} are not orthogonal"
                    )));
                }
            }
            sum = &sum + p;
        }
        let gap = sum.frobenius_distance(&ComplexMatrix::identity(dim));
        if gap > COMPLETENESS_TOL {
            return Err(QuantumError::IncompleteMeasurement(format!(
                "projectors sum to identity only within {gap:.3e}"
            )));
        }
        Ok(Self { projectors })
    }

    pub fn projectors(&self) -> &[ComplexMatrix] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    /// Born probabilities `Tr(Pₖρ)`.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.projectors.iter().map(|p| clamp_unit(rho.expectation(p))).collect()
    }

    /// Samples an outcome and returns it with the collapsed state
    /// `PₖρPₖ / Tr(Pₖρ)`.
    pub fn measure<R: Rng + ?Sized>(&self, rho: &DensityMatrix, rng: &mut R) -> (usize, DensityMatrix) {
        let probs = self.probabilities(rho);
        let k = sample_index(&probs, rng);
        let p = &self.projectors[k];
        let collapsed = rho.matrix().sandwich(p).scale(1.0 / probs[k]);
        (k, DensityMatrix::from_valid(collapsed))
    }
}

/// Draws an index from (possibly slightly unnormalized) weights, never
/// returning an index of zero weight.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = k;
        acc += w;
        if u < acc {
            return k;
        }
    }
    last_positive
}

/// Validates the projector set and performs one Born-rule measurement.
pub fn measure_projective<R: Rng + ?Sized>(
    state: &DensityMatrix,
    projectors: &[ComplexMatrix],
    rng: &mut R,
) -> Result<(usize, DensityMatrix), QuantumError> {
    let m = ProjectiveMeasurement::new(projectors.to_vec())?;
    if m.projectors[0].dim() != state.dim() {
        return Err(QuantumError::DimensionMismatch(m.projectors[0].dim(), state.dim()));
    }
    Ok(m.measure(state, rng))
}
