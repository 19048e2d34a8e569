use super::{StrategyError, VerificationStrategy};
use crate::quantum::{ComplexMatrix, DensityMatrix, PureState};

/// Number of tests needed to verify within infidelity `epsilon` at
/// significance `delta`: `⌈ln(1/δ) / ln(1/(1-εν))⌉`.
pub fn sample_complexity(nu: f64, epsilon: f64, delta: f64) -> Result<u64, StrategyError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(StrategyError::OutOfRange(format!("ν = {nu} outside (0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(StrategyError::OutOfRange(format!("ε = {epsilon} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(StrategyError::OutOfRange(format!("δ = {delta} outside (0, 1)")));
    }
    let rate = epsilon * nu;
    if rate >= 1.0 {
        return Err(StrategyError::Unreachable(rate));
    }
    let n = (1.0 / delta).ln() / -(-rate).ln_1p();
    Ok(n.ceil() as u64)
}

/// `(1-ε)|ψ⟩⟨ψ| + ε|v₂⟩⟨v₂|`, where `v₂` is a second-largest eigenvector of
/// `Ω` orthogonal to the target.
///
/// When `λ₂` is degenerate any member of the cluster attains the same pass
/// probability `1 - εν`; the first one returned by the eigensolver is used.
pub fn worst_case_state(strategy: &VerificationStrategy, epsilon: f64) -> Result<DensityMatrix, StrategyError> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(StrategyError::OutOfRange(format!("ε = {epsilon} outside [0, 1)")));
    }
    let target = strategy.target();
    let v2 = strategy
        .spectrum()
        .get(1)
        .ok_or_else(|| StrategyError::OutOfRange("Ω has a single eigenvalue".into()))?;
    // remove any residual overlap with the target
    let overlap = target.inner(&PureState::normalized(v2.vector.clone())?);
    let orth: Vec<_> = v2
        .vector
        .iter()
        .zip(target.amplitudes())
        .map(|(v, t)| v - t * overlap)
        .collect();
    let v2 = PureState::normalized(orth)?;
    let m: ComplexMatrix = &target.projector().scale(1.0 - epsilon) + &v2.projector().scale(epsilon);
    Ok(DensityMatrix::new(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(sample_complexity(0.5, 0.1, 0.05).unwrap(), 59);
        assert_eq!(sample_complexity(1.0 / 3.0, 0.1, 0.05).unwrap(), 89);
    }

    #[test]
    fn boundary_behaviour() {
        // εν = 0.999 needs only a test or two
        assert_eq!(sample_complexity(1.0, 0.999, 0.05).unwrap(), 1);
        assert!(sample_complexity(1.0, 1.0, 0.05).is_err());
        assert!(sample_complexity(0.0, 0.1, 0.05).is_err());
        assert!(sample_complexity(0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn close_to_first_order_approximation() {
        // N ≈ ν⁻¹ε⁻¹ln δ⁻¹ for small ε
        let n = sample_complexity(0.5, 0.001, 0.05).unwrap() as f64;
        let approx = 2.0 * 1000.0 * 20f64.ln();
        assert!((n - approx).abs() / approx < 1e-3);
    }
}
