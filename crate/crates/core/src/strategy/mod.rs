//! Verification strategies `Ω = Σ p_l Ω_l`, their spectra and sample
//! complexities.

mod builders;
mod complexity;
mod document;
mod setting;

use thiserror::Error;

use crate::quantum::{hermitian_eigensystem, ComplexMatrix, EigenPair, PureState, QuantumError};

pub use builders::{
    build_omega_adaptive_wn, build_omega_hom_w3, build_omega_opt_2q, hom_w3_one_way_operator,
    hom_w3_operator_by_cyclic_permutation, opt_2q_weight, permute_qubits, phi_basis,
};
pub use complexity::{sample_complexity, worst_case_state};
pub use document::{MatrixDocument, SettingDocument, StrategyDocument};
pub use setting::{Branch, CircuitOutcome, MeasurementSetting, MeasurementTree, SettingKind};

/// Tolerance on `Σ p_l = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;
/// Tolerance on the per-setting bounds `0 ⪯ Ω_l ⪯ 𝟙` and target acceptance.
pub const SETTING_TOL: f64 = 1e-10;
/// Tolerance on the top eigenvalue of `Ω` being one.
pub const SPECTRUM_TOL: f64 = 1e-9;

/// Settings above this dimension are trusted to satisfy `0 ⪯ Ω_l ⪯ 𝟙` by
/// construction instead of being diagonalised one by one.
const SETTING_SPECTRUM_CHECK_MAX_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("probabilities sum to {0}, not 1")]
    Probabilities(f64),
    #[error("setting {label:?} violates 0 <= Ω_l <= 1 (eigenvalue {eigenvalue})")]
    SettingBounds { label: String, eigenvalue: f64 },
    #[error("setting {label:?} accepts the target with probability {value}, not 1")]
    TargetRejected { label: String, value: f64 },
    #[error("largest eigenvalue of Ω is {0}, not 1")]
    TopEigenvalue(f64),
    #[error("ε·ν = {0} >= 1; no finite number of tests suffices")]
    Unreachable(f64),
}

/// A finite set of two-outcome settings with selection probabilities.
///
/// `Ω`, its spectrum and the spectral gap are computed once at build time.
#[derive(Clone, Debug)]
pub struct VerificationStrategy {
    label: String,
    target: PureState,
    settings: Vec<MeasurementSetting>,
    probabilities: Vec<f64>,
    omega: ComplexMatrix,
    spectrum: Vec<EigenPair>,
    homogeneous: bool,
}

impl VerificationStrategy {
    pub fn new(
        label: impl Into<String>,
        target: PureState,
        weighted: Vec<(f64, MeasurementSetting)>,
    ) -> Result<Self, StrategyError> {
        let total: f64 = weighted.iter().map(|(p, _)| p).sum();
        if weighted.is_empty() || weighted.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(StrategyError::Probabilities(total));
        }
        let dim = target.dim();
        let mut omega = ComplexMatrix::zeros(dim);
        for (p, s) in &weighted {
            check_setting(s, &target)?;
            omega = &omega + &s.effective().scale(*p);
        }
        omega.hermitize();
        let spectrum = hermitian_eigensystem(&omega)?;
        let top = spectrum[0].value;
        if (top - 1.0).abs() > SPECTRUM_TOL {
            return Err(StrategyError::TopEigenvalue(top));
        }
        let homogeneous = spectrum.len() < 2
            || spectrum[1..].iter().all(|p| (p.value - spectrum[1].value).abs() < SPECTRUM_TOL);
        let (probabilities, settings) = weighted.into_iter().unzip();
        Ok(Self { label: label.into(), target, settings, probabilities, omega, spectrum, homogeneous })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn target(&self) -> &PureState {
        &self.target
    }

    pub fn settings(&self) -> &[MeasurementSetting] {
        &self.settings
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn omega(&self) -> &ComplexMatrix {
        &self.omega
    }

    /// Eigenvalues of `Ω`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum.iter().map(|p| p.value).collect()
    }

    pub fn spectrum(&self) -> &[EigenPair] {
        &self.spectrum
    }

    /// Second-largest eigenvalue `λ₂`.
    pub fn lambda2(&self) -> f64 {
        self.spectrum.get(1).map_or(0.0, |p| p.value)
    }

    /// Spectral gap `ν = 1 - λ₂`.
    pub fn nu(&self) -> f64 {
        1.0 - self.lambda2()
    }

    /// Whether `Ω` has a single eigenvalue on the complement of the target,
    /// which is what licenses linear-inversion fidelity estimation.
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn n_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn has_adaptive_settings(&self) -> bool {
        self.settings.iter().any(MeasurementSetting::is_adaptive)
    }
}

fn check_setting(s: &MeasurementSetting, target: &PureState) -> Result<(), StrategyError> {
    let eff = s.effective();
    if eff.dim() != target.dim() {
        return Err(QuantumError::DimensionMismatch(eff.dim(), target.dim()).into());
    }
    let accept = eff.expectation(target.amplitudes());
    if (accept - 1.0).abs() > SETTING_TOL {
        return Err(StrategyError::TargetRejected { label: s.label().to_string(), value: accept });
    }
    let must_check = !s.is_adaptive() || eff.dim() <= SETTING_SPECTRUM_CHECK_MAX_DIM;
    if must_check {
        let vals = hermitian_eigensystem(eff)?;
        let (hi, lo) = (vals[0].value, vals[vals.len() - 1].value);
        if hi > 1.0 + SETTING_TOL {
            return Err(StrategyError::SettingBounds { label: s.label().to_string(), eigenvalue: hi });
        }
        if lo < -SETTING_TOL {
            return Err(StrategyError::SettingBounds { label: s.label().to_string(), eigenvalue: lo });
        }
    }
    Ok(())
}
