//! Noise channels as explicit Kraus sums.

use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, I, ONE, ZERO};
use super::pauli::{embed, pauli, Pauli};
use super::state::DensityMatrix;
use super::QuantumError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `ρ → (1-p)ρ + p𝟙/d` on the whole register.
    Depolarizing { p: f64 },
    /// Independent phase flips `ρ → (1-p)ρ + p ZρZ` on every qubit.
    Dephasing { p: f64 },
    /// Independent amplitude damping with decay probability `gamma` on every qubit.
    AmplitudeDamping { gamma: f64 },
    /// Unitary `exp(-iφP/2)` on the listed qubits (all qubits when omitted).
    CoherentRotation {
        axis: Pauli,
        angle: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qubits: Option<Vec<usize>>,
    },
    /// `Σ wᵢ Eᵢ(ρ)` with weights summing to one.
    ConvexMixture { components: Vec<MixtureComponent> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub model: NoiseModel,
}

fn check_probability(name: &str, v: f64) -> Result<(), QuantumError> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(QuantumError::NoiseParameter(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), QuantumError> {
        match self {
            NoiseModel::Depolarizing { p } | NoiseModel::Dephasing { p } => check_probability("p", *p),
            NoiseModel::AmplitudeDamping { gamma } => check_probability("gamma", *gamma),
            NoiseModel::CoherentRotation { angle, axis, .. } => {
                if !angle.is_finite() {
                    return Err(QuantumError::NoiseParameter(format!("rotation angle {angle} is not finite")));
                }
                if *axis == Pauli::I {
                    return Err(QuantumError::NoiseParameter("rotation axis must be X, Y or Z".into()));
                }
                Ok(())
            }
            NoiseModel::ConvexMixture { components } => {
                if components.is_empty() {
                    return Err(QuantumError::NoiseParameter("empty mixture".into()));
                }
                let mut total = 0.0;
                for c in components {
                    check_probability("weight", c.weight)?;
                    c.model.validate()?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(QuantumError::NoiseParameter(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Depolarizing strength giving fidelity `target_fidelity` on a pure
    /// state of `n_qubits`: `F = 1 - p(1 - 1/d)`.
    pub fn depolarizing_for_fidelity(target_fidelity: f64, n_qubits: usize) -> Result<Self, QuantumError> {
        let d = (1usize << n_qubits) as f64;
        let p = (1.0 - target_fidelity) / (1.0 - 1.0 / d);
        let model = NoiseModel::Depolarizing { p };
        model.validate()?;
        Ok(model)
    }
}

/// Applies the channel; the output is a valid density matrix.
pub fn apply_noise(rho: &DensityMatrix, model: &NoiseModel) -> Result<DensityMatrix, QuantumError> {
    model.validate()?;
    Ok(DensityMatrix::from_valid(apply_unchecked(rho.matrix(), rho.n_qubits(), model)?))
}

fn apply_unchecked(m: &ComplexMatrix, n: usize, model: &NoiseModel) -> Result<ComplexMatrix, QuantumError> {
    Ok(match model {
        NoiseModel::Depolarizing { p } => {
            let d = m.dim() as f64;
            &m.scale(1.0 - p) + &ComplexMatrix::identity(m.dim()).scale(p / d)
        }
        NoiseModel::Dephasing { p } => {
            let kraus = [pauli(Pauli::I).scale((1.0 - p).sqrt()), pauli(Pauli::Z).scale(p.sqrt())];
            (0..n).fold(m.clone(), |acc, q| apply_local_kraus(&acc, n, q, &kraus))
        }
        NoiseModel::AmplitudeDamping { gamma } => {
            let k0 = ComplexMatrix::from_vec(2, vec![ONE, ZERO, ZERO, ONE * (1.0 - gamma).sqrt()]).unwrap();
            let k1 = ComplexMatrix::from_vec(2, vec![ZERO, ONE * gamma.sqrt(), ZERO, ZERO]).unwrap();
            let kraus = [k0, k1];
            (0..n).fold(m.clone(), |acc, q| apply_local_kraus(&acc, n, q, &kraus))
        }
        NoiseModel::CoherentRotation { axis, angle, qubits } => {
            let u = rotation(*axis, *angle);
            let targets: Vec<usize> = qubits.clone().unwrap_or_else(|| (0..n).collect());
            let mut acc = m.clone();
            for q in targets {
                if q >= n {
                    return Err(QuantumError::NoiseParameter(format!("rotation qubit {q} outside {n}-qubit register")));
                }
                acc = apply_local_kraus(&acc, n, q, std::slice::from_ref(&u));
            }
            acc
        }
        NoiseModel::ConvexMixture { components } => {
            let mut out = ComplexMatrix::zeros(m.dim());
            for c in components {
                out = &out + &apply_unchecked(m, n, &c.model)?.scale(c.weight);
            }
            out
        }
    })
}

/// `exp(-iφP/2) = cos(φ/2)𝟙 - i sin(φ/2)P`.
pub fn rotation(axis: Pauli, angle: f64) -> ComplexMatrix {
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    &ComplexMatrix::identity(2).scale(c) + &pauli(axis).scale_complex(-I * s)
}

fn apply_local_kraus(m: &ComplexMatrix, n: usize, qubit: usize, kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(m.dim());
    for k in kraus {
        let full = embed(n, &[(qubit, k)]);
        out = &out + &m.conjugate_by(&full);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::{make_w_state, PureState};

    fn assert_valid(rho: &DensityMatrix) {
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-10);
        assert!(rho.min_eigenvalue().unwrap() >= -1e-10);
        assert!(rho.matrix().is_hermitian(1e-12));
    }

    #[test]
    fn depolarizing_endpoints() {
        let w = make_w_state(3).unwrap().to_density();
        let same = apply_noise(&w, &NoiseModel::Depolarizing { p: 0.0 }).unwrap();
        assert!(same.matrix().frobenius_distance(w.matrix()) < 1e-15);
        let full = apply_noise(&w, &NoiseModel::Depolarizing { p: 1.0 }).unwrap();
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(full.matrix().frobenius_distance(mixed.matrix()) < 1e-15);
    }

    #[test]
    fn depolarized_w3_fidelity_closed_form() {
        let psi = make_w_state(3).unwrap();
        for p in [0.0, 0.05, 0.1, 0.37, 1.0] {
            let rho = apply_noise(&psi.to_density(), &NoiseModel::Depolarizing { p }).unwrap();
            // numeric trace oracle: <ψ|ρ|ψ> computed entry by entry
            let m = rho.matrix();
            let a = psi.amplitudes();
            let mut numeric = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    numeric += (a[i].conj() * m[(i, j)] * a[j]).re;
                }
            }
            let closed = 1.0 - p * (1.0 - 1.0 / 8.0);
            assert!((numeric - closed).abs() < 1e-14);
            assert!((rho.fidelity(&psi).unwrap() - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn every_channel_outputs_valid_states() {
        let psi = make_w_state(3).unwrap().to_density();
        let models = [
            NoiseModel::Dephasing { p: 0.3 },
            NoiseModel::AmplitudeDamping { gamma: 0.4 },
            NoiseModel::CoherentRotation { axis: Pauli::Y, angle: 0.2, qubits: Some(vec![1]) },
            NoiseModel::CoherentRotation { axis: Pauli::X, angle: -1.1, qubits: None },
            NoiseModel::ConvexMixture {
                components: vec![
                    MixtureComponent { weight: 0.25, model: NoiseModel::Depolarizing { p: 0.5 } },
                    MixtureComponent { weight: 0.75, model: NoiseModel::AmplitudeDamping { gamma: 1.0 } },
                ],
            },
        ];
        for m in &models {
            assert_valid(&apply_noise(&psi, m).unwrap());
        }
    }

    #[test]
    fn full_damping_goes_to_ground() {
        let one = PureState::basis(2, 3).unwrap().to_density();
        let out = apply_noise(&one, &NoiseModel::AmplitudeDamping { gamma: 1.0 }).unwrap();
        assert!((out.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_rejected() {
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(apply_noise(&rho, &NoiseModel::Depolarizing { p: 1.2 }).is_err());
        assert!(apply_noise(&rho, &NoiseModel::Dephasing { p: -0.1 }).is_err());
        let bad_mix = NoiseModel::ConvexMixture {
            components: vec![MixtureComponent { weight: 0.5, model: NoiseModel::Dephasing { p: 0.1 } }],
        };
        assert!(apply_noise(&rho, &bad_mix).is_err());
    }

    #[test]
    fn noise_model_toml_shape() {
        let m: NoiseModel = toml::from_str("kind = \"depolarizing\"\np = 0.25\n").unwrap();
        assert_eq!(m, NoiseModel::Depolarizing { p: 0.25 });
        let r: NoiseModel = toml::from_str("kind = \"coherent-rotation\"\naxis = \"Y\"\nangle = 0.1\n").unwrap();
        assert!(matches!(r, NoiseModel::CoherentRotation { axis: Pauli::Y, .. }));
    }
}
