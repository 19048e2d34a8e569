//! Pauli operators, Pauli strings and local embeddings.
//!
//! Qubit 0 is the leftmost tensor factor and the most significant bit of a
//! basis-state index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::matrix::{kron_all, ComplexMatrix, C64, I, ONE, ZERO};
use super::QuantumError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const AXES: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Eigenvector for eigenvalue `+1` (`outcome == 0`) or `-1` (`outcome == 1`).
    /// The identity is treated like `Z`.
    pub fn eigenvector(self, outcome: usize) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match (self, outcome) {
            (Pauli::X, 0) => [ONE * h, ONE * h],
            (Pauli::X, _) => [ONE * h, -ONE * h],
            (Pauli::Y, 0) => [ONE * h, I * h],
            (Pauli::Y, _) => [ONE * h, -I * h],
            (_, 0) => [ONE, ZERO],
            (_, _) => [ZERO, ONE],
        }
    }
}

pub fn pauli(p: Pauli) -> ComplexMatrix {
    match p {
        Pauli::I => ComplexMatrix::identity(2),
        Pauli::X => ComplexMatrix::from_vec(2, vec![ZERO, ONE, ONE, ZERO]).unwrap(),
        Pauli::Y => ComplexMatrix::from_vec(2, vec![ZERO, -I, I, ZERO]).unwrap(),
        Pauli::Z => ComplexMatrix::from_vec(2, vec![ONE, ZERO, ZERO, -ONE]).unwrap(),
    }
}

/// Single-qubit projector onto the `+1` (`positive == true`) or `-1`
/// eigenspace of `p`.
pub fn eigenprojector(p: Pauli, positive: bool) -> ComplexMatrix {
    let v = p.eigenvector(if positive { 0 } else { 1 });
    ComplexMatrix::outer(&v, &v)
}

/// Projector onto the `±1` eigenspace of a multi-qubit operator `O` with
/// `O² = 𝟙`, i.e. `(𝟙 ± O)/2`.
pub fn parity_projector(op: &ComplexMatrix, positive: bool) -> ComplexMatrix {
    let id = ComplexMatrix::identity(op.dim());
    let signed = if positive { op.clone() } else { op.scale(-1.0) };
    (&id + &signed).scale(0.5)
}

/// Places single-qubit operators on the listed qubits of an `n`-qubit
/// register, identity elsewhere.
pub fn embed(n_qubits: usize, ops: &[(usize, &ComplexMatrix)]) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    let factors: Vec<&ComplexMatrix> = (0..n_qubits)
        .map(|q| ops.iter().find(|(k, _)| *k == q).map_or(&id, |(_, m)| *m))
        .collect();
    kron_all(factors)
}

/// A tensor product of Paulis, e.g. `XZY`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let ms: Vec<ComplexMatrix> = self.0.iter().map(|&p| pauli(p)).collect();
        kron_all(ms.iter())
    }

    /// All `3ⁿ` strings over `{X, Y, Z}` in lexicographic order.
    pub fn all_axes(n_qubits: usize) -> Vec<PauliString> {
        let mut out = vec![PauliString(Vec::new())];
        for _ in 0..n_qubits {
            out = out
                .into_iter()
                .flat_map(|s| {
                    Pauli::AXES.iter().map(move |&p| {
                        let mut v = s.0.clone();
                        v.push(p);
                        PauliString(v)
                    })
                })
                .collect();
        }
        out
    }

    /// All `4ⁿ` strings over `{I, X, Y, Z}`.
    pub fn all(n_qubits: usize) -> Vec<PauliString> {
        let mut out = vec![PauliString(Vec::new())];
        for _ in 0..n_qubits {
            out = out
                .into_iter()
                .flat_map(|s| {
                    [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z].into_iter().map(move |p| {
                        let mut v = s.0.clone();
                        v.push(p);
                        PauliString(v)
                    })
                })
                .collect();
        }
        out
    }

    /// Product eigenvector for an outcome bitstring (bit 0 = `+1` eigenvalue),
    /// qubit 0 most significant.
    pub fn outcome_vector(&self, outcome: usize) -> Vec<C64> {
        let n = self.0.len();
        let mut v = vec![ONE];
        for (q, &p) in self.0.iter().enumerate() {
            let bit = (outcome >> (n - 1 - q)) & 1;
            let e = p.eigenvector(bit);
            v = v.iter().flat_map(|a| e.iter().map(move |b| a * b)).collect();
        }
        v
    }

    /// Rank-one projectors for every outcome bitstring, indexed by outcome.
    pub fn outcome_projectors(&self) -> Vec<ComplexMatrix> {
        (0..1usize << self.0.len())
            .map(|b| {
                let v = self.outcome_vector(b);
                ComplexMatrix::outer(&v, &v)
            })
            .collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = QuantumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ops: Option<Vec<Pauli>> = s.trim().chars().map(Pauli::from_symbol).collect();
        match ops {
            Some(v) if !v.is_empty() => Ok(PauliString(v)),
            _ => Err(QuantumError::Parse(format!("invalid Pauli string {s:?}"))),
        }
    }
}

impl TryFrom<String> for PauliString {
    type Error = QuantumError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvectors_are_eigenvectors() {
        for p in Pauli::AXES {
            let m = pauli(p);
            for (outcome, sign) in [(0, 1.0), (1, -1.0)] {
                let v = p.eigenvector(outcome);
                let mv = m.apply(&v);
                for k in 0..2 {
                    assert!((mv[k] - v[k] * sign).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn embed_places_operator_on_msb() {
        // Z on qubit 0 of two qubits is Z ⊗ I: |10> gets -1
        let z = pauli(Pauli::Z);
        let op = embed(2, &[(0, &z)]);
        assert_eq!(op[(2, 2)], -ONE);
        assert_eq!(op[(1, 1)], ONE);
    }

    #[test]
    fn outcome_projectors_resolve_identity() {
        let s: PauliString = "XYZ".parse().unwrap();
        let sum = s
            .outcome_projectors()
            .iter()
            .fold(ComplexMatrix::zeros(8), |acc, p| &acc + p);
        assert!(sum.frobenius_distance(&ComplexMatrix::identity(8)) < 1e-12);
    }

    #[test]
    fn string_enumeration_counts() {
        assert_eq!(PauliString::all_axes(3).len(), 27);
        assert_eq!(PauliString::all(2).len(), 16);
        assert_eq!(PauliString::all_axes(2)[0].to_string(), "XX");
        assert!("XQ".parse::<PauliString>().is_err());
    }
}
