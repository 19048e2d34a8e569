//! Structured text form of a strategy, for audit and golden files.

use serde::{Deserialize, Serialize};

use super::setting::{Branch, SettingKind};
use super::VerificationStrategy;
use crate::quantum::ComplexMatrix;

/// Matrix as separate real and imaginary row arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&ComplexMatrix> for MatrixDocument {
    fn from(m: &ComplexMatrix) -> Self {
        let d = m.dim();
        Self {
            re: (0..d).map(|i| m.row(i).iter().map(|z| z.re).collect()).collect(),
            im: (0..d).map(|i| m.row(i).iter().map(|z| z.im).collect()).collect(),
        }
    }
}

impl MatrixDocument {
    pub fn to_matrix(&self) -> Option<ComplexMatrix> {
        let d = self.re.len();
        if self.im.len() != d || self.re.iter().chain(&self.im).any(|r| r.len() != d) {
            return None;
        }
        Some(ComplexMatrix::from_fn(d, |i, j| crate::quantum::C64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingDocument {
    pub label: String,
    pub probability: f64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub first_stage_qubits: Vec<usize>,
    /// Branch description per first-stage outcome, e.g. `"+ -> XX+"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<String>,
    /// First-stage projectors followed by every second-stage accept projector
    /// for adaptive settings; the single accept projector for static ones.
    pub projectors: Vec<MatrixDocument>,
    pub effective: MatrixDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyDocument {
    pub label: String,
    pub n_qubits: usize,
    pub target: MatrixDocument,
    pub nu: f64,
    pub eigenvalues: Vec<f64>,
    pub settings: Vec<SettingDocument>,
}

fn collect_tests<'a>(b: &'a Branch, out: &mut Vec<&'a ComplexMatrix>) {
    match b {
        Branch::Test { accept, .. } => out.push(accept),
        Branch::Coin { first, second, .. } => {
            collect_tests(first, out);
            collect_tests(second, out);
        }
        Branch::Reject | Branch::Accept => {}
    }
}

impl VerificationStrategy {
    pub fn to_document(&self) -> StrategyDocument {
        let settings = self
            .settings()
            .iter()
            .zip(self.probabilities())
            .map(|(s, &p)| match s.kind() {
                SettingKind::Static { accept } => SettingDocument {
                    label: s.label().to_string(),
                    probability: p,
                    kind: "static".into(),
                    first_stage_qubits: Vec::new(),
                    branches: Vec::new(),
                    projectors: vec![accept.into()],
                    effective: s.effective().into(),
                },
                SettingKind::Adaptive(tree) => {
                    let mut projectors: Vec<MatrixDocument> =
                        tree.first_stage.projectors().iter().map(MatrixDocument::from).collect();
                    let mut tests = Vec::new();
                    for b in &tree.branches {
                        collect_tests(b, &mut tests);
                    }
                    projectors.extend(tests.into_iter().map(MatrixDocument::from));
                    SettingDocument {
                        label: s.label().to_string(),
                        probability: p,
                        kind: "adaptive".into(),
                        first_stage_qubits: tree.first_stage_qubits.clone(),
                        branches: tree
                            .outcome_labels
                            .iter()
                            .zip(&tree.branches)
                            .map(|(o, b)| format!("{o} -> {}", b.describe()))
                            .collect(),
                        projectors,
                        effective: s.effective().into(),
                    }
                }
            })
            .collect();
        StrategyDocument {
            label: self.label().to_string(),
            n_qubits: self.target().n_qubits(),
            target: (&self.target().projector()).into(),
            nu: self.nu(),
            eigenvalues: self.eigenvalues(),
            settings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("strategy document serializes")
    }
}
