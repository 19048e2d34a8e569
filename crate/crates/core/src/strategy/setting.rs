//! Two-outcome measurement settings, static or adaptive.

use rand::Rng;

use crate::quantum::{ComplexMatrix, DensityMatrix, ProjectiveMeasurement};

/// What happens after a first-stage outcome (or as the whole test of a
/// static setting).
#[derive(Clone, Debug)]
pub enum Branch {
    Reject,
    /// Accept without measuring.
    Accept,
    /// Two-outcome test `{Π, 𝟙-Π}`; the test passes on `Π`.
    Test { label: String, accept: ComplexMatrix },
    /// Classical coin: `first` with probability `p_first`, else `second`.
    Coin { p_first: f64, first: Box<Branch>, second: Box<Branch> },
}

impl Branch {
    pub fn test(label: impl Into<String>, accept: ComplexMatrix) -> Self {
        Branch::Test { label: label.into(), accept }
    }

    pub fn coin(p_first: f64, first: Branch, second: Branch) -> Self {
        Branch::Coin { p_first, first: Box::new(first), second: Box::new(second) }
    }

    /// Effective acceptance operator of this branch alone.
    pub fn effective(&self, dim: usize) -> ComplexMatrix {
        match self {
            Branch::Reject => ComplexMatrix::zeros(dim),
            Branch::Accept => ComplexMatrix::identity(dim),
            Branch::Test { accept, .. } => accept.clone(),
            Branch::Coin { p_first, first, second } => {
                &first.effective(dim).scale(*p_first) + &second.effective(dim).scale(1.0 - p_first)
            }
        }
    }

    /// Runs the branch on a state; returns whether the test passed.
    pub fn execute<R: Rng + ?Sized>(&self, rho: &DensityMatrix, rng: &mut R) -> bool {
        match self {
            Branch::Reject => false,
            Branch::Accept => true,
            Branch::Test { accept, .. } => rng.random::<f64>() < rho.expectation(accept),
            Branch::Coin { p_first, first, second } => {
                if rng.random::<f64>() < *p_first {
                    first.execute(rho, rng)
                } else {
                    second.execute(rho, rng)
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Branch::Reject => "reject".into(),
            Branch::Accept => "accept".into(),
            Branch::Test { label, .. } => label.clone(),
            Branch::Coin { p_first, first, second } => {
                format!("coin({p_first}: {} | {})", first.describe(), second.describe())
            }
        }
    }
}

/// First-stage projective measurement followed by one branch per outcome.
#[derive(Clone, Debug)]
pub struct MeasurementTree {
    pub first_stage_qubits: Vec<usize>,
    pub first_stage: ProjectiveMeasurement,
    pub outcome_labels: Vec<String>,
    pub branches: Vec<Branch>,
}

impl MeasurementTree {
    /// `Σₖ Pₖ E(branchₖ) Pₖ`
    pub fn effective(&self) -> ComplexMatrix {
        let dim = self.first_stage.projectors()[0].dim();
        let mut out = ComplexMatrix::zeros(dim);
        for (p, b) in self.first_stage.projectors().iter().zip(&self.branches) {
            out = &out + &b.effective(dim).sandwich(p);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum SettingKind {
    Static { accept: ComplexMatrix },
    Adaptive(MeasurementTree),
}

/// Outcome of running one setting at circuit level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CircuitOutcome {
    pub first_outcome: Option<usize>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct MeasurementSetting {
    label: String,
    kind: SettingKind,
    effective: ComplexMatrix,
}

impl MeasurementSetting {
    pub fn new_static(label: impl Into<String>, accept: ComplexMatrix) -> Self {
        Self { label: label.into(), effective: accept.clone(), kind: SettingKind::Static { accept } }
    }

    pub fn new_adaptive(label: impl Into<String>, tree: MeasurementTree) -> Self {
        let mut effective = tree.effective();
        effective.hermitize();
        Self { label: label.into(), kind: SettingKind::Adaptive(tree), effective }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &SettingKind {
        &self.kind
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.kind, SettingKind::Adaptive(_))
    }

    /// The operator `Ω_l` implemented by the setting.
    pub fn effective(&self) -> &ComplexMatrix {
        &self.effective
    }

    /// `Tr(Ω_l σ)`
    pub fn pass_probability(&self, sigma: &DensityMatrix) -> f64 {
        sigma.expectation(&self.effective).clamp(0.0, 1.0)
    }

    /// Plays the physical sequence: first-stage measurement with collapse,
    /// branch selection, second-stage two-outcome test.
    pub fn run_circuit<R: Rng + ?Sized>(&self, sigma: &DensityMatrix, rng: &mut R) -> CircuitOutcome {
        match &self.kind {
            SettingKind::Static { accept } => CircuitOutcome {
                first_outcome: None,
                passed: rng.random::<f64>() < sigma.expectation(accept),
            },
            SettingKind::Adaptive(tree) => {
                let (k, post) = tree.first_stage.measure(sigma, rng);
                CircuitOutcome { first_outcome: Some(k), passed: tree.branches[k].execute(&post, rng) }
            }
        }
    }
}
