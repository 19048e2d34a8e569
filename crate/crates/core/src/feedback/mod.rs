//! Closed-loop tuning of a simulated entangled-photon source.
//!
//! A [`DeviceModel`] turns knob settings into a state through hidden
//! calibration offsets the tuner never sees. The tuner drives an optimizer
//! whose only input is an estimator output: the QSV fidelity estimate or,
//! for comparison, the fidelity of a tomographic reconstruction.

mod optimizer;

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optimizer::{
    maximize, CoordinateDescentConfig, Objective, OptimizerConfig, SpsaConfig, TerminationReason,
};

use crate::analysis::{estimate_fidelity, AnalysisError};
use crate::quantum::matrix::C64;
use crate::quantum::{apply_noise, make_w_state, DensityMatrix, NoiseModel, PureState, QuantumError};
use crate::rng::{derive_seed, stream};
use crate::sampler::{count_passes, FixedSource, SamplerError, SamplerLevel};
use crate::strategy::VerificationStrategy;
use crate::tomography::{reconstruct_mle, simulate_tomography_data, TomographyError};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error("invalid tuning input: {0}")]
    Input(String),
    #[error("failed to write trace: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceKind {
    /// `sinθ|01⟩ + e^{iφ}cosθ|10⟩`, knobs `(θ, φ)`, target at `θ = π/4`.
    TwoQubit,
    /// Two-qubit state with photon A split over polarization and path by
    /// angle `χ`, knobs `(θ, φ, χ)`, target `W₃`.
    W3,
}

/// Simulated source. The offsets added to the knobs are private.
#[derive(Clone, Debug)]
pub struct DeviceModel {
    kind: DeviceKind,
    knobs: Vec<f64>,
    offsets: Vec<f64>,
    noise: Option<NoiseModel>,
}

impl DeviceModel {
    pub fn new(kind: DeviceKind, offsets: Vec<f64>, noise: Option<NoiseModel>) -> Result<Self, FeedbackError> {
        let knobs = Self::nominal(kind);
        if offsets.len() != knobs.len() || offsets.iter().any(|o| !o.is_finite()) {
            return Err(FeedbackError::Input(format!("{kind:?} device needs {} finite offsets", knobs.len())));
        }
        if let Some(n) = &noise {
            n.validate()?;
        }
        Ok(Self { kind, knobs, offsets, noise })
    }

    /// Knob values that prepare the target when offsets are zero.
    pub fn nominal(kind: DeviceKind) -> Vec<f64> {
        match kind {
            DeviceKind::TwoQubit => vec![FRAC_PI_4, 0.0],
            DeviceKind::W3 => vec![(1.0f64 / 3.0).sqrt().asin(), 0.0, FRAC_PI_4],
        }
    }

    pub fn kind(&self) -> DeviceKind {
        self.kind
    }

    pub fn knob_names(&self) -> &'static [&'static str] {
        match self.kind {
            DeviceKind::TwoQubit => &["theta", "phi"],
            DeviceKind::W3 => &["theta", "phi", "chi"],
        }
    }

    pub fn knobs(&self) -> &[f64] {
        &self.knobs
    }

    pub fn set_knobs(&mut self, knobs: &[f64]) -> Result<(), FeedbackError> {
        self.check_knobs(knobs)?;
        self.knobs = knobs.to_vec();
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        match self.kind {
            DeviceKind::TwoQubit => 2,
            DeviceKind::W3 => 3,
        }
    }

    pub fn target(&self) -> PureState {
        match self.kind {
            DeviceKind::TwoQubit => crate::quantum::make_theta_state(FRAC_PI_4),
            DeviceKind::W3 => make_w_state(3).expect("W3 is supported"),
        }
    }

    fn check_knobs(&self, knobs: &[f64]) -> Result<(), FeedbackError> {
        if knobs.len() != self.knobs.len() || knobs.iter().any(|k| !k.is_finite()) {
            return Err(FeedbackError::Input(format!("expected {} finite knob values", self.knobs.len())));
        }
        Ok(())
    }

    /// State emitted at the current knobs.
    pub fn emit(&self) -> Result<DensityMatrix, FeedbackError> {
        self.emit_at(&self.knobs)
    }

    /// State emitted at the given knobs: the pure state at knobs plus
    /// offsets, followed by the intrinsic noise.
    pub fn emit_at(&self, knobs: &[f64]) -> Result<DensityMatrix, FeedbackError> {
        self.check_knobs(knobs)?;
        let p: Vec<f64> = knobs.iter().zip(&self.offsets).map(|(k, o)| k + o).collect();
        let pure = match self.kind {
            DeviceKind::TwoQubit => crate::quantum::make_theta_phase_state(p[0], p[1]),
            DeviceKind::W3 => {
                // qubits: A polarization, A path, B
                let (s, c) = p[0].sin_cos();
                let e = C64::from_polar(c, p[1]);
                let (sx, cx) = p[2].sin_cos();
                let mut amps = vec![C64::new(0.0, 0.0); 8];
                amps[0b001] = C64::new(s, 0.0);
                amps[0b100] = e * cx;
                amps[0b010] = e * sx;
                PureState::normalized(amps)?
            }
        };
        let rho = pure.to_density();
        Ok(match &self.noise {
            Some(n) => apply_noise(&rho, n)?,
            None => rho,
        })
    }

    /// Trace-oracle fidelity to the target at the given knobs. For test
    /// harnesses only; tuners never pass it to the optimizer.
    pub fn oracle_fidelity(&self, knobs: &[f64]) -> Result<f64, FeedbackError> {
        Ok(self.emit_at(knobs)?.fidelity(&self.target())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// QSV tests per evaluation, or tomography shots per setting.
    pub batch: u64,
    /// Total sample budget.
    pub budget: u64,
    pub max_iterations: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Record the trace-oracle fidelity of every evaluated point.
    pub record_oracle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub iteration: usize,
    pub knobs: Vec<f64>,
    pub batch: u64,
    pub f_est: f64,
    pub std: Option<f64>,
    pub cumulative_samples: u64,
    pub f_true: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMethod {
    Qsv,
    Qst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub method: TuneMethod,
    pub knob_names: Vec<String>,
    pub samples_per_evaluation: u64,
    pub rows: Vec<TuneRecord>,
    pub final_knobs: Vec<f64>,
    pub termination: TerminationReason,
}

impl TuneTrace {
    pub fn total_samples(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.cumulative_samples)
    }

    /// Cumulative samples at the first evaluation whose oracle fidelity
    /// reaches `threshold`.
    pub fn samples_to_threshold(&self, threshold: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.f_true.is_some_and(|f| f >= threshold)).map(|r| r.cumulative_samples)
    }

    /// Writes `iteration,<knobs>,f_est,std,cumulative_samples[,f_true_oracle]`.
    pub fn write_csv<W: Write>(&self, out: W, oracle_column: bool) -> Result<(), FeedbackError> {
        if oracle_column && self.rows.iter().any(|r| r.f_true.is_none()) {
            return Err(FeedbackError::Input("trace was recorded without oracle values".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.knob_names.iter().cloned());
        header.extend(["f_est", "std", "cumulative_samples"].map(String::from));
        if oracle_column {
            header.push("f_true_oracle".into());
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iteration.to_string()];
            rec.extend(r.knobs.iter().map(|k| k.to_string()));
            rec.push(r.f_est.to_string());
            rec.push(r.std.map_or(String::new(), |s| s.to_string()));
            rec.push(r.cumulative_samples.to_string());
            if oracle_column {
                rec.push(r.f_true.expect("checked above").to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Per-evaluation estimator, hidden behind [`Objective`].
trait Estimator {
    fn cost(&self) -> u64;
    fn estimate(&self, state: &DensityMatrix, seed: u64) -> Result<(f64, Option<f64>), FeedbackError>;
}

struct QsvEstimator<'a> {
    strategy: &'a VerificationStrategy,
    tests: u64,
}

impl Estimator for QsvEstimator<'_> {
    fn cost(&self) -> u64 {
        self.tests
    }

    fn estimate(&self, state: &DensityMatrix, seed: u64) -> Result<(f64, Option<f64>), FeedbackError> {
        let s = self.strategy;
        let t = count_passes(s, &FixedSource(state.clone()), self.tests, seed, &[], SamplerLevel::Operator)?;
        let e = estimate_fidelity(t as f64 / self.tests as f64, self.tests, s.nu(), s.is_homogeneous())?;
        Ok(match e.point {
            Some(p) => (p, e.std),
            None => (0.5 * (e.lower + e.upper), None),
        })
    }
}

struct QstEstimator {
    shots_per_setting: u64,
    settings: u64,
    target: PureState,
}

impl Estimator for QstEstimator {
    fn cost(&self) -> u64 {
        self.shots_per_setting * self.settings
    }

    fn estimate(&self, state: &DensityMatrix, seed: u64) -> Result<(f64, Option<f64>), FeedbackError> {
        let data = simulate_tomography_data(state, self.shots_per_setting, seed)?;
        let r = reconstruct_mle(&data, Some(&self.target))?;
        Ok((r.fidelity.expect("target given"), None))
    }
}

struct Evaluator<'a> {
    device: &'a DeviceModel,
    estimator: &'a dyn Estimator,
    budget: u64,
    seed: u64,
    record_oracle: bool,
    rows: Vec<TuneRecord>,
    used: u64,
    error: Option<FeedbackError>,
}

impl Evaluator<'_> {
    fn try_evaluate(&mut self, iteration: usize, knobs: &[f64]) -> Result<f64, FeedbackError> {
        let state = self.device.emit_at(knobs)?;
        let (f_est, std) = self.estimator.estimate(&state, derive_seed(self.seed, &[self.rows.len() as u64]))?;
        self.used += self.estimator.cost();
        let f_true = if self.record_oracle { Some(state.fidelity(&self.device.target())?) } else { None };
        self.rows.push(TuneRecord {
            iteration,
            knobs: knobs.to_vec(),
            batch: self.estimator.cost(),
            f_est,
            std,
            cumulative_samples: self.used,
            f_true,
        });
        Ok(f_est)
    }
}

impl Objective for Evaluator<'_> {
    fn evaluate(&mut self, iteration: usize, knobs: &[f64]) -> Option<f64> {
        if self.error.is_some() || self.remaining_evaluations() == 0 {
            return None;
        }
        match self.try_evaluate(iteration, knobs) {
            Ok(f) => Some(f),
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }

    fn remaining_evaluations(&self) -> u64 {
        (self.budget - self.used) / self.estimator.cost()
    }
}

fn tune(
    device: &DeviceModel,
    estimator: &dyn Estimator,
    method: TuneMethod,
    opts: &TuneOptions,
) -> Result<TuneTrace, FeedbackError> {
    if estimator.cost() == 0 {
        return Err(FeedbackError::Input("batch must be at least 1".into()));
    }
    if opts.budget < estimator.cost() {
        return Err(FeedbackError::Input(format!(
            "budget {} is below the cost of one evaluation ({})",
            opts.budget,
            estimator.cost()
        )));
    }
    let mut eval = Evaluator {
        device,
        estimator,
        budget: opts.budget,
        seed: opts.seed,
        record_oracle: opts.record_oracle,
        rows: Vec::new(),
        used: 0,
        error: None,
    };
    let mut rng = stream(opts.seed, &[u64::MAX]);
    let (final_knobs, termination) = maximize(&opts.optimizer, device.knobs(), opts.max_iterations, &mut eval, &mut rng);
    if let Some(e) = eval.error {
        return Err(e);
    }
    Ok(TuneTrace {
        method,
        knob_names: device.knob_names().iter().map(|s| s.to_string()).collect(),
        samples_per_evaluation: estimator.cost(),
        rows: eval.rows,
        final_knobs,
        termination,
    })
}

/// Tunes the knobs on QSV fidelity estimates from `opts.batch` tests each.
pub fn tune_with_qsv(
    device: &DeviceModel,
    strategy: &VerificationStrategy,
    opts: &TuneOptions,
) -> Result<TuneTrace, FeedbackError> {
    let overlap = strategy.target().inner(&device.target()).norm_sqr();
    if (overlap - 1.0).abs() > 1e-9 {
        return Err(FeedbackError::Input(format!("strategy {} does not verify the device target", strategy.label())));
    }
    tune(device, &QsvEstimator { strategy, tests: opts.batch }, TuneMethod::Qsv, opts)
}

/// Tunes the knobs on tomographic fidelities from `opts.batch` shots per
/// Pauli setting.
pub fn tune_with_qst(device: &DeviceModel, opts: &TuneOptions) -> Result<TuneTrace, FeedbackError> {
    let est = QstEstimator {
        shots_per_setting: opts.batch,
        settings: 3u64.pow(device.n_qubits() as u32),
        target: device.target(),
    };
    tune(device, &est, TuneMethod::Qst, opts)
}
