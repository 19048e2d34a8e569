//! Reproducible experiment recipes: a TOML config in, a JSON report and
//! CSV data tables out.
//!
//! All randomness derives from the config's master seed. Each command draws
//! from its own substream, so adding a command never perturbs another.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    chsh_s, fit_scaling_exponent, mean_certified_epsilon, simulate_polarization_counts, AnalysisError, AnalysisReport,
    CHSH_COL_ANGLES, CHSH_ROW_ANGLES,
};
use crate::feedback::{
    tune_with_qsv, tune_with_qst, DeviceKind, DeviceModel, FeedbackError, OptimizerConfig, TuneOptions, TuneTrace,
};
use crate::io::{read_count_table, write_count_table, DataTable, IoError, Metadata};
use crate::quantum::{apply_noise, make_theta_phase_state, make_w_state, DensityMatrix, NoiseModel, PureState, QuantumError};
use crate::rng::{derive_seed, stream};
use crate::sampler::{count_passes, log_grid, run, run_scaling_sweep, FixedSource, SamplerError, SamplerLevel};
use crate::strategy::{
    build_omega_adaptive_wn, build_omega_hom_w3, build_omega_opt_2q, worst_case_state, StrategyError,
    VerificationStrategy,
};
use crate::tomography::{fidelity_convergence_study, reconstruct_mle, simulate_tomography_data, TomographyError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
}

fn config_error(field: &str, message: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(format!("{field}: {message}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    HomW3,
    AdaptiveW { n: usize },
    Opt2q { theta: f64 },
}

impl StrategySpec {
    pub fn build(&self) -> Result<VerificationStrategy, StrategyError> {
        match self {
            StrategySpec::HomW3 => build_omega_hom_w3(),
            StrategySpec::AdaptiveW { n } => build_omega_adaptive_wn(*n),
            StrategySpec::Opt2q { theta } => build_omega_opt_2q(*theta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// The strategy's own target.
    Target,
    W { n: usize },
    /// `sinθ|01⟩ + e^{iφ}cosθ|10⟩`.
    Theta {
        theta: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Worst-case state of the strategy at infidelity `epsilon`.
    WorstCase { epsilon: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub state: StateSpec,
    /// Channel applied to the state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    /// Shorthand for depolarizing noise giving this fidelity to a pure state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self { state: StateSpec::Target, noise: None, fidelity: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    pub offsets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneWith {
    Qsv,
    Qst,
    Both,
}

fn default_level() -> SamplerLevel {
    SamplerLevel::Operator
}

fn default_tune_with() -> TuneWith {
    TuneWith::Qsv
}

fn default_threshold() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandSpec {
    /// One run of `tests` tests with a hypothesis-test report.
    Verify {
        tests: u64,
        #[serde(default = "default_level")]
        level: SamplerLevel,
    },
    /// Repeated runs with per-trial fidelity estimates.
    Estimate {
        tests: u64,
        trials: usize,
        #[serde(default = "default_level")]
        level: SamplerLevel,
    },
    /// Certified infidelity over a log-spaced grid of test counts.
    Scaling {
        n_min: u64,
        n_max: u64,
        points: usize,
        trials: usize,
        #[serde(default = "default_level")]
        level: SamplerLevel,
    },
    /// CHSH value from a count table file, or from counts simulated on the
    /// source when `table` is absent.
    Chsh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counts_per_setting: Option<u64>,
    },
    /// Tomography convergence study over total photon budgets.
    Tomography { budgets: Vec<u64>, repetitions: usize },
    /// Closed-loop tuning of a simulated device.
    Tune {
        device: DeviceSpec,
        batch: u64,
        budget: u64,
        max_iterations: usize,
        #[serde(default = "default_tune_with")]
        with: TuneWith,
        /// Tomography shots per setting and evaluation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qst_shots: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qst_budget: Option<u64>,
        #[serde(default)]
        optimizer: OptimizerConfig,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Resource comparison of one QSV run and one tomography run on the
    /// same source.
    Compare { tests: u64, tomography_samples: u64 },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Verify { .. } => "verify",
            CommandSpec::Estimate { .. } => "estimate",
            CommandSpec::Scaling { .. } => "scaling",
            CommandSpec::Chsh { .. } => "chsh",
            CommandSpec::Tomography { .. } => "tomography",
            CommandSpec::Tune { .. } => "tune",
            CommandSpec::Compare { .. } => "compare",
        }
    }

    fn index(&self) -> u64 {
        match self {
            CommandSpec::Verify { .. } => 0,
            CommandSpec::Estimate { .. } => 1,
            CommandSpec::Scaling { .. } => 2,
            CommandSpec::Chsh { .. } => 3,
            CommandSpec::Tomography { .. } => 4,
            CommandSpec::Tune { .. } => 5,
            CommandSpec::Compare { .. } => 6,
        }
    }
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    pub run: CommandSpec,
}

impl ExperimentConfig {
    /// Parses and validates a config; parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::File { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replaces the trial or repetition count of commands that have one.
    pub fn override_trials(&mut self, trials: usize) {
        match &mut self.run {
            CommandSpec::Estimate { trials: t, .. } | CommandSpec::Scaling { trials: t, .. } => *t = trials,
            CommandSpec::Tomography { repetitions, .. } => *repetitions = trials,
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_error("delta", "must lie in (0, 1)"));
        }
        if let Some(src) = &self.source {
            if src.noise.is_some() && src.fidelity.is_some() {
                return Err(config_error("source", "give either noise or fidelity, not both"));
            }
            if let Some(f) = src.fidelity {
                if !(0.0..=1.0).contains(&f) {
                    return Err(config_error("source.fidelity", "must lie in [0, 1]"));
                }
            }
            if let Some(n) = &src.noise {
                n.validate().map_err(|e| config_error("source.noise", e))?;
            }
            if matches!(src.state, StateSpec::Target | StateSpec::WorstCase { .. }) && self.strategy.is_none() {
                return Err(config_error("source.state", "needs a [strategy] section"));
            }
        }
        let positive = |field: &str, v: u64| if v == 0 { Err(config_error(field, "must be at least 1")) } else { Ok(()) };
        match &self.run {
            CommandSpec::Verify { tests, .. } => {
                positive("run.tests", *tests)?;
                self.need_strategy()?;
            }
            CommandSpec::Estimate { tests, trials, .. } => {
                positive("run.tests", *tests)?;
                positive("run.trials", *trials as u64)?;
                self.need_strategy()?;
            }
            CommandSpec::Scaling { n_min, n_max, points, trials, .. } => {
                positive("run.n_min", *n_min)?;
                if n_max <= n_min {
                    return Err(config_error("run.n_max", "must exceed n_min"));
                }
                if *points < 3 {
                    return Err(config_error("run.points", "need at least 3 grid points"));
                }
                positive("run.trials", *trials as u64)?;
                self.need_strategy()?;
            }
            CommandSpec::Chsh { table, counts_per_setting } => match (table, counts_per_setting) {
                (Some(_), Some(_)) => return Err(config_error("run", "give either table or counts_per_setting")),
                (None, None) => return Err(config_error("run", "chsh needs table or counts_per_setting")),
                (None, Some(c)) => positive("run.counts_per_setting", *c)?,
                _ => {}
            },
            CommandSpec::Tomography { budgets, repetitions } => {
                if budgets.is_empty() || budgets.contains(&0) {
                    return Err(config_error("run.budgets", "need at least one positive budget"));
                }
                if *repetitions < 2 {
                    return Err(config_error("run.repetitions", "need at least 2"));
                }
            }
            CommandSpec::Tune { batch, budget, with, qst_shots, qst_budget, threshold, .. } => {
                positive("run.batch", *batch)?;
                positive("run.budget", *budget)?;
                if *with != TuneWith::Qsv && (qst_shots.is_none() || qst_budget.is_none()) {
                    return Err(config_error("run", "tomography tuning needs qst_shots and qst_budget"));
                }
                if !(0.0..=1.0).contains(threshold) {
                    return Err(config_error("run.threshold", "must lie in [0, 1]"));
                }
            }
            CommandSpec::Compare { tests, tomography_samples } => {
                positive("run.tests", *tests)?;
                positive("run.tomography_samples", *tomography_samples)?;
                self.need_strategy()?;
            }
        }
        Ok(())
    }

    fn need_strategy(&self) -> Result<(), ExperimentError> {
        match self.strategy {
            Some(_) => Ok(()),
            None => Err(config_error("strategy", format!("required by the {} command", self.run.name()))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
    pub test_mode: bool,
    /// Adds trace-oracle columns; refused outside test mode.
    pub oracle_columns: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: Value,
    pub files: Vec<PathBuf>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    opts: &'a RunOptions,
    metadata: Metadata,
    seed: u64,
    files: Vec<PathBuf>,
}

impl Context<'_> {
    fn strategy(&self) -> Result<VerificationStrategy, ExperimentError> {
        let spec = self.config.strategy.as_ref().ok_or_else(|| config_error("strategy", "missing"))?;
        Ok(spec.build()?)
    }

    /// Target state and the emitted (noisy) state.
    fn source(&self, strategy: Option<&VerificationStrategy>) -> Result<(PureState, DensityMatrix), ExperimentError> {
        let spec = self.config.source.clone().unwrap_or_default();
        let need = || strategy.ok_or_else(|| config_error("strategy", "required by source.state"));
        let (target, rho) = match spec.state {
            StateSpec::Target => {
                let s = need()?;
                (s.target().clone(), s.target().to_density())
            }
            StateSpec::W { n } => {
                let w = make_w_state(n)?;
                (w.clone(), w.to_density())
            }
            StateSpec::Theta { theta, phi } => {
                let psi = make_theta_phase_state(theta, phi);
                (psi.clone(), psi.to_density())
            }
            StateSpec::WorstCase { epsilon } => {
                let s = need()?;
                (s.target().clone(), worst_case_state(s, epsilon)?)
            }
        };
        let noise = match spec.fidelity {
            Some(f) => Some(NoiseModel::depolarizing_for_fidelity(f, target.n_qubits())?),
            None => spec.noise,
        };
        let rho = match noise {
            Some(n) => apply_noise(&rho, &n)?,
            None => rho,
        };
        if let Some(s) = strategy {
            if s.target().n_qubits() != rho.n_qubits() {
                return Err(config_error(
                    "source",
                    format!("{}-qubit state for a {}-qubit strategy", rho.n_qubits(), s.target().n_qubits()),
                ));
            }
        }
        Ok((target, rho))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.opts.out_dir.join(name)
    }

    fn write_table(&mut self, name: &str, table: &DataTable) -> Result<(), ExperimentError> {
        let path = self.path(name);
        table.write_file(&path, Some(&self.metadata))?;
        self.files.push(path);
        Ok(())
    }

    fn write_with_metadata(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<(), ExperimentError>,
    ) -> Result<(), ExperimentError> {
        let path = self.path(name);
        let mut buf = format!("{}\n", self.metadata).into_bytes();
        body(&mut buf)?;
        std::fs::write(&path, buf).map_err(|source| ExperimentError::File { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn oracle(&self) -> bool {
        self.opts.oracle_columns
    }
}

fn strategy_summary(s: &VerificationStrategy) -> Value {
    json!({
        "label": s.label(),
        "settings": s.n_settings(),
        "nu": s.nu(),
        "homogeneous": s.is_homogeneous(),
    })
}

/// Runs the configured command, writing `report.json` and any data tables
/// into `opts.out_dir`.
pub fn run_command(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    if opts.oracle_columns && !opts.test_mode {
        return Err(ExperimentError::Config("oracle columns are only available in test mode".into()));
    }
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|source| ExperimentError::File { path: opts.out_dir.clone(), source })?;
    let mut ctx = Context {
        config,
        opts,
        metadata: Metadata::new(config.seed, config.hash()),
        seed: derive_seed(config.seed, &[config.run.index()]),
        files: Vec::new(),
    };
    let result = match &config.run {
        CommandSpec::Verify { tests, level } => verify(&mut ctx, *tests, *level)?,
        CommandSpec::Estimate { tests, trials, level } => estimate(&mut ctx, *tests, *trials, *level)?,
        CommandSpec::Scaling { n_min, n_max, points, trials, level } => {
            scaling(&mut ctx, log_grid(*n_min, *n_max, *points), *trials, *level)?
        }
        CommandSpec::Chsh { table, counts_per_setting } => chsh(&mut ctx, table.as_deref(), *counts_per_setting)?,
        CommandSpec::Tomography { budgets, repetitions } => tomography(&mut ctx, budgets, *repetitions)?,
        CommandSpec::Tune { .. } => tune(&mut ctx)?,
        CommandSpec::Compare { tests, tomography_samples } => compare(&mut ctx, *tests, *tomography_samples)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": ctx.metadata.tool_version,
        "command": config.run.name(),
        "seed": config.seed,
        "config_sha256": ctx.metadata.config_hash,
        "test_mode": opts.test_mode,
        "result": result,
    });
    let path = ctx.path("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(|source| ExperimentError::File { path: path.clone(), source })?;
    ctx.files.insert(0, path);
    Ok(RunOutcome { report, files: ctx.files })
}

fn verify(ctx: &mut Context, tests: u64, level: SamplerLevel) -> Result<Value, ExperimentError> {
    let s = ctx.strategy()?;
    let (target, rho) = ctx.source(Some(&s))?;
    let result = run(&s, &FixedSource(rho.clone()), tests, ctx.seed, level)?;
    let report = AnalysisReport::new(tests, result.summary.t, s.nu(), s.is_homogeneous(), ctx.config.delta)?;
    ctx.write_with_metadata("records.csv", |buf| Ok(crate::sampler::write_records(&result.records, buf)?))?;
    let mut out = json!({
        "strategy": strategy_summary(&s),
        "level": level,
        "analysis": report,
        "certified_fidelity": report.epsilon_certified.map(|e| 1.0 - e),
    });
    if ctx.oracle() {
        out["oracle_fidelity"] = json!(rho.fidelity(&target)?);
    }
    Ok(out)
}

fn estimate(ctx: &mut Context, tests: u64, trials: usize, level: SamplerLevel) -> Result<Value, ExperimentError> {
    let s = ctx.strategy()?;
    let (target, rho) = ctx.source(Some(&s))?;
    let source = FixedSource(rho.clone());
    let mut columns = vec!["trial", "t", "f", "f_est", "std", "lower", "upper", "epsilon_certified"];
    if ctx.oracle() {
        columns.push("f_true_oracle");
    }
    let oracle = rho.fidelity(&target)?;
    let mut table = DataTable::new(columns);
    let mut estimates = Vec::with_capacity(trials);
    for k in 0..trials {
        let t = count_passes(&s, &source, tests, ctx.seed, &[k as u64], level)?;
        let r = AnalysisReport::new(tests, t, s.nu(), s.is_homogeneous(), ctx.config.delta)?;
        let e = r.fidelity;
        let point = e.point.unwrap_or(0.5 * (e.lower + e.upper));
        estimates.push(point);
        let mut row = vec![
            k as f64,
            t as f64,
            r.f,
            point,
            e.std.unwrap_or(f64::NAN),
            e.lower,
            e.upper,
            r.epsilon_certified.unwrap_or(f64::NAN),
        ];
        if ctx.oracle() {
            row.push(oracle);
        }
        table.push(row)?;
    }
    ctx.write_table("estimate.csv", &table)?;
    let m = trials as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let spread = if trials > 1 {
        (estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let stds = table.column("std").unwrap_or_default();
    let mut out = json!({
        "strategy": strategy_summary(&s),
        "tests": tests,
        "trials": trials,
        "mean_fidelity": mean,
        "fidelity_spread": spread,
        "max_std": stds.iter().cloned().fold(f64::NAN, f64::max),
        "std_bound": 1.0 / (2.0 * s.nu() * (tests as f64).sqrt()),
    });
    if ctx.oracle() {
        out["oracle_fidelity"] = json!(oracle);
    }
    Ok(out)
}

fn scaling(ctx: &mut Context, grid: Vec<u64>, trials: usize, level: SamplerLevel) -> Result<Value, ExperimentError> {
    let s = ctx.strategy()?;
    let (_, rho) = ctx.source(Some(&s))?;
    let points = run_scaling_sweep(&s, &FixedSource(rho), &grid, trials, ctx.seed, level)?;
    let mut table = DataTable::new(["n", "mean_f", "mean_epsilon_certified", "failed_trials", "estimated_infidelity"]);
    let mut fit_points = Vec::new();
    for p in &points {
        let (eps, failed) = mean_certified_epsilon(&p.frequencies, p.n, s.nu(), ctx.config.delta)?;
        let est = crate::analysis::estimate_fidelity(p.mean_f, p.n, s.nu(), s.is_homogeneous())?;
        table.push(vec![p.n as f64, p.mean_f, eps.unwrap_or(f64::NAN), failed as f64, 1.0 - est.upper])?;
        if let Some(e) = eps {
            fit_points.push((p.n as f64, e));
        }
    }
    ctx.write_table("scaling.csv", &table)?;
    let fit = fit_scaling_exponent(&fit_points).ok();
    Ok(json!({
        "strategy": strategy_summary(&s),
        "grid": grid,
        "trials": trials,
        "fit": fit,
    }))
}

fn chsh(ctx: &mut Context, table: Option<&Path>, counts: Option<u64>) -> Result<Value, ExperimentError> {
    let counts_table = match (table, counts) {
        (Some(path), _) => read_count_table(&ctx.opts.base_dir.join(path))?,
        (None, Some(c)) => {
            let strategy = ctx.config.strategy.as_ref().map(StrategySpec::build).transpose()?;
            let (_, rho) = ctx.source(strategy.as_ref())?;
            let mut rng = stream(ctx.seed, &[]);
            simulate_polarization_counts(&rho, CHSH_ROW_ANGLES, CHSH_COL_ANGLES, c, &mut rng)?
        }
        (None, None) => return Err(config_error("run", "chsh needs table or counts_per_setting")),
    };
    let r = chsh_s(&counts_table)?;
    ctx.write_with_metadata("counts.csv", |buf| Ok(write_count_table(&counts_table, buf)?))?;
    Ok(json!({
        "s": r.s,
        "std_error": r.std_error,
        "correlators": r.correlators,
        "violates_local_bound": r.s.abs() > 2.0,
    }))
}

fn tomography(ctx: &mut Context, budgets: &[u64], repetitions: usize) -> Result<Value, ExperimentError> {
    let strategy = ctx.config.strategy.as_ref().map(StrategySpec::build).transpose()?;
    let (target, rho) = ctx.source(strategy.as_ref())?;
    let rows = fidelity_convergence_study(&rho, &target, budgets, repetitions, ctx.seed)?;
    let mut table = DataTable::new(["total_photons", "mean_fidelity", "std"]);
    for r in &rows {
        table.push(vec![r.total_photons as f64, r.mean_fidelity, r.std])?;
    }
    ctx.write_table("tomography.csv", &table)?;
    let last = rows.last().expect("budgets validated non-empty");
    let mut out = json!({
        "qubits": rho.n_qubits(),
        "settings": 3usize.pow(rho.n_qubits() as u32),
        "repetitions": repetitions,
        "final_mean_fidelity": last.mean_fidelity,
        "final_std": last.std,
    });
    if ctx.oracle() {
        out["oracle_fidelity"] = json!(rho.fidelity(&target)?);
    }
    Ok(out)
}

fn trace_summary(trace: &TuneTrace, device: &DeviceModel, threshold: f64, oracle: bool) -> Result<Value, ExperimentError> {
    let last = trace.rows.last().expect("at least one evaluation");
    let mut out = json!({
        "method": trace.method,
        "evaluations": trace.rows.len(),
        "samples_per_evaluation": trace.samples_per_evaluation,
        "total_samples": trace.total_samples(),
        "final_knobs": trace.final_knobs,
        "last_estimate": last.f_est,
        "termination": trace.termination,
    });
    if oracle {
        out["final_oracle_fidelity"] = json!(device.oracle_fidelity(&trace.final_knobs)?);
        out["samples_to_threshold"] = json!(trace.samples_to_threshold(threshold));
    }
    Ok(out)
}

fn tune(ctx: &mut Context) -> Result<Value, ExperimentError> {
    let CommandSpec::Tune { device, batch, budget, max_iterations, with, qst_shots, qst_budget, optimizer, threshold } =
        &ctx.config.run
    else {
        unreachable!("dispatched on the tune command")
    };
    let model = DeviceModel::new(device.kind, device.offsets.clone(), device.noise.clone())?;
    // a config without a strategy gets the one matching the device target
    let strategy = match &ctx.config.strategy {
        Some(spec) => spec.build()?,
        None => match device.kind {
            DeviceKind::TwoQubit => build_omega_opt_2q(std::f64::consts::FRAC_PI_4)?,
            DeviceKind::W3 => build_omega_hom_w3()?,
        },
    };
    // the oracle is recorded whenever the comparison needs it, but only
    // exported when requested
    let record = ctx.opts.test_mode;
    let base = TuneOptions {
        batch: *batch,
        budget: *budget,
        max_iterations: *max_iterations,
        optimizer: *optimizer,
        seed: ctx.seed,
        record_oracle: record,
    };
    let oracle = ctx.oracle();
    let mut out = json!({ "device": device.kind, "knobs": model.knob_names() });
    if matches!(with, TuneWith::Qsv | TuneWith::Both) {
        let trace = tune_with_qsv(&model, &strategy, &base)?;
        ctx.write_with_metadata("tune_qsv.csv", |buf| Ok(trace.write_csv(buf, oracle)?))?;
        out["qsv"] = trace_summary(&trace, &model, *threshold, record)?;
    }
    if matches!(with, TuneWith::Qst | TuneWith::Both) {
        let opts = TuneOptions {
            batch: qst_shots.expect("validated"),
            budget: qst_budget.expect("validated"),
            ..base.clone()
        };
        let trace = tune_with_qst(&model, &opts)?;
        ctx.write_with_metadata("tune_qst.csv", |buf| Ok(trace.write_csv(buf, oracle)?))?;
        out["qst"] = trace_summary(&trace, &model, *threshold, record)?;
    }
    Ok(out)
}

fn compare(ctx: &mut Context, tests: u64, tomography_samples: u64) -> Result<Value, ExperimentError> {
    let s = ctx.strategy()?;
    let (target, rho) = ctx.source(Some(&s))?;
    let t = count_passes(&s, &FixedSource(rho.clone()), tests, ctx.seed, &[0], SamplerLevel::Operator)?;
    let report = AnalysisReport::new(tests, t, s.nu(), s.is_homogeneous(), ctx.config.delta)?;
    let settings = 3u64.pow(rho.n_qubits() as u32);
    let shots = (tomography_samples / settings).max(1);
    let data = simulate_tomography_data(&rho, shots, derive_seed(ctx.seed, &[1]))?;
    let rec = reconstruct_mle(&data, Some(&target))?;
    let mut out = json!({
        "qsv": {
            "strategy": s.label(),
            "settings": s.n_settings(),
            "samples": tests,
            "nu": s.nu(),
            "fidelity_estimate": report.fidelity,
            "certified_fidelity": report.epsilon_certified.map(|e| 1.0 - e),
        },
        "qst": {
            "settings": settings,
            "samples": shots * settings,
            "fidelity": rec.fidelity,
            "mle_iterations": rec.iterations,
        },
    });
    if ctx.oracle() {
        out["oracle_fidelity"] = json!(rho.fidelity(&target)?);
    }
    Ok(out)
}
