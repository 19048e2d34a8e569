//! Monte Carlo execution of verification tests against a simulated source.
//!
//! Two levels of realism share one trial loop. The operator level passes
//! each test with probability `Tr(Ω_l σ)`; the circuit level plays the first
//! stage measurement with collapse, follows the branch and performs the
//! second-stage test. Each test owns the random stream addressed by
//! `(master seed, prefix.., test index)`, so results do not depend on how
//! rayon schedules the work.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::measure::sample_index;
use crate::quantum::{DensityMatrix, QuantumError};
use crate::rng::{stream, stream_id};
use crate::strategy::VerificationStrategy;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("source produced an invalid state at trial {trial}: {source}")]
    Source { trial: u64, source: QuantumError },
    #[error("source state at trial {trial} has dimension {got}, strategy expects {expected}")]
    Dimension { trial: u64, got: usize, expected: usize },
    #[error("invalid sampler input: {0}")]
    Input(String),
    #[error("failed to write records: {0}")]
    Csv(#[from] csv::Error),
}

/// Produces the state handed to the verifier in each test.
///
/// The trial index is passed so that time-varying sources are expressible;
/// i.i.d. sources ignore it.
pub trait Source: Sync {
    fn emit(&self, trial: u64) -> Result<DensityMatrix, QuantumError>;
}

impl<F> Source for F
where
    F: Fn(u64) -> Result<DensityMatrix, QuantumError> + Sync,
{
    fn emit(&self, trial: u64) -> Result<DensityMatrix, QuantumError> {
        self(trial)
    }
}

/// Emits the same state every time.
#[derive(Clone, Debug)]
pub struct FixedSource(pub DensityMatrix);

impl Source for FixedSource {
    fn emit(&self, _trial: u64) -> Result<DensityMatrix, QuantumError> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerLevel {
    #[default]
    Operator,
    Circuit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestRecord {
    pub trial: u64,
    pub setting: Arc<str>,
    pub passed: bool,
    /// First-stage outcome index for adaptive settings at circuit level.
    pub first_outcome: Option<usize>,
    pub stream_id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRunSummary {
    pub n: u64,
    pub t: u64,
    pub f: f64,
    pub strategy: String,
    pub seed: u64,
}

impl TestRunSummary {
    fn new(strategy: &VerificationStrategy, n: u64, t: u64, seed: u64) -> Self {
        Self { n, t, f: t as f64 / n as f64, strategy: strategy.label().to_string(), seed }
    }
}

#[derive(Clone, Debug)]
pub struct TestRun {
    pub summary: TestRunSummary,
    pub records: Vec<TestRecord>,
}

/// Runs `n` tests at the given level, keeping the per-test records.
pub fn run(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    n: u64,
    seed: u64,
    level: SamplerLevel,
) -> Result<TestRun, SamplerError> {
    check_n(n)?;
    let labels: Vec<Arc<str>> = strategy.settings().iter().map(|s| Arc::from(s.label())).collect();
    let records = (0..n)
        .into_par_iter()
        .map(|trial| {
            let path = [trial];
            let (setting, outcome) = one_test(strategy, source, trial, seed, &path, level)?;
            Ok(TestRecord {
                trial,
                setting: labels[setting].clone(),
                passed: outcome.passed,
                first_outcome: outcome.first_outcome,
                stream_id: stream_id(seed, &path),
            })
        })
        .collect::<Result<Vec<_>, SamplerError>>()?;
    let t = records.iter().filter(|r| r.passed).count() as u64;
    Ok(TestRun { summary: TestRunSummary::new(strategy, n, t, seed), records })
}

pub fn run_operator_level(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    n: u64,
    seed: u64,
) -> Result<TestRunSummary, SamplerError> {
    count_passes(strategy, source, n, seed, &[], SamplerLevel::Operator)
        .map(|t| TestRunSummary::new(strategy, n, t, seed))
}

pub fn run_circuit_level(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    n: u64,
    seed: u64,
) -> Result<TestRunSummary, SamplerError> {
    count_passes(strategy, source, n, seed, &[], SamplerLevel::Circuit)
        .map(|t| TestRunSummary::new(strategy, n, t, seed))
}

/// Pass counts for `n` tests whose streams live under `prefix`.
pub fn count_passes(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    n: u64,
    seed: u64,
    prefix: &[u64],
    level: SamplerLevel,
) -> Result<u64, SamplerError> {
    check_n(n)?;
    (0..n)
        .into_par_iter()
        .map(|trial| {
            let mut path = prefix.to_vec();
            path.push(trial);
            one_test(strategy, source, trial, seed, &path, level).map(|(_, o)| u64::from(o.passed))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn check_n(n: u64) -> Result<(), SamplerError> {
    if n == 0 {
        return Err(SamplerError::Input("number of tests must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Outcome {
    passed: bool,
    first_outcome: Option<usize>,
}

fn one_test(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    trial: u64,
    seed: u64,
    path: &[u64],
    level: SamplerLevel,
) -> Result<(usize, Outcome), SamplerError> {
    let sigma = source.emit(trial).map_err(|source| SamplerError::Source { trial, source })?;
    let expected = strategy.target().dim();
    if sigma.dim() != expected {
        return Err(SamplerError::Dimension { trial, got: sigma.dim(), expected });
    }
    let mut rng = stream(seed, path);
    let l = sample_index(strategy.probabilities(), &mut rng);
    let setting = &strategy.settings()[l];
    let outcome = match level {
        SamplerLevel::Operator => {
            Outcome { passed: rng.random::<f64>() < setting.pass_probability(&sigma), first_outcome: None }
        }
        SamplerLevel::Circuit => {
            let o = setting.run_circuit(&sigma, &mut rng);
            Outcome { passed: o.passed, first_outcome: o.first_outcome }
        }
    };
    Ok((l, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: u64,
    pub mean_f: f64,
    pub frequencies: Vec<f64>,
}

/// Runs `trials` independent experiments of `N` tests for every `N` in the
/// grid. Trial `k` at grid index `g` draws from the streams under `[g, k]`.
pub fn run_scaling_sweep(
    strategy: &VerificationStrategy,
    source: &dyn Source,
    grid: &[u64],
    trials: usize,
    seed: u64,
    level: SamplerLevel,
) -> Result<Vec<ScalingPoint>, SamplerError> {
    if trials == 0 {
        return Err(SamplerError::Input("trials per grid point must be at least 1".into()));
    }
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SamplerError::Input("grid must be non-empty, positive and strictly ascending".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(g, &n)| {
            let frequencies = (0..trials)
                .into_par_iter()
                .map(|k| {
                    count_passes(strategy, source, n, seed, &[g as u64, k as u64], level).map(|t| t as f64 / n as f64)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mean_f = frequencies.iter().sum::<f64>() / trials as f64;
            Ok(ScalingPoint { n, mean_f, frequencies })
        })
        .collect()
}

/// Log-spaced integer grid from `lo` to `hi` inclusive, deduplicated.
pub fn log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    if points < 2 || lo >= hi {
        return vec![lo.max(1)];
    }
    let (a, b) = ((lo.max(1) as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> =
        (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as u64).collect();
    out.dedup();
    out
}

/// Writes records as `trial,setting,passed`.
pub fn write_records<W: Write>(records: &[TestRecord], out: W) -> Result<(), SamplerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "setting", "passed"])?;
    for r in records {
        w.write_record([r.trial.to_string().as_str(), &r.setting, if r.passed { "1" } else { "0" }])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{apply_noise, NoiseModel};
    use crate::strategy::{build_omega_hom_w3, worst_case_state};

    fn binomial_std(p: f64, n: u64) -> f64 {
        (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn exact_target_always_passes() {
        let s = build_omega_hom_w3().unwrap();
        let src = FixedSource(s.target().to_density());
        assert_eq!(run_operator_level(&s, &src, 20_000, 1).unwrap().t, 20_000);
        assert_eq!(run_circuit_level(&s, &src, 20_000, 1).unwrap().t, 20_000);
    }

    #[test]
    fn worst_case_pass_rate() {
        let s = build_omega_hom_w3().unwrap();
        let src = FixedSource(worst_case_state(&s, 0.1).unwrap());
        let n = 100_000;
        let f = run_operator_level(&s, &src, n, 7).unwrap().f;
        assert!((f - 0.95).abs() < 5.0 * binomial_std(0.95, n));
    }

    #[test]
    fn maximally_mixed_matches_trace() {
        let s = build_omega_hom_w3().unwrap();
        let rho = DensityMatrix::maximally_mixed(3).unwrap();
        let p = s.omega().trace().re / 8.0;
        let src = FixedSource(rho);
        let n = 100_000;
        for level in [SamplerLevel::Operator, SamplerLevel::Circuit] {
            let t = count_passes(&s, &src, n, 3, &[], level).unwrap();
            assert!((t as f64 / n as f64 - p).abs() < 5.0 * binomial_std(p, n), "{level:?}");
        }
    }

    #[test]
    fn first_stage_branch_frequency() {
        let s = build_omega_hom_w3().unwrap();
        let src = FixedSource(s.target().to_density());
        let n = 60_000;
        let run = run(&s, &src, n, 11, SamplerLevel::Circuit).unwrap();
        // settings Z1|* measure qubit 1 first; outcome 0 is "+"
        let first: Vec<_> = run.records.iter().filter(|r| r.setting.starts_with("Z1|")).collect();
        let plus = first.iter().filter(|r| r.first_outcome == Some(0)).count() as f64;
        let m = first.len() as u64;
        let freq = plus / m as f64;
        assert!((freq - 2.0 / 3.0).abs() < 5.0 * binomial_std(2.0 / 3.0, m));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let s = build_omega_hom_w3().unwrap();
        let noisy = apply_noise(&s.target().to_density(), &NoiseModel::Depolarizing { p: 0.3 }).unwrap();
        let src = FixedSource(noisy);
        let a = run(&s, &src, 5_000, 99, SamplerLevel::Circuit).unwrap();
        let b = run(&s, &src, 5_000, 99, SamplerLevel::Circuit).unwrap();
        assert_eq!(a.records, b.records);
        let c = run(&s, &src, 5_000, 100, SamplerLevel::Circuit).unwrap();
        assert_ne!(a.records, c.records);
        let counted = count_passes(&s, &src, 5_000, 99, &[], SamplerLevel::Circuit).unwrap();
        assert_eq!(counted, a.summary.t);
        // reversed aggregation gives the same total
        let rev: u64 = a.records.iter().rev().map(|r| u64::from(r.passed)).sum();
        assert_eq!(rev, a.summary.t);
        let mut ids: Vec<_> = a.records.iter().map(|r| r.trial).collect();
        ids.dedup();
        assert_eq!(ids.len(), 5_000);
    }

    #[test]
    fn invalid_source_reports_trial() {
        let s = build_omega_hom_w3().unwrap();
        let target = s.target().to_density();
        let src = move |trial: u64| {
            if trial == 17 {
                Err(QuantumError::BadTrace(2.0))
            } else {
                Ok(target.clone())
            }
        };
        match run_operator_level(&s, &src, 100, 0) {
            Err(SamplerError::Source { trial, .. }) => assert_eq!(trial, 17),
            other => panic!("unexpected {other:?}"),
        }
        let wrong = FixedSource(DensityMatrix::maximally_mixed(2).unwrap());
        assert!(matches!(run_operator_level(&s, &wrong, 10, 0), Err(SamplerError::Dimension { .. })));
        assert!(run_operator_level(&s, &wrong, 0, 0).is_err());
    }

    #[test]
    fn sweep_on_exact_target_and_spread() {
        let s = build_omega_hom_w3().unwrap();
        let exact = FixedSource(s.target().to_density());
        let pts = run_scaling_sweep(&s, &exact, &[20, 50, 100], 5, 1, SamplerLevel::Operator).unwrap();
        assert!(pts.iter().all(|p| p.frequencies.iter().all(|&f| f == 1.0)));

        let noisy = FixedSource(worst_case_state(&s, 0.2).unwrap());
        let pts = run_scaling_sweep(&s, &noisy, &[100], 100, 2, SamplerLevel::Operator).unwrap();
        let fs = &pts[0].frequencies;
        let mean = fs.iter().sum::<f64>() / fs.len() as f64;
        let sd = (fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (fs.len() - 1) as f64).sqrt();
        let expect = binomial_std(0.9, 100);
        assert!(sd < 3.0 * expect && sd > expect / 3.0, "sd {sd}");
        assert!(run_scaling_sweep(&s, &noisy, &[100, 50], 1, 0, SamplerLevel::Operator).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(10, 10_000, 13);
        assert_eq!(g[0], 10);
        assert_eq!(*g.last().unwrap(), 10_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn record_csv() {
        let s = build_omega_hom_w3().unwrap();
        let src = FixedSource(s.target().to_density());
        let run = run(&s, &src, 3, 5, SamplerLevel::Operator).unwrap();
        let mut buf = Vec::new();
        write_records(&run.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "trial,setting,passed");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,Z") && lines[1].ends_with(",1"));
    }
}
