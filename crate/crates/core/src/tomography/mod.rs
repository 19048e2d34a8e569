//! Pauli-basis state tomography with maximum-likelihood reconstruction.
//!
//! Every one of the `3ⁿ` settings measures each qubit in the eigenbasis of
//! `X`, `Y` or `Z` and records the full `2ⁿ`-outcome bitstring. Outcome bit
//! `0` is the `+1` eigenvalue; qubit 0 is the most significant bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::matrix::C64;
use crate::quantum::{ComplexMatrix, DensityMatrix, Pauli, PauliString, PureState, QuantumError};
use crate::rng::{derive_seed, stream};

/// Largest register supported by tomography.
pub const MAX_TOMOGRAPHY_QUBITS: usize = 5;
/// Stop when the log-likelihood `Σ nₖ ln pₖ` improves by less than this.
pub const MLE_GAIN_TOL: f64 = 1e-10;
pub const MLE_MAX_ITER: usize = 5000;
const MAX_STEP_HALVINGS: usize = 60;
const MAX_STEP: f64 = 64.0;
/// Notional shots per setting given to exact probabilities in the stopping
/// rule, standing in for the infinite-shot limit.
const EXACT_DATA_SHOTS: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("data is not informationally complete: no setting measures {0}")]
    Incomplete(String),
    #[error("invalid tomography data: {0}")]
    Data(String),
    #[error("dataset file: {0}")]
    Csv(#[from] csv::Error),
}

/// Outcome counts of one Pauli setting, indexed by outcome bitstring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographySettingData {
    pub setting: PauliString,
    pub counts: Vec<u64>,
}

impl TomographySettingData {
    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub state: DensityMatrix,
    pub fidelity: Option<f64>,
    pub total_samples: u64,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after every accepted iteration.
    pub trace: Vec<f64>,
}

/// `"010"` for outcome 2 of a three-qubit setting.
pub fn outcome_label(outcome: usize, n_qubits: usize) -> String {
    (0..n_qubits).map(|q| if (outcome >> (n_qubits - 1 - q)) & 1 == 1 { '1' } else { '0' }).collect()
}

fn check_register(n: usize) -> Result<(), TomographyError> {
    if !(1..=MAX_TOMOGRAPHY_QUBITS).contains(&n) {
        return Err(QuantumError::QubitCount { n, min: 1, max: MAX_TOMOGRAPHY_QUBITS }.into());
    }
    Ok(())
}

/// Born probabilities of every outcome of every setting.
pub fn exact_setting_probabilities(state: &DensityMatrix) -> Result<Vec<(PauliString, Vec<f64>)>, TomographyError> {
    let n = state.n_qubits();
    check_register(n)?;
    Ok(PauliString::all_axes(n)
        .into_iter()
        .map(|s| {
            let probs = (0..state.dim())
                .map(|k| state.matrix().expectation(&s.outcome_vector(k)).clamp(0.0, 1.0))
                .collect();
            (s, probs)
        })
        .collect())
}

/// Multinomial draw by successive conditional binomials.
fn multinomial<R: rand::Rng + ?Sized>(shots: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = shots;
    let mut mass = probs.iter().sum::<f64>();
    let mut out = vec![0; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() || mass <= 0.0 {
            out[k] = left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let c = Binomial::new(left, q).expect("probability clamped to [0, 1]").sample(rng);
        out[k] = c;
        left -= c;
        mass -= p;
    }
    out
}

/// Simulates `shots[i]` shots of the `i`-th Pauli setting (lexicographic).
pub fn simulate_tomography_data_with_shots(
    state: &DensityMatrix,
    shots: &[u64],
    seed: u64,
) -> Result<Vec<TomographySettingData>, TomographyError> {
    let exact = exact_setting_probabilities(state)?;
    if shots.len() != exact.len() {
        return Err(TomographyError::Data(format!("{} shot counts for {} settings", shots.len(), exact.len())));
    }
    Ok(exact
        .into_par_iter()
        .zip(shots.par_iter())
        .enumerate()
        .map(|(i, ((setting, probs), &n))| {
            let mut rng = stream(seed, &[i as u64]);
            TomographySettingData { setting, counts: multinomial(n, &probs, &mut rng) }
        })
        .collect())
}

pub fn simulate_tomography_data(
    state: &DensityMatrix,
    shots_per_setting: u64,
    seed: u64,
) -> Result<Vec<TomographySettingData>, TomographyError> {
    let settings = 3usize.pow(state.n_qubits() as u32);
    simulate_tomography_data_with_shots(state, &vec![shots_per_setting; settings], seed)
}

/// Even split of `total` over `settings`, remainder to the first settings.
pub fn split_budget(total: u64, settings: usize) -> Vec<u64> {
    let base = total / settings as u64;
    let extra = (total % settings as u64) as usize;
    (0..settings).map(|i| base + u64::from(i < extra)).collect()
}

/// Rejects data whose settings cannot determine every Pauli expectation.
/// Returns the register size.
fn check_complete<'a>(settings: impl Iterator<Item = &'a PauliString> + Clone) -> Result<usize, TomographyError> {
    let n = settings.clone().next().map(PauliString::n_qubits).ok_or_else(|| TomographyError::Data("empty dataset".into()))?;
    check_register(n)?;
    if settings.clone().any(|s| s.n_qubits() != n) {
        return Err(TomographyError::Data("settings act on different numbers of qubits".into()));
    }
    if let Some(s) = settings.clone().find(|s| s.ops().contains(&Pauli::I)) {
        return Err(TomographyError::Data(format!("setting {s} contains an identity factor")));
    }
    for target in PauliString::all(n).into_iter().skip(1) {
        let covered = settings
            .clone()
            .any(|s| s.ops().iter().zip(target.ops()).all(|(a, b)| *b == Pauli::I || a == b));
        if !covered {
            return Err(TomographyError::Incomplete(target.to_string()));
        }
    }
    Ok(n)
}

struct Term {
    vector: Vec<C64>,
    weight: f64,
}

fn expectation(rho: &ComplexMatrix, v: &[C64]) -> f64 {
    rho.expectation(v)
}

/// Per-sample log-likelihood; multiply by the total weight for `Σ nₖ ln pₖ`.
fn log_likelihood(rho: &ComplexMatrix, terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.weight * expectation(rho, &t.vector).max(1e-300).ln()).sum()
}

/// `R = Σ wₖ/pₖ |vₖ⟩⟨vₖ|`, which is `𝟙` at a perfect fit.
fn r_operator(rho: &ComplexMatrix, terms: &[Term]) -> ComplexMatrix {
    let d = rho.dim();
    let mut r = ComplexMatrix::zeros(d);
    for t in terms {
        let p = expectation(rho, &t.vector).max(1e-300);
        let c = t.weight / p;
        for i in 0..d {
            let vi = t.vector[i] * c;
            if vi == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                r[(i, j)] += vi * t.vector[j].conj();
            }
        }
    }
    r
}

/// `AρA† / Tr` with `A = 𝟙 + s(R - 𝟙)`. `s = 1` is the plain `RρR` step,
/// `s < 1` the diluted step `(𝟙+tR)ρ(𝟙+tR)` with `s = t/(1+t)`, and `s > 1`
/// an over-relaxed step; all keep `ρ` positive.
fn step(rho: &ComplexMatrix, r: &ComplexMatrix, s: f64) -> ComplexMatrix {
    let id = ComplexMatrix::identity(rho.dim());
    let a = &id + &(r - &id).scale(s);
    let mut next = rho.conjugate_by(&a);
    let tr = next.trace().re;
    next = next.scale(1.0 / tr);
    next.hermitize();
    next
}

/// Iterative `RρR` ascent from the maximally mixed state.
///
/// Each iteration line-searches the step size: it is halved while the
/// likelihood would decrease and doubled while that keeps improving it, so
/// the likelihood never decreases.
fn mle(n: usize, terms: Vec<Term>, total_weight: f64, total_samples: u64) -> Result<TomographyResult, TomographyError> {
    let dim = 1usize << n;
    let mut rho = ComplexMatrix::identity(dim).scale(1.0 / dim as f64);
    let mut ll = log_likelihood(&rho, &terms);
    let mut trace = vec![ll];
    let mut iterations = 0;
    while iterations < MLE_MAX_ITER {
        iterations += 1;
        let r = r_operator(&rho, &terms);
        let mut s = 1.0;
        let mut best = step(&rho, &r, s);
        let mut best_ll = log_likelihood(&best, &terms);
        let mut halvings = 0;
        while best_ll < ll && halvings < MAX_STEP_HALVINGS {
            s *= 0.5;
            best = step(&rho, &r, s);
            best_ll = log_likelihood(&best, &terms);
            halvings += 1;
        }
        if best_ll < ll {
            break;
        }
        if halvings == 0 {
            while s < MAX_STEP {
                let cand = step(&rho, &r, 2.0 * s);
                let cand_ll = log_likelihood(&cand, &terms);
                if cand_ll <= best_ll {
                    break;
                }
                s *= 2.0;
                best = cand;
                best_ll = cand_ll;
            }
        }
        let gain = (best_ll - ll) * total_weight;
        rho = best;
        ll = best_ll;
        trace.push(ll);
        if gain < MLE_GAIN_TOL {
            break;
        }
    }
    Ok(TomographyResult {
        state: DensityMatrix::new(rho)?,
        fidelity: None,
        total_samples,
        iterations,
        log_likelihood: ll * total_weight,
        trace: trace.into_iter().map(|l| l * total_weight).collect(),
    })
}

fn total_weight(settings: &[(PauliString, Vec<f64>)]) -> f64 {
    settings.iter().flat_map(|(_, w)| w).sum()
}

fn build_terms(settings: &[(PauliString, Vec<f64>)]) -> Vec<Term> {
    let total = total_weight(settings);
    let mut terms = Vec::new();
    for (s, weights) in settings {
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                terms.push(Term { vector: s.outcome_vector(k), weight: w / total });
            }
        }
    }
    terms
}

/// Maximum-likelihood density matrix for recorded counts.
pub fn reconstruct_mle(
    data: &[TomographySettingData],
    target: Option<&PureState>,
) -> Result<TomographyResult, TomographyError> {
    let n = check_complete(data.iter().map(|d| &d.setting))?;
    for d in data {
        if d.counts.len() != 1 << n {
            return Err(TomographyError::Data(format!("setting {} has {} outcomes, expected {}", d.setting, d.counts.len(), 1 << n)));
        }
    }
    let total: u64 = data.iter().map(TomographySettingData::shots).sum();
    if total == 0 {
        return Err(TomographyError::Data("no counts recorded".into()));
    }
    let weighted: Vec<(PauliString, Vec<f64>)> =
        data.iter().map(|d| (d.setting.clone(), d.counts.iter().map(|&c| c as f64).collect())).collect();
    let mut result = mle(n, build_terms(&weighted), total as f64, total)?;
    if let Some(t) = target {
        result.fidelity = Some(result.state.fidelity(t)?);
    }
    Ok(result)
}

/// Reconstruction from exact outcome probabilities, the infinite-shot limit.
/// Each setting counts as [`EXACT_DATA_SHOTS`] shots in the stopping rule.
pub fn reconstruct_mle_from_probabilities(
    settings: &[(PauliString, Vec<f64>)],
    target: Option<&PureState>,
) -> Result<TomographyResult, TomographyError> {
    let n = check_complete(settings.iter().map(|(s, _)| s))?;
    let mut result = mle(n, build_terms(settings), total_weight(settings) * EXACT_DATA_SHOTS, 0)?;
    if let Some(t) = target {
        result.fidelity = Some(result.state.fidelity(t)?);
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub total_photons: u64,
    pub mean_fidelity: f64,
    pub std: f64,
    pub fidelities: Vec<f64>,
}

/// Mean and sample standard deviation of the reconstructed fidelity for each
/// total budget, split evenly over the `3ⁿ` settings.
pub fn fidelity_convergence_study(
    state: &DensityMatrix,
    target: &PureState,
    budgets: &[u64],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>, TomographyError> {
    if repetitions < 2 {
        return Err(TomographyError::Data("need at least 2 repetitions".into()));
    }
    let settings = 3usize.pow(state.n_qubits() as u32);
    budgets
        .iter()
        .enumerate()
        .map(|(g, &total)| {
            let shots = split_budget(total, settings);
            let fidelities = (0..repetitions)
                .into_par_iter()
                .map(|r| {
                    let data = simulate_tomography_data_with_shots(state, &shots, derive_seed(seed, &[g as u64, r as u64]))?;
                    Ok(reconstruct_mle(&data, Some(target))?.fidelity.expect("target given"))
                })
                .collect::<Result<Vec<f64>, TomographyError>>()?;
            let m = repetitions as f64;
            let mean = fidelities.iter().sum::<f64>() / m;
            let std = (fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            Ok(ConvergenceRow { total_photons: total, mean_fidelity: mean, std, fidelities })
        })
        .collect()
}

/// Writes `setting,outcome,count` rows.
pub fn write_dataset<W: Write>(data: &[TomographySettingData], out: W) -> Result<(), TomographyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "outcome", "count"])?;
    for d in data {
        let n = d.setting.n_qubits();
        for (k, c) in d.counts.iter().enumerate() {
            w.write_record([d.setting.to_string(), outcome_label(k, n), c.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads `setting,outcome,count` rows; outcomes not listed count zero.
pub fn read_dataset<R: Read>(input: R) -> Result<Vec<TomographySettingData>, TomographyError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut by_setting: BTreeMap<String, (PauliString, Vec<u64>)> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let field = |i: usize, name: &str| {
            rec.get(i).map(str::trim).ok_or_else(|| TomographyError::Data(format!("row {row}: missing {name}")))
        };
        let label = field(0, "setting")?;
        let setting: PauliString =
            label.parse().map_err(|e: QuantumError| TomographyError::Data(format!("row {row}: {e}")))?;
        let n = setting.n_qubits();
        check_register(n)?;
        let outcome = field(1, "outcome")?;
        if outcome.len() != n || !outcome.chars().all(|c| c == '0' || c == '1') {
            return Err(TomographyError::Data(format!("row {row}: outcome {outcome:?} is not a {n}-bit string")));
        }
        let k = usize::from_str_radix(outcome, 2).expect("validated bitstring");
        let count: u64 = field(2, "count")?
            .parse()
            .map_err(|_| TomographyError::Data(format!("row {row}: count is not a nonnegative integer")))?;
        let entry = by_setting.entry(label.to_string()).or_insert_with(|| (setting, vec![0; 1 << n]));
        entry.1[k] += count;
    }
    Ok(by_setting.into_values().map(|(setting, counts)| TomographySettingData { setting, counts }).collect())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::quantum::{apply_noise, make_w_state, NoiseModel};

    fn random_full_rank(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = stream(seed, &[]);
        let d = 1 << n;
        let g = ComplexMatrix::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &g * &g.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(m.scale(1.0 / tr)).unwrap()
    }

    #[test]
    fn zero_state_z_setting() {
        let zero = PureState::basis(1, 0).unwrap().to_density();
        let data = simulate_tomography_data(&zero, 1000, 1).unwrap();
        let z = data.iter().find(|d| d.setting.to_string() == "Z").unwrap();
        assert_eq!(z.counts, vec![1000, 0]);
        assert!(data.iter().all(|d| d.shots() == 1000));
    }

    #[test]
    fn w3_zzz_support() {
        let w = make_w_state(3).unwrap().to_density();
        let data = simulate_tomography_data(&w, 5000, 2).unwrap();
        let zzz = data.iter().find(|d| d.setting.to_string() == "ZZZ").unwrap();
        for (k, &c) in zzz.counts.iter().enumerate() {
            if k.count_ones() != 1 {
                assert_eq!(c, 0, "outcome {}", outcome_label(k, 3));
            }
        }
    }

    #[test]
    fn marginals_match_born() {
        let rho = random_full_rank(2, 9);
        let shots = 100_000;
        let data = simulate_tomography_data(&rho, shots, 3).unwrap();
        let exact = exact_setting_probabilities(&rho).unwrap();
        for (d, (_, probs)) in data.iter().zip(&exact) {
            for (&c, &p) in d.counts.iter().zip(probs) {
                let sd = (p * (1.0 - p) / shots as f64).sqrt();
                assert!((c as f64 / shots as f64 - p).abs() <= 5.0 * sd + 1e-12);
            }
        }
    }

    #[test]
    fn exact_w3_probabilities_reconstruct_target() {
        let w = make_w_state(3).unwrap();
        let probs = exact_setting_probabilities(&w.to_density()).unwrap();
        let r = reconstruct_mle_from_probabilities(&probs, Some(&w)).unwrap();
        assert!(r.fidelity.unwrap() >= 1.0 - 1e-6, "{} after {} iterations", r.fidelity.unwrap(), r.iterations);
    }

    #[test]
    fn exact_probabilities_full_rank_states() {
        for (n, seed) in [(2, 1), (2, 2), (3, 3)] {
            let rho = random_full_rank(n, seed);
            let probs = exact_setting_probabilities(&rho).unwrap();
            let r = reconstruct_mle_from_probabilities(&probs, None).unwrap();
            let td = r.state.trace_distance(&rho).unwrap();
            assert!(td < 1e-5, "n = {n}: trace distance {td}");
        }
    }

    #[test]
    fn depolarized_w3() {
        let w = make_w_state(3).unwrap();
        let rho = apply_noise(&w.to_density(), &NoiseModel::Depolarizing { p: 0.1 }).unwrap();
        let truth = rho.fidelity(&w).unwrap();
        let data = simulate_tomography_data(&rho, 10_000, 4).unwrap();
        let r = reconstruct_mle(&data, Some(&w)).unwrap();
        assert!((r.fidelity.unwrap() - truth).abs() < 0.01);
        assert_eq!(r.total_samples, 270_000);
        assert!((r.state.matrix().trace().re - 1.0).abs() < 1e-10);
        assert!(r.trace.windows(2).all(|p| p[1] >= p[0]), "likelihood decreased");
    }

    #[test]
    fn incomplete_data_names_missing_direction() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let data: Vec<_> = simulate_tomography_data(&rho, 10, 0)
            .unwrap()
            .into_iter()
            .filter(|d| !d.setting.to_string().starts_with('X'))
            .collect();
        match reconstruct_mle(&data, None) {
            Err(TomographyError::Incomplete(p)) => assert_eq!(p, "XI"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn basis_covariance() {
        // U = ½𝟙 - (i/2)(X+Y+Z) rotates the Pauli axes cyclically
        let half = C64::new(0.5, 0.0);
        let mi = C64::new(0.0, -0.5);
        let sum = &(&crate::quantum::pauli::pauli(Pauli::X) + &crate::quantum::pauli::pauli(Pauli::Y))
            + &crate::quantum::pauli::pauli(Pauli::Z);
        let u1 = &ComplexMatrix::identity(2).scale_complex(half) + &sum.scale_complex(mi);
        let axis_image = |p: Pauli| {
            let img = crate::quantum::pauli::pauli(p).conjugate_by(&u1);
            [Pauli::X, Pauli::Y, Pauli::Z]
                .into_iter()
                .find(|&q| img.frobenius_distance(&crate::quantum::pauli::pauli(q)) < 1e-12)
                .expect("U permutes the Pauli axes without signs")
        };
        let u = crate::quantum::matrix::kron(&u1, &u1);
        let rho = random_full_rank(2, 21);
        let data = simulate_tomography_data(&rho, 20_000, 5).unwrap();
        // measuring P on ρ is measuring UPU† on UρU†
        let moved: Vec<_> = data
            .iter()
            .map(|d| TomographySettingData {
                setting: PauliString::new(d.setting.ops().iter().map(|&p| axis_image(p)).collect()),
                counts: d.counts.clone(),
            })
            .collect();
        let a = reconstruct_mle(&data, None).unwrap();
        let b = reconstruct_mle(&moved, None).unwrap();
        let a_moved = a.state.matrix().conjugate_by(&u);
        assert!(a_moved.frobenius_distance(b.state.matrix()) < 1e-6);
        let psi = PureState::basis(2, 1).unwrap();
        let psi_moved = psi.evolve(&u).unwrap();
        assert!((a.state.fidelity(&psi).unwrap() - b.state.fidelity(&psi_moved).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(10, 3), vec![4, 3, 3]);
        assert_eq!(split_budget(9, 9).iter().sum::<u64>(), 9);
    }

    #[test]
    fn dataset_round_trip() {
        let rho = random_full_rank(2, 4);
        let data = simulate_tomography_data(&rho, 100, 6).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("setting,outcome,count\nXX,00,"));
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data);
        assert!(read_dataset("setting,outcome,count\nXQ,00,1\n".as_bytes()).is_err());
        assert!(read_dataset("setting,outcome,count\nXX,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn convergence_study_shrinks_spread() {
        let psi = crate::quantum::make_theta_state(0.6);
        let rho = apply_noise(&psi.to_density(), &NoiseModel::Depolarizing { p: 0.05 }).unwrap();
        let rows = fidelity_convergence_study(&rho, &psi, &[1_000, 100_000], 10, 8).unwrap();
        assert!(rows[1].std < rows[0].std);
        assert_eq!(rows[0].fidelities.len(), 10);
        assert!(fidelity_convergence_study(&rho, &psi, &[100], 1, 0).is_err());
    }
}
