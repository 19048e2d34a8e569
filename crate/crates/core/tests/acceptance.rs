//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qsv_core::analysis::{
    all_pass_epsilon, certified_epsilon, chsh_s, estimate_fidelity, fit_scaling_exponent, mean_certified_epsilon,
    Certification,
};
use qsv_core::feedback::{tune_with_qsv, tune_with_qst, DeviceKind, DeviceModel, OptimizerConfig, SpsaConfig, TuneOptions};
use qsv_core::io::read_count_table;
use qsv_core::quantum::{apply_noise, make_theta_state, make_w_state, DensityMatrix, MixtureComponent, NoiseModel, Pauli};
use qsv_core::rng::stream;
use qsv_core::sampler::{count_passes, log_grid, run_scaling_sweep, FixedSource, SamplerLevel};
use qsv_core::strategy::{
    build_omega_adaptive_wn, build_omega_hom_w3, build_omega_opt_2q, sample_complexity, worst_case_state,
    VerificationStrategy,
};
use qsv_core::tomography::{fidelity_convergence_study, reconstruct_mle, simulate_tomography_data};
use rand::Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn criterion_1() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/chsh_counts.csv");
    let r = chsh_s(&read_count_table(&path).map_err(e)?).map_err(e)?;
    let msg = format!("S = {:.5} +- {:.5}", r.s, r.std_error);
    ensure((r.s - 2.8088).abs() <= 5e-4, format!("{msg}, expected 2.8088 +- 0.0005"))?;
    // "of order 0.005": within a factor of three of the quoted 0.0045
    ensure((0.0015..=0.0135).contains(&r.std_error), format!("{msg}, standard error outside [0.0015, 0.0135]"))?;
    Ok(msg)
}

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    let mut check = |label: String, nu: f64, expected: f64| -> Result<(), String> {
        let err = (nu - expected).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, format!("{label}: nu = {nu}, expected {expected}"))
    };
    check("hom-w3".into(), build_omega_hom_w3().map_err(e)?.nu(), 0.5)?;
    for (n, expected) in [(3, 1.0 / 3.0), (4, 1.0 / 3.0), (5, 0.25)] {
        check(format!("adaptive W{n}"), build_omega_adaptive_wn(n).map_err(e)?.nu(), expected)?;
    }
    for k in 1..=9 {
        let theta = k as f64 * FRAC_PI_2 / 10.0;
        let (s, c) = theta.sin_cos();
        check(format!("opt-2q theta={theta:.4}"), build_omega_opt_2q(theta).map_err(e)?.nu(), 1.0 / (2.0 + s * c))?;
    }
    Ok(format!("13 gaps, max deviation {worst:.1e}"))
}

fn criterion_3() -> Check {
    let n = sample_complexity(0.5, 0.1, 0.05).map_err(e)?;
    ensure(n == 59, format!("N = {n}, expected 59"))?;
    match certified_epsilon(1.0, 59, 0.5, 0.05).map_err(e)? {
        Certification::Certified(r) => {
            ensure(r.epsilon <= 0.1 && r.delta <= 0.05, format!("eps = {}, delta = {}", r.epsilon, r.delta))?;
            Ok(format!("N = 59, certified eps = {:.5} at delta = {:.4}", r.epsilon, r.delta))
        }
        Certification::CannotCertify => Err("f = 1, N = 59 cannot certify".into()),
    }
}

fn criterion_4() -> Check {
    let s = build_omega_hom_w3().map_err(e)?;
    let w3 = FixedSource(make_w_state(3).map_err(e)?.to_density());
    let n = 100_000;
    let t = count_passes(&s, &w3, n, 4, &[], SamplerLevel::Circuit).map_err(e)?;
    ensure(t == n, format!("t = {t} of {n}"))?;
    Ok(format!("t = N = {n} at circuit level"))
}

fn all_strategies() -> Result<Vec<VerificationStrategy>, String> {
    Ok(vec![
        build_omega_hom_w3().map_err(e)?,
        build_omega_adaptive_wn(3).map_err(e)?,
        build_omega_adaptive_wn(4).map_err(e)?,
        build_omega_opt_2q(FRAC_PI_4).map_err(e)?,
        build_omega_opt_2q(0.3).map_err(e)?,
    ])
}

fn criterion_5() -> Check {
    let n = 100_000u64;
    let mut worst_z: f64 = 0.0;
    for (si, s) in all_strategies()?.iter().enumerate() {
        for (ei, eps) in [0.05, 0.1, 0.2].into_iter().enumerate() {
            let sigma = FixedSource(worst_case_state(s, eps).map_err(e)?);
            let t = count_passes(s, &sigma, n, 5, &[si as u64, ei as u64], SamplerLevel::Circuit).map_err(e)?;
            let p = 1.0 - eps * s.nu();
            let z = (t as f64 / n as f64 - p).abs() / (p * (1.0 - p) / n as f64).sqrt();
            worst_z = worst_z.max(z);
            ensure(z <= 5.0, format!("{} eps = {eps}: {z:.2} sd from 1 - eps*nu", s.label()))?;
        }
    }
    Ok(format!("5 strategies x 3 eps, max deviation {worst_z:.2} sd"))
}

fn criterion_6() -> Check {
    let s = build_omega_hom_w3().map_err(e)?;
    let w3 = make_w_state(3).map_err(e)?;
    let rho = apply_noise(&w3.to_density(), &NoiseModel::depolarizing_for_fidelity(0.97, 3).map_err(e)?).map_err(e)?;
    let oracle = rho.fidelity(&w3).map_err(e)?;
    ensure((oracle - 0.97).abs() < 1e-12, format!("oracle fidelity {oracle}"))?;
    let (n, trials) = (10_000u64, 100u64);
    let bound = 1.0 / (2.0 * s.nu() * (n as f64).sqrt());
    let source = FixedSource(rho);
    let mut sum = 0.0;
    let mut max_std: f64 = 0.0;
    for k in 0..trials {
        let t = count_passes(&s, &source, n, 6, &[k], SamplerLevel::Operator).map_err(e)?;
        let est = estimate_fidelity(t as f64 / n as f64, n, s.nu(), true).map_err(e)?;
        sum += est.point.ok_or("no point estimate")?;
        max_std = max_std.max(est.std.ok_or("no std")?);
    }
    let mean = sum / trials as f64;
    let msg = format!("mean F = {mean:.5}, max std = {max_std:.5}");
    ensure((mean - 0.97).abs() <= 0.003, format!("{msg}, expected 0.9700 +- 0.003"))?;
    ensure(max_std <= bound, format!("{msg}, exceeds {bound}"))?;
    Ok(msg)
}

fn criterion_7() -> Check {
    let s = build_omega_hom_w3().map_err(e)?;
    let w3 = make_w_state(3).map_err(e)?;
    let delta = 0.05;

    // ideal source: every test passes, so each trial certifies the all-pass bound
    let grid = log_grid(100, 100_000, 7);
    let ideal = run_scaling_sweep(&s, &FixedSource(w3.to_density()), &grid, 3, 71, SamplerLevel::Operator).map_err(e)?;
    let mut pts = Vec::new();
    for p in &ideal {
        ensure(p.mean_f == 1.0, format!("ideal source failed a test at N = {}", p.n))?;
        let (eps, _) = mean_certified_epsilon(&p.frequencies, p.n, s.nu(), delta).map_err(e)?;
        let eps = eps.ok_or("all-pass trial could not certify")?;
        ensure((eps - all_pass_epsilon(p.n, s.nu(), delta)).abs() < 1e-9, "all-pass epsilon mismatch")?;
        pts.push((p.n as f64, eps));
    }
    let ideal_fit = fit_scaling_exponent(&pts).map_err(e)?;

    let rho = apply_noise(&w3.to_density(), &NoiseModel::depolarizing_for_fidelity(0.97, 3).map_err(e)?).map_err(e)?;
    let grid = log_grid(10, 10_000, 13);
    let noisy = run_scaling_sweep(&s, &FixedSource(rho), &grid, 100, 72, SamplerLevel::Operator).map_err(e)?;
    let mut pts = Vec::new();
    for p in &noisy {
        if let (Some(eps), _) = mean_certified_epsilon(&p.frequencies, p.n, s.nu(), delta).map_err(e)? {
            pts.push((p.n as f64, eps));
        }
    }
    let noisy_fit = fit_scaling_exponent(&pts).map_err(e)?;
    let msg = format!("all-pass slope {:.4}, F = 0.97 slope {:.4}", ideal_fit.slope, noisy_fit.slope);
    ensure((ideal_fit.slope + 1.0).abs() <= 0.05, format!("{msg}; all-pass slope outside -1.00 +- 0.05"))?;
    ensure(noisy_fit.slope > -2.0 && noisy_fit.slope < -1.0, format!("{msg}; F = 0.97 slope outside (-2, -1)"))?;
    Ok(msg)
}

fn random_noise(rng: &mut impl Rng) -> NoiseModel {
    let axes = [Pauli::X, Pauli::Y, Pauli::Z];
    let w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let total: f64 = w.iter().sum();
    NoiseModel::ConvexMixture {
        components: vec![
            MixtureComponent { weight: w[0] / total, model: NoiseModel::Depolarizing { p: rng.random_range(0.0..0.4) } },
            MixtureComponent {
                weight: w[1] / total,
                model: NoiseModel::AmplitudeDamping { gamma: rng.random_range(0.0..0.3) },
            },
            MixtureComponent {
                weight: w[2] / total,
                model: NoiseModel::CoherentRotation {
                    axis: axes[rng.random_range(0..3)],
                    angle: rng.random_range(-0.8..0.8),
                    qubits: None,
                },
            },
        ],
    }
}

fn criterion_8() -> Check {
    let draws = 100_000u64;
    let chunk = 5_000u64;
    let mut worst_z: f64 = 0.0;
    let mut compared = 0;
    for (si, s) in all_strategies()?.iter().enumerate() {
        for src in 0..20u64 {
            let mut rng = stream(8, &[si as u64, src]);
            let sigma = apply_noise(&s.target().to_density(), &random_noise(&mut rng)).map_err(e)?;
            for (k, setting) in s.settings().iter().enumerate() {
                let count = |level: u64| -> u64 {
                    (0..draws / chunk)
                        .into_par_iter()
                        .map(|c| {
                            let mut rng = stream(8, &[si as u64, src, k as u64, level, c]);
                            let p = setting.pass_probability(&sigma);
                            (0..chunk)
                                .filter(|_| {
                                    if level == 0 {
                                        rng.random::<f64>() < p
                                    } else {
                                        setting.run_circuit(&sigma, &mut rng).passed
                                    }
                                })
                                .count() as u64
                        })
                        .sum()
                };
                let (a, b) = (count(0) as f64 / draws as f64, count(1) as f64 / draws as f64);
                let sd = ((a * (1.0 - a) + b * (1.0 - b)) / draws as f64).sqrt();
                let z = if sd > 0.0 { (a - b).abs() / sd } else if a == b { 0.0 } else { f64::INFINITY };
                worst_z = worst_z.max(z);
                compared += 1;
                ensure(z <= 5.0, format!("{} setting {} source {src}: {a} vs {b}", s.label(), setting.label()))?;
            }
        }
    }
    Ok(format!("{compared} setting/source pairs, max deviation {worst_z:.2} combined sd"))
}

fn criterion_9() -> Check {
    // a pure target would make the fidelity spread second order in the noise
    let bell = make_theta_state(FRAC_PI_4);
    let noisy = apply_noise(&bell.to_density(), &NoiseModel::depolarizing_for_fidelity(0.975, 2).map_err(e)?).map_err(e)?;
    let rows = fidelity_convergence_study(&noisy, &bell, &[1_000_000], 50, 9).map_err(e)?;
    let std = rows[0].std;
    let mut msg = format!("2-qubit (F = 0.975) std at 1e6 photons = {std:.2e}");
    ensure(std <= 5e-4, format!("{msg}, expected <= 5e-4"))?;

    let w3 = make_w_state(3).map_err(e)?;
    let noise = NoiseModel::ConvexMixture {
        components: vec![
            MixtureComponent { weight: 0.5, model: NoiseModel::depolarizing_for_fidelity(0.94, 3).map_err(e)? },
            MixtureComponent { weight: 0.5, model: NoiseModel::Dephasing { p: 0.02 } },
        ],
    };
    let rho: DensityMatrix = apply_noise(&w3.to_density(), &noise).map_err(e)?;
    let oracle = rho.fidelity(&w3).map_err(e)?;
    let data = simulate_tomography_data(&rho, 1_000_000 / 27, 91).map_err(e)?;
    let rec = reconstruct_mle(&data, Some(&w3)).map_err(e)?.fidelity.ok_or("no fidelity")?;
    msg += &format!(", W3 reconstructed {rec:.4} vs oracle {oracle:.4}");
    ensure((rec - oracle).abs() <= 0.01, format!("{msg}, off by more than 0.01"))?;
    Ok(msg)
}

/// Test budget for QSV tuning, frozen after one calibration run with the
/// oracle: over seeds 0-9 the slowest run first reached F >= 0.95 after
/// 31,500 tests, and at 60,000 tests every final state exceeded 0.995.
const QSV_TUNE_BUDGET: u64 = 60_000;

fn criterion_10() -> Check {
    let s = build_omega_opt_2q(FRAC_PI_4).map_err(e)?;
    // the phase offset alone halves the fidelity
    let device = DeviceModel::new(DeviceKind::TwoQubit, vec![0.0, FRAC_PI_2], None).map_err(e)?;
    let f0 = device.oracle_fidelity(device.knobs()).map_err(e)?;
    ensure((f0 - 0.5).abs() < 1e-9, format!("initial oracle fidelity {f0}"))?;
    let mut worst_final: f64 = 1.0;
    let (mut qsv_total, mut qst_total) = (0, 0);
    for seed in 0..10u64 {
        let opts = TuneOptions {
            batch: 500,
            budget: QSV_TUNE_BUDGET,
            max_iterations: 10_000,
            optimizer: OptimizerConfig::Spsa(SpsaConfig { a: 1.0, ..SpsaConfig::default() }),
            seed,
            record_oracle: true,
        };
        let qsv = tune_with_qsv(&device, &s, &opts).map_err(e)?;
        let f = device.oracle_fidelity(&qsv.final_knobs).map_err(e)?;
        worst_final = worst_final.min(f);
        ensure(f >= 0.95, format!("seed {seed}: final oracle fidelity {f:.4} after {QSV_TUNE_BUDGET} tests"))?;
        // 500 shots per Pauli setting, so the estimator noise is below QSV's
        let qst = tune_with_qst(&device, &TuneOptions { budget: 2_000_000, ..opts }).map_err(e)?;
        let a = qsv.samples_to_threshold(0.95).ok_or(format!("seed {seed}: QSV never reached 0.95"))?;
        let b = qst.samples_to_threshold(0.95).ok_or(format!("seed {seed}: QST never reached 0.95"))?;
        ensure(a < b, format!("seed {seed}: QSV needed {a} samples, QST {b}"))?;
        qsv_total += a;
        qst_total += b;
    }
    Ok(format!(
        "10 seeds, worst final F = {worst_final:.4}; samples to F >= 0.95: QSV {} vs QST {} (mean)",
        qsv_total / 10,
        qst_total / 10
    ))
}

fn criterion_11() -> Check {
    let sines = [0.0, 1.0 / 3f64.sqrt(), 1.0 / 2f64.sqrt(), (2.0f64 / 3.0).sqrt(), 1.0];
    // certified fidelities (%) for N = 20, 50, 100, 10^4
    let table: [(u64, [f64; 5]); 4] = [
        (20, [64.6, 58.9, 60.6, 60.3, 62.9]),
        (50, [84.2, 78.3, 80.5, 79.4, 82.5]),
        (100, [91.0, 84.9, 87.8, 87.0, 89.3]),
        (10_000, [99.0, 96.4, 97.1, 96.9, 98.3]),
    ];
    let mut min_margin = f64::INFINITY;
    for (col, &sin) in sines.iter().enumerate() {
        let s = build_omega_opt_2q(sin.asin()).map_err(e)?;
        for &(n, row) in &table {
            let bound = 100.0 * (1.0 - all_pass_epsilon(n, s.nu(), 0.05));
            let reported = row[col];
            min_margin = min_margin.min(bound - reported);
            ensure(reported <= bound, format!("sin = {sin:.4}, N = {n}: {reported}% exceeds bound {bound:.2}%"))?;
        }
    }
    let s = build_omega_opt_2q(0.0).map_err(e)?;
    let b = 100.0 * (1.0 - all_pass_epsilon(20, s.nu(), 0.05));
    ensure((b - 72.2).abs() < 0.05, format!("sin = 0, N = 20 bound {b:.2}%, expected 72.2%"))?;
    Ok(format!("20 entries below the all-pass bound, min margin {min_margin:.2} points"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("CHSH reproduction", criterion_1, Duration::from_secs(1)),
        ("spectral gaps", criterion_2, Duration::from_secs(10)),
        ("sample complexity", criterion_3, Duration::from_secs(1)),
        ("ideal-source soundness", criterion_4, Duration::from_secs(60)),
        ("worst-case calibration", criterion_5, Duration::from_secs(300)),
        ("estimator accuracy", criterion_6, Duration::from_secs(60)),
        ("scaling behaviour", criterion_7, Duration::from_secs(300)),
        ("sampler equivalence", criterion_8, Duration::from_secs(600)),
        ("tomography study", criterion_9, Duration::from_secs(600)),
        ("closed-loop tuning", criterion_10, Duration::from_secs(600)),
        ("certified-fidelity bound", criterion_11, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(msg) if elapsed > *limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            r => r,
        };
        match result {
            Ok(msg) => println!("criterion {:>2} {name}: PASS ({msg}; {elapsed:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({msg}; {elapsed:.2?})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
