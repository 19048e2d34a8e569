use std::f64::consts::PI;

use super::setting::{Branch, MeasurementSetting, MeasurementTree};
use super::{StrategyError, VerificationStrategy};
use crate::quantum::matrix::{kron_vec, C64, ONE};
use crate::quantum::pauli::{eigenprojector, embed, parity_projector, pauli};
use crate::quantum::state::MAX_QUBITS;
use crate::quantum::{kron, make_theta_state, make_w_state, ComplexMatrix, Pauli, ProjectiveMeasurement};

fn two_qubit_parity(n: usize, i: usize, j: usize, p: Pauli) -> ComplexMatrix {
    let m = pauli(p);
    parity_projector(&embed(n, &[(i, &m), (j, &m)]), true)
}

/// `Z⁺ᵢZ⁺ⱼ`: both qubits in `|0⟩`.
fn both_ground(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let g = eigenprojector(Pauli::Z, true);
    embed(n, &[(i, &g), (j, &g)])
}

fn z_split(n: usize, control: usize) -> ProjectiveMeasurement {
    let plus = eigenprojector(Pauli::Z, true);
    let minus = eigenprojector(Pauli::Z, false);
    ProjectiveMeasurement::new(vec![embed(n, &[(control, &plus)]), embed(n, &[(control, &minus)])])
        .expect("Z eigenprojectors form a complete measurement")
}

/// Modified homogeneous strategy for `W₃`.
///
/// For every control qubit `k` the one-way measurement
/// `P_Z⁺[½P_XX⁺ + ½P_YY⁺] + P_Z⁻[½𝟙 + ½P_Z⁺P_Z⁺]` is split into three
/// settings of probability 1/9 each (`XX`, `YY`, `split`). The `P_Z⁻` branch
/// is always a coin between unconditional acceptance and `Z⁺Z⁺`; the `split`
/// setting also tosses a coin between `XX` and `YY` on the `P_Z⁺` branch, so
/// the three settings average to the one-way operator exactly.
pub fn build_omega_hom_w3() -> Result<VerificationStrategy, StrategyError> {
    let n = 3;
    let target = make_w_state(n)?;
    let mut weighted = Vec::with_capacity(9);
    for control in 0..n {
        let rest: Vec<usize> = (0..n).filter(|&q| q != control).collect();
        let (a, b) = (rest[0], rest[1]);
        let xx = || Branch::test("XX+", two_qubit_parity(n, a, b, Pauli::X));
        let yy = || Branch::test("YY+", two_qubit_parity(n, a, b, Pauli::Y));
        let minus_branch = || Branch::coin(0.5, Branch::Accept, Branch::test("Z+Z+", both_ground(n, a, b)));
        let plus_branches = [("XX", xx()), ("YY", yy()), ("split", Branch::coin(0.5, xx(), yy()))];
        for (name, plus) in plus_branches {
            let tree = MeasurementTree {
                first_stage_qubits: vec![control],
                first_stage: z_split(n, control),
                outcome_labels: vec!["+".into(), "-".into()],
                branches: vec![plus, minus_branch()],
            };
            let label = format!("Z{}|{}", control + 1, name);
            weighted.push((1.0 / 9.0, MeasurementSetting::new_adaptive(label, tree)));
        }
    }
    VerificationStrategy::new("hom-w3", target, weighted)
}

/// The one-way operator with qubit 0 as control, written directly as a sum
/// of commuting products.
pub fn hom_w3_one_way_operator() -> ComplexMatrix {
    let id2 = ComplexMatrix::identity(2);
    let zp = eigenprojector(Pauli::Z, true);
    let zm = eigenprojector(Pauli::Z, false);
    let xx = parity_projector(&kron(&pauli(Pauli::X), &pauli(Pauli::X)), true);
    let yy = parity_projector(&kron(&pauli(Pauli::Y), &pauli(Pauli::Y)), true);
    let gg = kron(&zp, &zp);
    let plus = &xx.scale(0.5) + &yy.scale(0.5);
    let minus = &kron(&id2, &id2).scale(0.5) + &gg.scale(0.5);
    &kron(&zp, &plus) + &kron(&zm, &minus)
}

/// `Ω_Hom(W₃)` read as an average over the three cyclic permutations of the
/// qubits applied to the one-way operator.
pub fn hom_w3_operator_by_cyclic_permutation() -> ComplexMatrix {
    let base = hom_w3_one_way_operator();
    let mut out = ComplexMatrix::zeros(8);
    for shift in 0..3 {
        let perm: Vec<usize> = (0..3).map(|q| (q + shift) % 3).collect();
        out = &out + &permute_qubits(&base, &perm).scale(1.0 / 3.0);
    }
    out
}

/// Relabels tensor factors: input qubit `q` becomes output qubit `perm[q]`.
/// Returns `U M U†` for the corresponding permutation unitary.
pub fn permute_qubits(m: &ComplexMatrix, perm: &[usize]) -> ComplexMatrix {
    let n = perm.len();
    let dim = 1usize << n;
    assert_eq!(m.dim(), dim, "permutation length does not match register");
    let map = |x: usize| {
        let mut y = 0;
        for (q, &to) in perm.iter().enumerate() {
            let bit = (x >> (n - 1 - q)) & 1;
            y |= bit << (n - 1 - to);
        }
        y
    };
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(map(i), map(j))] = m[(i, j)];
        }
    }
    out
}

/// One-way adaptive strategy for `Wₙ`, one setting per qubit pair `i < j`.
///
/// The other `n - 2` qubits are measured in `Z` and their excitations
/// counted; one excitation selects `Z⁺ᵢZ⁺ⱼ`, none selects `(XX)⁺ᵢⱼ`, more
/// than one rejects.
pub fn build_omega_adaptive_wn(n: usize) -> Result<VerificationStrategy, StrategyError> {
    if !(3..=MAX_QUBITS).contains(&n) {
        return Err(StrategyError::OutOfRange(format!("W-state size n = {n} outside 3..={MAX_QUBITS}")));
    }
    let target = make_w_state(n)?;
    let dim = 1usize << n;
    let n_pairs = n * (n - 1) / 2;
    let mut weighted = Vec::with_capacity(n_pairs);
    for i in 0..n {
        for j in i + 1..n {
            let others: Vec<usize> = (0..n).filter(|&q| q != i && q != j).collect();
            let excitations = |x: usize| others.iter().filter(|&&q| (x >> (n - 1 - q)) & 1 == 1).count();
            // excitation classes 0, 1, >=2 as diagonal projectors
            let mut classes = vec![vec![0.0; dim]; 3];
            for x in 0..dim {
                classes[excitations(x).min(2)][x] = 1.0;
            }
            let mut projectors = Vec::new();
            let mut labels = Vec::new();
            let mut branches = Vec::new();
            for (k, diag) in classes.iter().enumerate() {
                if diag.iter().all(|&v| v == 0.0) {
                    continue;
                }
                projectors.push(ComplexMatrix::diagonal(diag));
                labels.push(match k {
                    0 => "k=0".to_string(),
                    1 => "k=1".to_string(),
                    _ => "k>=2".to_string(),
                });
                branches.push(match k {
                    0 => Branch::test("XX+", two_qubit_parity(n, i, j, Pauli::X)),
                    1 => Branch::test("Z+Z+", both_ground(n, i, j)),
                    _ => Branch::Reject,
                });
            }
            let tree = MeasurementTree {
                first_stage_qubits: others.clone(),
                first_stage: ProjectiveMeasurement::new(projectors)?,
                outcome_labels: labels,
                branches,
            };
            let label = format!("pair({},{})", i + 1, j + 1);
            weighted.push((1.0 / n_pairs as f64, MeasurementSetting::new_adaptive(label, tree)));
        }
    }
    VerificationStrategy::new(format!("adaptive-w{n}"), target, weighted)
}

/// `α(θ) = (2 - sin2θ)/(4 + sin2θ)`.
pub fn opt_2q_weight(theta: f64) -> f64 {
    let s = (2.0 * theta).sin();
    (2.0 - s) / (4.0 + s)
}

/// The three product states `|φₖ⟩` orthogonal to `sinθ|01⟩ + cosθ|10⟩`.
///
/// The coefficients `1/√(1+tanθ)` and `1/√(1+cotθ)` are evaluated as
/// `√(cosθ/(sinθ+cosθ))` and `√(sinθ/(sinθ+cosθ))`, which are their limits
/// at `θ ∈ {0, π/2}`.
pub fn phi_basis(theta: f64) -> [Vec<C64>; 3] {
    let (s, c) = theta.sin_cos();
    let (s, c) = (s.max(0.0), c.max(0.0));
    let a = (c / (s + c)).sqrt();
    let b = (s / (s + c)).sqrt();
    let e = |angle: f64| C64::from_polar(1.0, angle);
    let phi1 = kron_vec(&[ONE * a, e(2.0 * PI / 3.0) * b], &[ONE * b, e(-PI / 3.0) * a]);
    let phi2 = kron_vec(&[ONE * a, e(4.0 * PI / 3.0) * b], &[ONE * b, e(-5.0 * PI / 3.0) * a]);
    let phi3 = kron_vec(&[ONE * a, ONE * b], &[ONE * b, -ONE * a]);
    [phi1, phi2, phi3]
}

/// Optimal non-adaptive strategy for `sinθ|01⟩ + cosθ|10⟩`.
pub fn build_omega_opt_2q(theta: f64) -> Result<VerificationStrategy, StrategyError> {
    if !(0.0..=PI / 2.0 + 1e-12).contains(&theta) {
        return Err(StrategyError::OutOfRange(format!("θ = {theta} outside [0, π/2]")));
    }
    let theta = theta.min(PI / 2.0);
    let target = make_theta_state(theta);
    let alpha = opt_2q_weight(theta);
    let zz = kron(&pauli(Pauli::Z), &pauli(Pauli::Z));
    let mut weighted = vec![(alpha, MeasurementSetting::new_static("ZZ-", parity_projector(&zz, false)))];
    let id = ComplexMatrix::identity(4);
    for (k, phi) in phi_basis(theta).iter().enumerate() {
        let accept = &id - &ComplexMatrix::outer(phi, phi);
        weighted.push(((1.0 - alpha) / 3.0, MeasurementSetting::new_static(format!("not-phi{}", k + 1), accept)));
    }
    VerificationStrategy::new(format!("opt-2q({theta})"), target, weighted)
}
