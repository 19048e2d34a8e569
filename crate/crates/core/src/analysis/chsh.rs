use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::quantum::matrix::{kron_vec, C64};
use crate::quantum::DensityMatrix;

/// Analyzer angles of photon A, degrees.
pub const CHSH_ROW_ANGLES: [f64; 4] = [0.0, 45.0, 90.0, 135.0];
/// Analyzer angles of photon B, degrees.
pub const CHSH_COL_ANGLES: [f64; 4] = [22.5, 67.5, 112.5, 157.5];

const ANGLE_TOL: f64 = 1e-6;

/// Coincidence counts for 4 × 4 linear-polarization analyzer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub row_angles: [f64; 4],
    pub col_angles: [f64; 4],
    pub counts: [[u64; 4]; 4],
}

fn normalize_angle(deg: f64) -> f64 {
    let a = deg.rem_euclid(180.0);
    if (a - 180.0).abs() < ANGLE_TOL {
        0.0
    } else {
        a
    }
}

impl CountTable {
    /// Angles are reduced modulo 180°, since a polarizer at `a` and `a+180°`
    /// is the same analyzer.
    pub fn new(row_angles: [f64; 4], col_angles: [f64; 4], counts: [[u64; 4]; 4]) -> Self {
        Self { row_angles: row_angles.map(normalize_angle), col_angles: col_angles.map(normalize_angle), counts }
    }

    fn find(angles: &[f64; 4], target: f64, axis: &str) -> Result<usize, AnalysisError> {
        let target = normalize_angle(target);
        angles
            .iter()
            .position(|&a| (a - target).abs() < ANGLE_TOL)
            .ok_or_else(|| AnalysisError::Table(format!("no {axis} at {target}°")))
    }

    /// Count at analyzer angles `(a, b)`, degrees.
    pub fn count(&self, a: f64, b: f64) -> Result<u64, AnalysisError> {
        let i = Self::find(&self.row_angles, a, "row")?;
        let j = Self::find(&self.col_angles, b, "column")?;
        Ok(self.counts[i][j])
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { counts: self.counts.map(|r| r.map(|c| c * factor)), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s: f64,
    pub std_error: f64,
    /// `E(0,22.5)`, `E(0,67.5)`, `E(45,22.5)`, `E(45,67.5)`.
    pub correlators: [f64; 4],
}

/// The four `(a, b)` pairs with their sign in `S`.
const TERMS: [(f64, f64, f64); 4] = [(0.0, 22.5, -1.0), (0.0, 67.5, 1.0), (45.0, 22.5, 1.0), (45.0, 67.5, 1.0)];

/// `S = -E(0,22.5) + E(0,67.5) + E(45,22.5) + E(45,67.5)` with
/// `E(a,b) = [C(a,b) + C(a⊥,b⊥) - C(a,b⊥) - C(a⊥,b)] / Σ`.
///
/// Each count is treated as an independent Poisson variable and its variance
/// propagated to first order. Every cell enters exactly one correlator.
pub fn chsh_s(table: &CountTable) -> Result<ChshResult, AnalysisError> {
    let mut s = 0.0;
    let mut var = 0.0;
    let mut correlators = [0.0; 4];
    for (k, &(a, b, sign)) in TERMS.iter().enumerate() {
        let plus = [table.count(a, b)?, table.count(a + 90.0, b + 90.0)?].map(|c| c as f64);
        let minus = [table.count(a, b + 90.0)?, table.count(a + 90.0, b)?].map(|c| c as f64);
        let (p, m) = (plus[0] + plus[1], minus[0] + minus[1]);
        let total = p + m;
        if total == 0.0 {
            return Err(AnalysisError::Table(format!("no counts for correlator E({a}, {b})")));
        }
        let e = (p - m) / total;
        correlators[k] = e;
        s += sign * e;
        // ∂E/∂C is 2m/T² for the plus cells and -2p/T² for the minus cells
        var += (2.0 * m / total.powi(2)).powi(2) * p + (2.0 * p / total.powi(2)).powi(2) * m;
    }
    Ok(ChshResult { s, std_error: var.sqrt(), correlators })
}

fn analyzer(deg: f64) -> [C64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [C64::new(c, 0.0), C64::new(s, 0.0)]
}

/// Born probability of passing linear analyzers at `a` (photon A) and `b`
/// (photon B), degrees, with `|0⟩ = H`.
pub fn analyzer_probability(state: &DensityMatrix, a: f64, b: f64) -> f64 {
    let v = kron_vec(&analyzer(a), &analyzer(b));
    state.expectation(&crate::quantum::ComplexMatrix::outer(&v, &v)).clamp(0.0, 1.0)
}

/// `S` from exact analyzer probabilities.
pub fn chsh_exact(state: &DensityMatrix) -> f64 {
    let c = |a: f64, b: f64| analyzer_probability(state, a, b);
    TERMS
        .iter()
        .map(|&(a, b, sign)| {
            let p = c(a, b) + c(a + 90.0, b + 90.0);
            let m = c(a, b + 90.0) + c(a + 90.0, b);
            sign * (p - m) / (p + m)
        })
        .sum()
}

/// Samples each cell as `Binomial(total, P(a, b))`.
pub fn simulate_polarization_counts<R: Rng + ?Sized>(
    state: &DensityMatrix,
    row_angles: [f64; 4],
    col_angles: [f64; 4],
    total_per_setting: u64,
    rng: &mut R,
) -> Result<CountTable, AnalysisError> {
    if state.n_qubits() != 2 {
        return Err(AnalysisError::Input(format!("CHSH needs a two-qubit state, got {} qubits", state.n_qubits())));
    }
    let mut counts = [[0u64; 4]; 4];
    for (i, &a) in row_angles.iter().enumerate() {
        for (j, &b) in col_angles.iter().enumerate() {
            let p = analyzer_probability(state, a, b);
            let dist = Binomial::new(total_per_setting, p).map_err(|e| AnalysisError::Input(e.to_string()))?;
            counts[i][j] = dist.sample(rng);
        }
    }
    Ok(CountTable::new(row_angles, col_angles, counts))
}
