//! From pass counts to certified infidelities, fidelity estimates, scaling
//! exponents and CHSH values.

mod chsh;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chsh::{
    analyzer_probability, chsh_exact, chsh_s, simulate_polarization_counts, ChshResult, CountTable,
    CHSH_COL_ANGLES, CHSH_ROW_ANGLES,
};

/// Absolute tolerance of the certified-ε bisection.
pub const EPSILON_TOL: f64 = 1e-9;
const BISECTION_MAX_ITER: usize = 200;
const BRACKET_MARGIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("count table: {0}")]
    Table(String),
}

/// `D(x‖y) = x ln(x/y) + (1-x) ln((1-x)/(1-y))`, natural log, `0 ln 0 = 0`.
pub fn kl_divergence(x: f64, y: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(x, y) + term(1.0 - x, 1.0 - y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Significance {
    /// The null hypothesis "every state has infidelity ≥ ε" is rejected at
    /// significance `delta`.
    Rejected { delta: f64 },
    /// `f ≤ 1 - εν`: the data cannot reject the null hypothesis.
    NoRejection,
}

impl Significance {
    pub fn delta(self) -> Option<f64> {
        match self {
            Significance::Rejected { delta } => Some(delta),
            Significance::NoRejection => None,
        }
    }
}

fn check_unit(name: &str, x: f64) -> Result<(), AnalysisError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AnalysisError::Input(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(())
}

fn check_nu(nu: f64) -> Result<(), AnalysisError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(AnalysisError::Input(format!("ν = {nu} outside (0, 1]")));
    }
    Ok(())
}

/// `δ = exp(-D(f ‖ 1-εν) N)` when `f > 1 - εν`.
pub fn significance(f: f64, n: u64, epsilon: f64, nu: f64) -> Result<Significance, AnalysisError> {
    check_unit("f", f)?;
    check_nu(nu)?;
    if n == 0 {
        return Err(AnalysisError::Input("N must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon * nu < 1.0) {
        return Err(AnalysisError::Input(format!("ε = {epsilon} outside (0, 1/ν)")));
    }
    let y = 1.0 - epsilon * nu;
    if f <= y {
        return Ok(Significance::NoRejection);
    }
    Ok(Significance::Rejected { delta: (-kl_divergence(f, y) * n as f64).exp() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub epsilon: f64,
    pub delta: f64,
    pub f: f64,
    pub n: u64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Certification {
    Certified(HypothesisResult),
    /// No `ε` below `min(1/ν, 1)` reaches the requested significance.
    CannotCertify,
}

impl Certification {
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Certification::Certified(r) => Some(r.epsilon),
            Certification::CannotCertify => None,
        }
    }
}

/// Smallest `ε` with `significance(f, N, ε, ν) ≤ δ`, by bisection.
pub fn certified_epsilon(f: f64, n: u64, nu: f64, delta: f64) -> Result<Certification, AnalysisError> {
    check_unit("f", f)?;
    check_nu(nu)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AnalysisError::Input(format!("δ = {delta} outside (0, 1)")));
    }
    let achieved = |eps: f64| -> Result<f64, AnalysisError> {
        Ok(significance(f, n, eps, nu)?.delta().unwrap_or(1.0))
    };
    let mut lo = BRACKET_MARGIN;
    let mut hi = (1.0 / nu).min(1.0) - BRACKET_MARGIN;
    if achieved(hi)? > delta {
        return Ok(Certification::CannotCertify);
    }
    if achieved(lo)? <= delta {
        hi = lo;
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo < EPSILON_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if achieved(mid)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Certification::Certified(HypothesisResult { epsilon: hi, delta: achieved(hi)?, f, n, nu }))
}

/// `(1 - δ^{1/N})/ν`, the certified infidelity when every test passes.
pub fn all_pass_epsilon(n: u64, nu: f64, delta: f64) -> f64 {
    -(delta.ln() / n as f64).exp_m1() / nu
}

/// Mean certified `ε` over trials, with the number of trials that could not
/// certify anything (left out of the mean).
pub fn mean_certified_epsilon(
    frequencies: &[f64],
    n: u64,
    nu: f64,
    delta: f64,
) -> Result<(Option<f64>, usize), AnalysisError> {
    let mut sum = 0.0;
    let mut count = 0;
    let mut failed = 0;
    for &f in frequencies {
        match certified_epsilon(f, n, nu, delta)? {
            Certification::Certified(r) => {
                sum += r.epsilon;
                count += 1;
            }
            Certification::CannotCertify => failed += 1,
        }
    }
    Ok(((count > 0).then(|| sum / count as f64), failed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    /// Linear-inversion estimate; homogeneous strategies only.
    pub point: Option<f64>,
    pub std: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub homogeneous: bool,
    /// False when the point estimate falls outside `[0, 1]`, which signals
    /// that the source violates the model.
    pub in_range: bool,
}

/// Direct fidelity estimate from the pass frequency.
///
/// The bounds `1 - 2(1-f)/(1-ν) ≤ F ≤ (f-(1-ν))/ν` hold for any strategy and
/// are always reported; for homogeneous strategies the point estimate
/// coincides with the upper bound. Below `ν = 1/3` the lower bound can exceed
/// the upper one and is then capped at it.
pub fn estimate_fidelity(f: f64, n: u64, nu: f64, homogeneous: bool) -> Result<FidelityEstimate, AnalysisError> {
    check_unit("f", f)?;
    check_nu(nu)?;
    if n == 0 {
        return Err(AnalysisError::Input("N must be at least 1".into()));
    }
    let upper = (f - (1.0 - nu)) / nu;
    let lower = if nu < 1.0 { 1.0 - 2.0 * (1.0 - f) / (1.0 - nu) } else { f };
    let lower = lower.min(upper);
    let (point, std) = if homogeneous {
        (Some(upper), Some((f * (1.0 - f) / n as f64).sqrt() / nu))
    } else {
        (None, None)
    };
    let in_range = point.is_none_or(|p| (0.0..=1.0).contains(&p));
    Ok(FidelityEstimate { point, std, lower, upper, homogeneous, in_range })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals in `ln N`.
    pub residual: f64,
}

/// Least-squares fit of `ln N = slope · ln ε + intercept`.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::Input(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0)) {
        return Err(AnalysisError::Input("N and ε must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Input("all ε values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(ScalingFit { slope, intercept, residual })
}

/// Fields of a verification analysis report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: u64,
    pub t: u64,
    pub f: f64,
    pub nu: f64,
    pub delta_target: f64,
    pub epsilon_certified: Option<f64>,
    pub delta: Option<f64>,
    pub fidelity: FidelityEstimate,
}

impl AnalysisReport {
    pub fn new(n: u64, t: u64, nu: f64, homogeneous: bool, delta_target: f64) -> Result<Self, AnalysisError> {
        if t > n {
            return Err(AnalysisError::Input(format!("t = {t} exceeds N = {n}")));
        }
        let f = t as f64 / n as f64;
        let cert = certified_epsilon(f, n, nu, delta_target)?;
        let (epsilon_certified, delta) = match cert {
            Certification::Certified(r) => (Some(r.epsilon), Some(r.delta)),
            Certification::CannotCertify => (None, None),
        };
        Ok(Self {
            n,
            t,
            f,
            nu,
            delta_target,
            epsilon_certified,
            delta,
            fidelity: estimate_fidelity(f, n, nu, homogeneous)?,
        })
    }
}
