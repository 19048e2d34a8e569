use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// `aₖ = a/(k+1+A)^α`, `cₖ = c/(k+1)^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    #[serde(rename = "stability")]
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self { a: 0.15, c: 0.1, big_a: 10.0, alpha: 0.602, gamma: 0.101 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinateDescentConfig {
    pub step: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for CoordinateDescentConfig {
    fn default() -> Self {
        Self { step: 0.2, shrink: 0.5, min_step: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    Spsa(SpsaConfig),
    CoordinateDescent(CoordinateDescentConfig),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Spsa(SpsaConfig::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    BudgetExhausted,
    MaxIterations,
    /// Coordinate descent step fell below its minimum.
    StepBelowMinimum,
}

/// What the optimizer sees of the world: a noisy estimate at a knob vector,
/// or `None` once the sample budget cannot pay for another evaluation.
pub trait Objective {
    fn evaluate(&mut self, iteration: usize, knobs: &[f64]) -> Option<f64>;
    /// Number of further evaluations the budget can pay for.
    fn remaining_evaluations(&self) -> u64;
}

/// Maximizes the objective and returns the final knobs. Both methods start
/// by evaluating `x0`.
pub fn maximize(
    config: &OptimizerConfig,
    x0: &[f64],
    max_iterations: usize,
    objective: &mut dyn Objective,
    rng: &mut StreamRng,
) -> (Vec<f64>, TerminationReason) {
    match config {
        OptimizerConfig::Spsa(c) => spsa(c, x0, max_iterations, objective, rng),
        OptimizerConfig::CoordinateDescent(c) => coordinate_descent(c, x0, max_iterations, objective),
    }
}

fn spsa(
    cfg: &SpsaConfig,
    x0: &[f64],
    max_iterations: usize,
    objective: &mut dyn Objective,
    rng: &mut StreamRng,
) -> (Vec<f64>, TerminationReason) {
    let mut x = x0.to_vec();
    if objective.evaluate(0, &x).is_none() {
        return (x, TerminationReason::BudgetExhausted);
    }
    for k in 0..max_iterations {
        if objective.remaining_evaluations() < 2 {
            return (x, TerminationReason::BudgetExhausted);
        }
        let ak = cfg.a / (k as f64 + 1.0 + cfg.big_a).powf(cfg.alpha);
        let ck = cfg.c / (k as f64 + 1.0).powf(cfg.gamma);
        let delta: Vec<f64> = x.iter().map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v + ck * d).collect();
        let minus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v - ck * d).collect();
        let (Some(fp), Some(fm)) = (objective.evaluate(k + 1, &plus), objective.evaluate(k + 1, &minus)) else {
            return (x, TerminationReason::BudgetExhausted);
        };
        // equal estimates give a zero gradient, i.e. the smaller move
        let g = (fp - fm) / (2.0 * ck);
        for (v, d) in x.iter_mut().zip(&delta) {
            *v += ak * g * d;
        }
    }
    (x, TerminationReason::MaxIterations)
}

fn coordinate_descent(
    cfg: &CoordinateDescentConfig,
    x0: &[f64],
    max_iterations: usize,
    objective: &mut dyn Objective,
) -> (Vec<f64>, TerminationReason) {
    let mut x = x0.to_vec();
    let mut step = cfg.step;
    let Some(mut best) = objective.evaluate(0, &x) else {
        return (x, TerminationReason::BudgetExhausted);
    };
    for k in 0..max_iterations {
        if step < cfg.min_step {
            return (x, TerminationReason::StepBelowMinimum);
        }
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += sign * step;
                let Some(f) = objective.evaluate(k + 1, &trial) else {
                    return (x, TerminationReason::BudgetExhausted);
                };
                if f > best {
                    best = f;
                    x = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= cfg.shrink;
        }
    }
    (x, TerminationReason::MaxIterations)
}
