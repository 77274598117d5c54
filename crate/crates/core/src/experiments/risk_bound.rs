//! Exact check of the synthetic-data risk decomposition on finite supports:
//!
//! `|R_D(h) - R_S(h)| <= C (TV(D, D_M) + TV(D_M, D_gen)) + |R_Dgen(h) - R_S(h)|`
//!
//! for a loss bounded by `C`, where `S` is an i.i.d. sample from `D_gen`.
//! Distributions live on at most a few dozen atoms, so every risk and TV
//! distance is a finite sum.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Floating-point slack allowed when comparing the two sides.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskTrialConfig {
    /// Maximum number of atoms; each trial draws a support size in `2..=max_atoms`.
    pub max_atoms: usize,
    /// Loss upper bound `C`.
    pub loss_bound: f64,
    /// Size of the synthetic sample.
    pub sample_size: usize,
    /// Use one distribution for `D`, `D_M` and `D_gen`.
    pub identical_distributions: bool,
}

impl Default for RiskTrialConfig {
    fn default() -> Self {
        Self {
            max_atoms: 20,
            loss_bound: 1.0,
            sample_size: 50,
            identical_distributions: false,
        }
    }
}

/// Every term of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTrial {
    pub atoms: usize,
    pub true_risk: f64,
    pub empirical_risk: f64,
    pub synthetic_risk: f64,
    pub tv_task: f64,
    pub tv_gen: f64,
    /// `|R_D - R_S|`.
    pub lhs: f64,
    /// `C (tv_task + tv_gen) + |R_Dgen - R_S|`.
    pub rhs: f64,
    pub holds: bool,
}

impl RiskTrial {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundReport {
    pub seed: u64,
    pub config: RiskTrialConfig,
    pub trials: Vec<RiskTrial>,
    pub violations: usize,
    pub slack: SlackStats,
}

impl RiskBoundReport {
    pub fn all_hold(&self) -> bool {
        self.violations == 0
    }
}

fn random_simplex(rng: &mut Rng, atoms: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..atoms).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn expectation(p: &[f64], loss: &[f64]) -> f64 {
    p.iter().zip(loss).map(|(a, l)| a * l).sum()
}

fn draw_atom(rng: &mut Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Runs one randomized trial with its own random stream.
pub fn risk_trial(config: &RiskTrialConfig, rng: &mut Rng) -> RiskTrial {
    let atoms = rng.random_range(2..=config.max_atoms.max(2));
    let d_task = random_simplex(rng, atoms);
    let (d_model, d_gen) = if config.identical_distributions {
        (d_task.clone(), d_task.clone())
    } else {
        (random_simplex(rng, atoms), random_simplex(rng, atoms))
    };
    // loss of the fixed predictor at each atom
    let loss: Vec<f64> = (0..atoms)
        .map(|_| rng.random::<f64>() * config.loss_bound)
        .collect();
    let sample_loss: f64 = (0..config.sample_size)
        .map(|_| loss[draw_atom(rng, &d_gen)])
        .sum();
    let empirical_risk = sample_loss / config.sample_size as f64;

    let true_risk = expectation(&d_task, &loss);
    let synthetic_risk = expectation(&d_gen, &loss);
    let tv_task = total_variation(&d_task, &d_model);
    let tv_gen = total_variation(&d_model, &d_gen);
    let lhs = (true_risk - empirical_risk).abs();
    let rhs = config.loss_bound * (tv_task + tv_gen) + (synthetic_risk - empirical_risk).abs();
    RiskTrial {
        atoms,
        true_risk,
        empirical_risk,
        synthetic_risk,
        tv_task,
        tv_gen,
        lhs,
        rhs,
        holds: lhs <= rhs + ROUNDING_SLACK,
    }
}

/// Runs `trial_count` independent trials; trial `i` draws from a stream
/// derived from `(seed, i)`.
pub fn verify_risk_bound_with(trial_count: usize, seed: u64, config: &RiskTrialConfig) -> Result<RiskBoundReport> {
    if trial_count == 0 {
        return Err(Error::InvalidParameter("trial count must be >= 1".into()));
    }
    if config.sample_size == 0 || !(config.loss_bound >= 0.0) {
        return Err(Error::InvalidParameter(
            "sample_size must be >= 1 and loss_bound >= 0".into(),
        ));
    }
    let trials: Vec<RiskTrial> = (0..trial_count)
        .map(|i| risk_trial(config, &mut seed::rng_at(seed, &[i as u64])))
        .collect();
    let violations = trials.iter().filter(|t| !t.holds).count();
    let slacks = trials.iter().map(RiskTrial::slack);
    let slack = SlackStats {
        min: slacks.clone().fold(f64::INFINITY, f64::min),
        mean: slacks.clone().sum::<f64>() / trial_count as f64,
        max: slacks.fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(RiskBoundReport {
        seed,
        config: config.clone(),
        trials,
        violations,
        slack,
    })
}

/// Default trials: up to 20 atoms, `C = 1`, 50 synthetic draws.
pub fn verify_risk_bound(trial_count: usize, seed: u64) -> Result<RiskBoundReport> {
    verify_risk_bound_with(trial_count, seed, &RiskTrialConfig::default())
}
