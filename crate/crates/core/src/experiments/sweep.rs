//! KL-Gap sweeps over the component counts of the simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit_gmm, FitConfig, FittedGmm};
use crate::error::{Error, Result};
use crate::estimators::mc_kl;
use crate::generation::{build_gt_gmm, build_model_m, sample_anchor, sample_synthetic, GenerationConfig};
use crate::gmm::{DatasetMatrix, Gmm};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweptVariable {
    K,
    J,
    L,
}

impl SweptVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweptVariable::K => "K",
            SweptVariable::J => "J",
            SweptVariable::L => "L",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "K" | "k" => Some(SweptVariable::K),
            "J" | "j" => Some(SweptVariable::J),
            "L" | "l" => Some(SweptVariable::L),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            SweptVariable::K => 0x4b,
            SweptVariable::J => 0x4a,
            SweptVariable::L => 0x4c,
        }
    }

    /// `config` with this variable set to `value`.
    pub fn apply(self, config: &GenerationConfig, value: usize) -> GenerationConfig {
        let mut c = config.clone();
        match self {
            SweptVariable::K => c.k_anchor = value,
            SweptVariable::J => c.j_unsampled = value,
            SweptVariable::L => c.l_irrelevant = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweptVariable,
    pub values: Vec<usize>,
    pub rounds: usize,
    /// Independent KL evaluations averaged per round.
    pub resamples_per_round: usize,
    /// Monte-Carlo draws per KL evaluation.
    pub kl_samples: usize,
    pub base_config: GenerationConfig,
    pub fit_config: FitConfig,
}

/// Covariance regularization for sweep fits. Anchor fits put K + J + L
/// components on K * N rows, and without a floor the surplus components
/// collapse onto a few points, which swamps the gap with overfitting noise.
pub const SWEEP_REG_COVAR: f64 = 0.05;

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            variable: SweptVariable::J,
            values: (2..=15).collect(),
            rounds: 100,
            resamples_per_round: 100,
            kl_samples: 1000,
            base_config: GenerationConfig::default(),
            fit_config: FitConfig {
                reg_covar: SWEEP_REG_COVAR,
                ..FitConfig::default()
            },
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one value".into()));
        }
        if self.variable == SweptVariable::K && self.values.contains(&0) {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if self.rounds == 0 || self.resamples_per_round == 0 {
            return Err(Error::InvalidParameter(
                "rounds and resamples_per_round must be >= 1".into(),
            ));
        }
        self.base_config.validate()?;
        self.fit_config.validate()
    }

    /// Master seed of one (value, round) cell.
    pub fn round_seed(&self, value: usize, round: usize) -> u64 {
        seed::derive(
            self.base_config.master_seed,
            &[self.variable.tag(), value as u64, round as u64],
        )
    }
}

/// Outcome of one simulation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub value: usize,
    pub round: usize,
    pub seed: u64,
    /// `KL(pi_anchor || G)` averaged over the resamples.
    pub kl_anchor: f64,
    /// `KL(pi_gen || G)` averaged over the resamples.
    pub kl_gen: f64,
    pub kl_gap: f64,
    pub anchor_fit_converged: bool,
    pub gen_fit_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub value: usize,
    pub mean_gap: f64,
    /// Population standard deviation of the per-round gaps.
    pub std_gap: f64,
    pub rounds: Vec<RoundResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variable: SweptVariable,
    pub per_value: Vec<ValueSummary>,
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.per_value.iter().map(|v| v.mean_gap).collect()
    }

    pub fn values(&self) -> Vec<usize> {
        self.per_value.iter().map(|v| v.value).collect()
    }
}

/// Everything produced by one simulation round, kept for ledgers and plots.
#[derive(Debug, Clone)]
pub struct RoundArtifacts {
    pub config: GenerationConfig,
    pub gt: Gmm,
    pub model_m: Gmm,
    pub anchor: DatasetMatrix,
    pub synthetic: DatasetMatrix,
    pub anchor_fit: FittedGmm,
    pub gen_fit: FittedGmm,
}

/// Builds G and M, draws both datasets and fits `K + J + L` components to each.
pub fn simulate_and_fit(config: &GenerationConfig, fit: &FitConfig) -> Result<RoundArtifacts> {
    let gt = build_gt_gmm(config)?;
    let model_m = build_model_m(&gt, config)?;
    let anchor = sample_anchor(&gt, config)?;
    let synthetic = sample_synthetic(&model_m, config)?;
    let n_components = config.n_model();
    let anchor_fit = fit_gmm(
        &anchor,
        &FitConfig {
            n_components,
            seed: seed::derive(config.master_seed, &[tag::FIT_ANCHOR]),
            ..fit.clone()
        },
    )
    .map_err(|e| e.context("fitting anchor data"))?;
    let gen_fit = fit_gmm(
        &synthetic,
        &FitConfig {
            n_components,
            seed: seed::derive(config.master_seed, &[tag::FIT_GEN]),
            ..fit.clone()
        },
    )
    .map_err(|e| e.context("fitting synthetic data"))?;
    Ok(RoundArtifacts {
        config: config.clone(),
        gt,
        model_m,
        anchor,
        synthetic,
        anchor_fit,
        gen_fit,
    })
}

/// Runs one (value, round) cell of a sweep.
pub fn run_round(spec: &SweepSpec, value: usize, round: usize) -> Result<RoundResult> {
    let seed = spec.round_seed(value, round);
    let config = GenerationConfig {
        master_seed: seed,
        ..spec.variable.apply(&spec.base_config, value)
    };
    let art = simulate_and_fit(&config, &spec.fit_config)?;
    let mut kl_anchor = 0.0;
    let mut kl_gen = 0.0;
    for s in 0..spec.resamples_per_round {
        let s = s as u64;
        kl_anchor += mc_kl(&art.anchor_fit.model, &art.gt, spec.kl_samples, seed::derive(seed, &[tag::KL_ANCHOR, s]))?.value;
        kl_gen += mc_kl(&art.gen_fit.model, &art.gt, spec.kl_samples, seed::derive(seed, &[tag::KL_GEN, s]))?.value;
    }
    let r = spec.resamples_per_round as f64;
    let (kl_anchor, kl_gen) = (kl_anchor / r, kl_gen / r);
    Ok(RoundResult {
        value,
        round,
        seed,
        kl_anchor,
        kl_gen,
        kl_gap: kl_anchor - kl_gen,
        anchor_fit_converged: art.anchor_fit.converged,
        gen_fit_converged: art.gen_fit.converged,
    })
}

/// Runs every (value, round) cell, reporting each finished cell to `progress`.
///
/// Cells run in parallel; aggregation uses rounds sorted by index, so the
/// result does not depend on scheduling.
pub fn run_kl_gap_sweep_with<F>(spec: &SweepSpec, progress: F) -> Result<SweepResult>
where
    F: Fn(&RoundResult) + Sync,
{
    spec.validate()?;
    let cells: Vec<(usize, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.rounds).map(move |r| (v, r)))
        .collect();
    let results: Vec<RoundResult> = cells
        .par_iter()
        .map(|&(v, r)| {
            let res = run_round(spec, v, r).map_err(|e| {
                e.context(format!("{} = {v}, round {r}", spec.variable.as_str()))
            })?;
            progress(&res);
            Ok(res)
        })
        .collect::<Result<_>>()?;

    let per_value = spec
        .values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut rounds = results[i * spec.rounds..(i + 1) * spec.rounds].to_vec();
            rounds.sort_by_key(|r| r.round);
            let gaps: Vec<f64> = rounds.iter().map(|r| r.kl_gap).collect();
            let (mean_gap, std_gap) = mean_std(&gaps);
            ValueSummary {
                value,
                mean_gap,
                std_gap,
                rounds,
            }
        })
        .collect();
    Ok(SweepResult {
        variable: spec.variable,
        per_value,
    })
}

pub fn run_kl_gap_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_kl_gap_sweep_with(spec, |_| {})
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
