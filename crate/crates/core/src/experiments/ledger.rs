//! Measured information-theoretic proxies of one simulation run, side by side
//! with the symbolic bound values.

use serde::{Deserialize, Serialize};

use super::bounds::{BoundParams, SymbolicBounds};
use crate::error::{Error, Result};
use crate::estimators::{self, HsicResult, McEstimate, TvMethod};
use crate::gmm::{DatasetMatrix, Gmm};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorBudgets {
    /// Draws per KL estimate; also the importance-sampling budget for TV when d > 2.
    pub kl_samples: usize,
    pub entropy_samples: usize,
    /// Grid cells per axis for TV when d <= 2.
    pub tv_cells: usize,
    pub hsic_permutations: usize,
}

impl Default for EstimatorBudgets {
    fn default() -> Self {
        Self {
            kl_samples: 100_000,
            entropy_samples: 100_000,
            tv_cells: 400,
            hsic_permutations: 200,
        }
    }
}

impl EstimatorBudgets {
    pub fn validate(&self) -> Result<()> {
        if self.kl_samples == 0
            || self.entropy_samples == 0
            || self.tv_cells == 0
            || self.hsic_permutations == 0
        {
            return Err(Error::InvalidParameter("estimator budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Extra detail attached to some measured entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasuredDetail {
    KlTerms { kl_anchor: McEstimate, kl_gen: McEstimate },
    Hsic(HsicResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub std_error: f64,
    pub budget: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<MeasuredDetail>,
}

impl From<McEstimate> for Measured {
    fn from(e: McEstimate) -> Self {
        Self {
            value: e.value,
            std_error: e.std_error,
            budget: e.n_samples,
            seed: e.seed,
            detail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredProxies {
    pub h_anchor_est: Measured,
    pub h_gen_est: Measured,
    pub delta_h_est: Measured,
    pub kl_gap: Measured,
    pub hsic_anchor_gen: Measured,
    pub tv_task_est: Measured,
    pub tv_gen_est: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredProxies>,
    pub params: BoundParams,
    pub symbolic: SymbolicBounds,
}

/// Models and datasets of one generation run.
#[derive(Debug, Clone, Copy)]
pub struct RunOutputs<'a> {
    /// Ground-truth mixture G (the task distribution).
    pub gt: &'a Gmm,
    /// Generative model M.
    pub model_m: &'a Gmm,
    /// Distribution of the synthetic rows, M with revision noise.
    pub generated: &'a Gmm,
    pub anchor_model: &'a Gmm,
    pub gen_model: &'a Gmm,
    pub anchor: &'a DatasetMatrix,
    pub synthetic: &'a DatasetMatrix,
}

fn head(data: &DatasetMatrix, n: usize) -> Result<DatasetMatrix> {
    DatasetMatrix::new(
        data.as_slice()[..n * data.dim()].to_vec(),
        data.dim(),
        data.provenance,
        data.seed,
        None,
    )
}

fn tv(p: &Gmm, q: &Gmm, budgets: &EstimatorBudgets, seed: u64) -> Result<Measured> {
    let est = if p.dim() <= 2 {
        estimators::tv_distance(p, q, TvMethod::Grid, budgets.tv_cells, seed)?
    } else {
        estimators::tv_distance(p, q, TvMethod::Importance, budgets.kl_samples, seed)?
    };
    Ok(est.into())
}

/// Estimates the seven measured proxies. Field `i` uses the sub-seed `(seed, i)`.
pub fn measure(run: &RunOutputs<'_>, budgets: &EstimatorBudgets, seed: u64) -> Result<MeasuredProxies> {
    budgets.validate()?;
    let sub = |i: u64| seed::derive(seed, &[i]);
    let field = |name: &'static str| move |e: Error| e.context(format!("measuring {name}"));

    let h_anchor_est = estimators::mc_entropy(run.anchor_model, budgets.entropy_samples, sub(0))
        .map_err(field("h_anchor_est"))?
        .into();
    let h_gen_est = estimators::mc_entropy(run.gen_model, budgets.entropy_samples, sub(1))
        .map_err(field("h_gen_est"))?
        .into();
    let delta_h_est = estimators::delta_h(run.anchor_model, run.gen_model, budgets.entropy_samples, sub(2))
        .map_err(field("delta_h_est"))?
        .into();

    let kl_seed = sub(3);
    let kl_anchor = estimators::mc_kl(run.anchor_model, run.gt, budgets.kl_samples, seed::derive(kl_seed, &[0]))
        .map_err(field("kl_gap"))?;
    let kl_gen = estimators::mc_kl(run.gen_model, run.gt, budgets.kl_samples, seed::derive(kl_seed, &[1]))
        .map_err(field("kl_gap"))?;
    let kl_gap = Measured {
        value: kl_anchor.value - kl_gen.value,
        std_error: kl_anchor.std_error.hypot(kl_gen.std_error),
        budget: budgets.kl_samples,
        seed: kl_seed,
        detail: Some(MeasuredDetail::KlTerms { kl_anchor, kl_gen }),
    };

    // rows are paired by index over the shorter dataset
    let n = run.anchor.n().min(run.synthetic.n());
    let hsic_seed = sub(4);
    let h = estimators::hsic(
        &head(run.anchor, n)?,
        &head(run.synthetic, n)?,
        budgets.hsic_permutations,
        hsic_seed,
    )
    .map_err(field("hsic_anchor_gen"))?;
    let hsic_anchor_gen = Measured {
        value: h.statistic,
        std_error: 0.0,
        budget: budgets.hsic_permutations,
        seed: hsic_seed,
        detail: Some(MeasuredDetail::Hsic(h)),
    };

    let tv_task_est = tv(run.gt, run.model_m, budgets, sub(5)).map_err(field("tv_task_est"))?;
    let tv_gen_est = tv(run.model_m, run.generated, budgets, sub(6)).map_err(field("tv_gen_est"))?;

    Ok(MeasuredProxies {
        h_anchor_est,
        h_gen_est,
        delta_h_est,
        kl_gap,
        hsic_anchor_gen,
        tv_task_est,
        tv_gen_est,
    })
}

/// Evaluates the symbolic bounds and, when run outputs are given, the
/// measured proxies next to them.
pub fn build_bound_ledger(
    run: Option<&RunOutputs<'_>>,
    params: &BoundParams,
    budgets: &EstimatorBudgets,
    seed: u64,
) -> Result<BoundLedger> {
    let symbolic = SymbolicBounds::evaluate(params)?;
    let measured = run.map(|r| measure(r, budgets, seed)).transpose()?;
    Ok(BoundLedger {
        measured,
        params: params.clone(),
        symbolic,
    })
}
