//! Closed-form right-hand sides of the information-theoretic generalization
//! bounds, evaluated over user-supplied symbolic quantities.
//!
//! None of the inputs here are estimated from data; they are supplied by the
//! caller. All entropies and mutual informations are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbolic inputs shared by the bound calculators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Information gain contributed by the generative model.
    pub delta_i: f64,
    /// Compression bottleneck `I(e_M, W) + I(e_p, W)`.
    pub b_syn: f64,
    /// Entropy of the model factor `H(e_M)`.
    pub h_e_m: f64,
    /// Curation and prompting efficiency term.
    pub delta_eps_p: f64,
    /// Sub-Gaussian parameter of the loss.
    pub sigma: f64,
    /// Per-layer contraction factor, in (0, 1).
    pub eta: f64,
    /// Number of contracting hidden layers.
    pub depth: u32,
    /// Synthetic training set size.
    pub n_samples: u64,
    /// Anchor training set size.
    pub m_samples: u64,
    /// Upper bound `C` of the loss.
    pub loss_bound: f64,
    /// Ratio `H(S_anchor | W') / H(S_anchor | W)`.
    pub alpha: f64,
    pub eps_w_p: f64,
    pub lambda_eff: f64,
    pub h_anchor_given_w: f64,
    pub h_gen_given_w: f64,
    pub h_anchor: f64,
    pub h_gen: f64,
    /// `I(S_anchor, W')`.
    pub mi_anchor_w: f64,
    pub tv_task: f64,
    pub tv_gen: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            delta_i: 0.0,
            b_syn: 0.0,
            h_e_m: 0.0,
            delta_eps_p: 0.0,
            sigma: 1.0,
            eta: 0.5,
            depth: 1,
            n_samples: 1,
            m_samples: 1,
            loss_bound: 1.0,
            alpha: 0.0,
            eps_w_p: 0.0,
            lambda_eff: 1.0,
            h_anchor_given_w: 0.0,
            h_gen_given_w: 0.0,
            h_anchor: 0.0,
            h_gen: 0.0,
            mi_anchor_w: 0.0,
            tv_task: 0.0,
            tv_gen: 0.0,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} must lie in (0, 1)", self.eta));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha = {} must be >= 0", self.alpha));
        }
        if !(self.lambda_eff >= 1.0) {
            return bad(format!("lambda_eff = {} must be >= 1", self.lambda_eff));
        }
        for (name, v) in [("tv_task", self.tv_task), ("tv_gen", self.tv_gen)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        if self.depth == 0 || self.n_samples == 0 || self.m_samples == 0 {
            return bad("depth, n_samples and m_samples must be >= 1".into());
        }
        Ok(())
    }

    /// `ln(1/eta)` contraction over `depth` layers: `exp(-(depth/2) ln(1/eta)) = eta^(depth/2)`.
    fn contraction(&self) -> Result<f64> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta = {} must lie in (0, 1)",
                self.eta
            )));
        }
        Ok(self.eta.powf(self.depth as f64 / 2.0))
    }

    /// `Delta H = H(S_anchor) - H(S_gen)`.
    pub fn delta_h(&self) -> f64 {
        self.h_anchor - self.h_gen
    }
}

fn mi_generalization(params: &BoundParams, mi: f64, samples: u64) -> Result<f64> {
    let contraction = params.contraction()?;
    if !(mi >= 0.0) {
        return Err(Error::InvalidParameter(format!("mutual information {mi} must be >= 0")));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let s2 = params.sigma * params.sigma;
    Ok(contraction * (2.0 * s2 * mi / samples as f64).sqrt())
}

/// Expected generalization error of a network with `depth` contraction layers
/// trained on `n_samples` points: `eta^(depth/2) sqrt(2 sigma^2 I(S, W) / n)`.
pub fn mi_generalization_bound(params: &BoundParams, mi_s_w: f64) -> Result<f64> {
    mi_generalization(params, mi_s_w, params.n_samples)
}

/// Upper bound on `I(S_gen, W)`: `-delta_i + b_syn + h_e_m + delta_eps_p`.
pub fn synthetic_mi_bound(params: &BoundParams) -> f64 {
    -params.delta_i + params.b_syn + params.h_e_m + params.delta_eps_p
}

/// Post-training bound for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBound {
    pub value: f64,
    /// `C (tv_task + tv_gen)`.
    pub divergence_term: f64,
    /// Generalization term with the mutual-information bracket.
    pub information_term: f64,
    /// The bracket was negative and was replaced by zero.
    pub bracket_clamped: bool,
}

/// `C (TV(D, D_M) + TV(D_M, D_gen))` plus the generalization term evaluated at
/// the synthetic mutual-information bound. A negative bracket is vacuous and is
/// clamped to zero under the square root.
pub fn synthetic_post_training_bound(params: &BoundParams) -> Result<SyntheticBound> {
    let bracket = synthetic_mi_bound(params);
    let bracket_clamped = bracket < 0.0;
    let information_term = mi_generalization_bound(params, bracket.max(0.0))?;
    let task = params.loss_bound * params.tv_task;
    let gen = params.loss_bound * params.tv_gen;
    Ok(SyntheticBound {
        value: information_term + task + gen,
        divergence_term: task + gen,
        information_term,
        bracket_clamped,
    })
}

/// Post-training bound for anchor data only:
/// `eta^(depth/2) sqrt(2 sigma^2 I(S_anchor, W') / m)`.
pub fn anchor_post_training_bound(params: &BoundParams) -> Result<f64> {
    mi_generalization(params, params.mi_anchor_w, params.m_samples)
}

/// Upper bound on GGMI `= I(S_anchor, W') - I(S_gen, W)`:
/// `delta_i - (alpha + 1) H(S_anchor|W) + 2 delta_H + H(S_gen|W) + eps_w_p`.
pub fn ggmi_upper_bound(params: &BoundParams) -> Result<f64> {
    if !(params.alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {} must be >= 0",
            params.alpha
        )));
    }
    Ok(params.delta_i - (params.alpha + 1.0) * params.h_anchor_given_w
        + 2.0 * params.delta_h()
        + params.h_gen_given_w
        + params.eps_w_p)
}

/// All five calculators evaluated on one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicBounds {
    /// Generalization bound w.r.t. synthetic data, at the clamped MI bracket.
    pub synthetic_generalization: f64,
    pub synthetic_mi_bound: f64,
    pub synthetic_post_training: SyntheticBound,
    pub anchor_post_training: f64,
    pub ggmi_upper_bound: f64,
}

impl SymbolicBounds {
    pub fn evaluate(params: &BoundParams) -> Result<Self> {
        params.validate()?;
        let post = synthetic_post_training_bound(params)?;
        Ok(Self {
            synthetic_generalization: post.information_term,
            synthetic_mi_bound: synthetic_mi_bound(params),
            synthetic_post_training: post,
            anchor_post_training: anchor_post_training_bound(params)?,
            ggmi_upper_bound: ggmi_upper_bound(params)?,
        })
    }
}
