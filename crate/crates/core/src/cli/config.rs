//! The run configuration file and the resolved command it is executed with.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::FitConfig;
use crate::error::{Error, Result};
use crate::experiments::{BoundParams, EstimatorBudgets, SweepSpec, SweptVariable};
use crate::generation::GenerationConfig;

/// Sweep settings; the swept configuration comes from the `generation` and
/// `fit` sections of the same file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub variable: SweptVariable,
    pub values: Vec<usize>,
    pub rounds: usize,
    pub resamples_per_round: usize,
    pub kl_samples: usize,
    /// Replaces `fit.reg_covar` for sweep fits.
    pub reg_covar: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let s = SweepSpec::default();
        Self {
            variable: s.variable,
            values: s.values,
            rounds: s.rounds,
            resamples_per_round: s.resamples_per_round,
            kl_samples: s.kl_samples,
            reg_covar: s.fit_config.reg_covar,
        }
    }
}

impl SweepSettings {
    pub fn to_spec(&self, generation: &GenerationConfig, fit: &FitConfig) -> SweepSpec {
        SweepSpec {
            variable: self.variable,
            values: self.values.clone(),
            rounds: self.rounds,
            resamples_per_round: self.resamples_per_round,
            kl_samples: self.kl_samples,
            base_config: generation.clone(),
            fit_config: FitConfig {
                reg_covar: self.reg_covar,
                ..fit.clone()
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generation: GenerationConfig,
    pub fit: FitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
    pub budgets: EstimatorBudgets,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_params: Option<BoundParams>,
}

impl RunConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|m| Error::Format(format!("{}: {m}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.fit.validate()?;
        self.budgets.validate()?;
        if let Some(s) = &self.sweep {
            s.to_spec(&self.generation, &self.fit).validate()?;
        }
        if let Some(p) = &self.bound_params {
            p.validate()?;
        }
        Ok(())
    }
}

/// Reads a bound-parameter file (TOML, or JSON by extension).
pub fn load_bound_params(path: &Path) -> Result<BoundParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|m| Error::Format(format!("{}: {m}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    Kl,
    Entropy,
    Tv,
    Hsic,
    DeltaH,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::Kl => "kl",
            EstimateKind::Entropy => "entropy",
            EstimateKind::Tv => "tv",
            EstimateKind::Hsic => "hsic",
            EstimateKind::DeltaH => "delta-h",
        }
    }

    /// Number of input files the kind takes.
    pub fn arity(self) -> usize {
        match self {
            EstimateKind::Entropy => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TvMethodArg {
    Grid,
    Importance,
}

/// A command with every flag and default resolved. Together with the
/// [`RunConfig`] it fully determines the numeric outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Simulate,
    Fit {
        data: PathBuf,
    },
    KlGap,
    Estimate {
        kind: EstimateKind,
        inputs: Vec<PathBuf>,
        budget: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tv_method: Option<TvMethodArg>,
        seed: u64,
    },
    Verify {
        trials: usize,
        seed: u64,
        max_atoms: usize,
        sample_size: usize,
        loss_bound: f64,
    },
    Bounds {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        run_dir: Option<PathBuf>,
        seed: u64,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Simulate => "simulate",
            Invocation::Fit { .. } => "fit",
            Invocation::KlGap => "kl-gap",
            Invocation::Estimate { .. } => "estimate",
            Invocation::Verify { .. } => "verify",
            Invocation::Bounds { .. } => "bounds",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn nested_sections_parse() {
        let c: RunConfig = toml::from_str(
            "output_dir = \"out\"\n[generation]\nk_anchor = 3\n[sweep]\nvariable = \"L\"\nrounds = 2\n[budgets]\nkl_samples = 500\n",
        )
        .unwrap();
        assert_eq!(c.generation.k_anchor, 3);
        assert_eq!(c.generation.j_unsampled, 2);
        let s = c.sweep.unwrap();
        assert_eq!((s.variable, s.rounds, s.values.len()), (SweptVariable::L, 2, 14));
        assert_eq!(c.budgets.kl_samples, 500);
        assert_eq!(c.output_dir.unwrap(), PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[generation]\nkk = 1\n").is_err());
    }

    #[test]
    fn invocation_json_round_trip() {
        let inv = Invocation::Estimate {
            kind: EstimateKind::DeltaH,
            inputs: vec!["a.model".into(), "b.model".into()],
            budget: 10,
            tv_method: None,
            seed: u64::MAX,
        };
        let text = serde_json::to_string(&inv).unwrap();
        assert!(text.contains("\"command\":\"estimate\""));
        assert_eq!(serde_json::from_str::<Invocation>(&text).unwrap(), inv);
    }
}
