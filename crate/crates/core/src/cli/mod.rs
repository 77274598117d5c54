//! Command-line front end: flag parsing, config resolution and dispatch.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::em::InitMethod;
use crate::error::{Error, Result};
use crate::experiments::SweptVariable;
use crate::io::read_model;

pub use config::{EstimateKind, Invocation, RunConfig, SweepSettings, TvMethodArg};
pub use manifest::Manifest;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for invalid configuration, flags or input files.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running, including a violated bound check.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rblab", version, about = "Gaussian-mixture synthetic-data laboratory")]
pub struct Cli {
    /// Run configuration (TOML, or JSON when the name ends in .json).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the command's random streams.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; must already exist.
    #[arg(long, global = true, env = "RBLAB_OUTPUT", value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build G and M, draw anchor and synthetic data, fit both.
    Simulate {
        #[command(flatten)]
        generation: GenerationFlags,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Fit a mixture to a dataset CSV.
    Fit {
        /// Dataset CSV with header x0..x{d-1},component,provenance.
        data: PathBuf,
        #[arg(long, short = 'k')]
        components: Option<usize>,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Sweep K, J or L and record the KL gap per round.
    KlGap {
        #[arg(long, value_parser = parse_variable)]
        variable: Option<SweptVariable>,
        /// Comma list (2,4,8) or inclusive range (2..15).
        #[arg(long, value_parser = parse_values)]
        values: Option<Values>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        resamples: Option<usize>,
        #[arg(long)]
        kl_samples: Option<usize>,
        #[command(flatten)]
        generation: GenerationFlags,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Estimate KL, entropy, TV, HSIC or the entropy difference.
    Estimate {
        #[arg(value_enum)]
        kind: EstimateKind,
        /// Model files (kl, entropy, tv, delta-h) or dataset CSVs (hsic).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Draws, grid cells per axis (tv grid) or permutations (hsic).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum)]
        tv_method: Option<TvMethodArg>,
    },
    /// Check the synthetic-data risk bound on random finite distributions.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        max_atoms: usize,
        #[arg(long, default_value_t = 50)]
        sample_size: usize,
        #[arg(long, default_value_t = 1.0)]
        loss_bound: f64,
    },
    /// Evaluate the bound calculators, with measured proxies when a
    /// simulate output directory is given.
    Bounds {
        /// Bound parameters (TOML, or JSON by extension).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerationFlags {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "k-anchor")]
    pub k_anchor: Option<usize>,
    #[arg(long = "j-unsampled")]
    pub j_unsampled: Option<usize>,
    #[arg(long = "l-irrelevant")]
    pub l_irrelevant: Option<usize>,
    #[arg(long)]
    pub n_per_anchor_component: Option<usize>,
    #[arg(long)]
    pub n_resample: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub mean_box: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Added to covariance diagonals. For kl-gap this sets the sweep value,
    /// which defaults to 0.05 rather than the fit default 1e-6.
    #[arg(long)]
    pub reg_covar: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitMethod>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Values(pub Vec<usize>);

fn parse_variable(s: &str) -> std::result::Result<SweptVariable, String> {
    SweptVariable::parse(s).ok_or_else(|| format!("expected K, J or L, got '{s}'"))
}

fn parse_init(s: &str) -> std::result::Result<InitMethod, String> {
    match s {
        "kmeans_pp" | "kmeans++" => Ok(InitMethod::KmeansPp),
        "random_points" => Ok(InitMethod::RandomPoints),
        _ => Err(format!("expected kmeans_pp or random_points, got '{s}'")),
    }
}

fn parse_values(s: &str) -> std::result::Result<Values, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok(Values((a..=b).collect()));
    }
    s.split(',').map(num).collect::<std::result::Result<_, _>>().map(Values)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl GenerationFlags {
    fn apply(&self, c: &mut crate::generation::GenerationConfig) {
        set(&mut c.dim, self.dim);
        set(&mut c.k_anchor, self.k_anchor);
        set(&mut c.j_unsampled, self.j_unsampled);
        set(&mut c.l_irrelevant, self.l_irrelevant);
        set(&mut c.n_per_anchor_component, self.n_per_anchor_component);
        set(&mut c.n_resample, self.n_resample);
        set(&mut c.noise_scale, self.noise_scale);
        set(&mut c.mean_box, self.mean_box);
    }
}

impl FitFlags {
    fn apply(&self, c: &mut crate::em::FitConfig) {
        set(&mut c.max_iter, self.max_iter);
        set(&mut c.rel_tol, self.rel_tol);
        set(&mut c.reg_covar, self.reg_covar);
        set(&mut c.n_restarts, self.restarts);
        set(&mut c.init_method, self.init);
    }
}

/// A fully resolved run: what to execute and where.
#[derive(Debug, Clone)]
pub struct Plan {
    pub invocation: Invocation,
    pub config: RunConfig,
    pub output_dir: PathBuf,
}

/// Merges the config file, flags and defaults into a [`Plan`]. Flags win
/// over the file; `--output` (or `RBLAB_OUTPUT`) wins over `output_dir`.
pub fn resolve(cli: &Cli) -> Result<Plan> {
    if let Command::Replay { manifest } = &cli.command {
        let m = Manifest::read(manifest)?;
        let mut config = m.config;
        let output_dir = cli
            .output
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        config.output_dir = Some(output_dir.clone());
        return Ok(Plan {
            invocation: m.invocation,
            config,
            output_dir,
        });
    }

    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed;
    let invocation = match &cli.command {
        Command::Simulate { generation, fit } => {
            generation.apply(&mut config.generation);
            fit.apply(&mut config.fit);
            set(&mut config.generation.master_seed, seed);
            Invocation::Simulate
        }
        Command::Fit { data, components, fit } => {
            fit.apply(&mut config.fit);
            set(&mut config.fit.n_components, *components);
            set(&mut config.fit.seed, seed);
            Invocation::Fit { data: data.clone() }
        }
        Command::KlGap {
            variable,
            values,
            rounds,
            resamples,
            kl_samples,
            generation,
            fit,
        } => {
            generation.apply(&mut config.generation);
            fit.apply(&mut config.fit);
            set(&mut config.generation.master_seed, seed);
            let sweep = config.sweep.get_or_insert_with(SweepSettings::default);
            set(&mut sweep.variable, *variable);
            set(&mut sweep.values, values.clone().map(|v| v.0));
            set(&mut sweep.rounds, *rounds);
            set(&mut sweep.resamples_per_round, *resamples);
            set(&mut sweep.kl_samples, *kl_samples);
            set(&mut sweep.reg_covar, fit.reg_covar);
            Invocation::KlGap
        }
        Command::Estimate {
            kind,
            inputs,
            budget,
            tv_method,
        } => {
            if inputs.len() != kind.arity() {
                return Err(Error::InvalidParameter(format!(
                    "estimate {} takes {} input file(s), got {}",
                    kind.as_str(),
                    kind.arity(),
                    inputs.len()
                )));
            }
            let tv_method = match kind {
                EstimateKind::Tv => Some(match tv_method {
                    Some(m) => *m,
                    None if read_model(&inputs[0])?.dim() <= 2 => TvMethodArg::Grid,
                    None => TvMethodArg::Importance,
                }),
                _ => None,
            };
            let b = &config.budgets;
            let default_budget = match (kind, tv_method) {
                (EstimateKind::Kl, _) => b.kl_samples,
                (EstimateKind::Entropy | EstimateKind::DeltaH, _) => b.entropy_samples,
                (EstimateKind::Tv, Some(TvMethodArg::Grid)) => b.tv_cells,
                (EstimateKind::Tv, _) => b.kl_samples,
                (EstimateKind::Hsic, _) => b.hsic_permutations,
            };
            Invocation::Estimate {
                kind: *kind,
                inputs: inputs.clone(),
                budget: budget.unwrap_or(default_budget),
                tv_method,
                seed: seed.unwrap_or(0),
            }
        }
        Command::Verify {
            trials,
            max_atoms,
            sample_size,
            loss_bound,
        } => {
            if *trials == 0 {
                return Err(Error::InvalidParameter("--trials must be >= 1".into()));
            }
            Invocation::Verify {
                trials: *trials,
                seed: seed.unwrap_or(0),
                max_atoms: *max_atoms,
                sample_size: *sample_size,
                loss_bound: *loss_bound,
            }
        }
        Command::Bounds { params, run_dir } => {
            if let Some(p) = params {
                config.bound_params = Some(config::load_bound_params(p)?);
            }
            config.bound_params.get_or_insert_with(Default::default);
            Invocation::Bounds {
                run_dir: run_dir.clone(),
                seed: seed.unwrap_or(0),
            }
        }
        Command::Replay { .. } => unreachable!("handled above"),
    };
    let output_dir = cli
        .output
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    config.output_dir = Some(output_dir.clone());
    config.validate()?;
    Ok(Plan {
        invocation,
        config,
        output_dir,
    })
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::InsufficientSamples { .. }
        | Error::GridDimension(_)
        | Error::NotSymmetric(_)
        | Error::Parse { .. }
        | Error::Format(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args`, runs the command and returns the exit code. Diagnostics
/// go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        // a pool may already exist when embedded; results do not depend on it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = resolve(&cli).and_then(|plan| commands::execute(&plan));
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_ranges_and_lists() {
        assert_eq!(parse_values("2..5").unwrap(), Values(vec![2, 3, 4, 5]));
        assert_eq!(parse_values("2..=3").unwrap(), Values(vec![2, 3]));
        assert_eq!(parse_values("7,1,3").unwrap(), Values(vec![7, 1, 3]));
        assert!(parse_values("5..2").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[generation]\nk_anchor = 5\nj_unsampled = 4\n").unwrap();
        let cli = Cli::try_parse_from([
            "rblab",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--output",
            "somewhere",
            "simulate",
            "--k-anchor",
            "3",
        ])
        .unwrap();
        let plan = resolve(&cli).unwrap();
        assert_eq!(plan.config.generation.k_anchor, 3);
        assert_eq!(plan.config.generation.j_unsampled, 4);
        assert_eq!(plan.config.generation.master_seed, 9);
        assert_eq!(plan.output_dir, PathBuf::from("somewhere"));
    }

    #[test]
    fn zero_trials_is_a_usage_error() {
        let cli = Cli::try_parse_from(["rblab", "verify", "--trials", "0"]).unwrap();
        let e = resolve(&cli).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
    }
}
