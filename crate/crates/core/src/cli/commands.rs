//! Command execution. Each command computes all of its outputs in memory,
//! then writes them atomically, manifest last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::config::{EstimateKind, Invocation, RunConfig, TvMethodArg};
use super::manifest::Manifest;
use super::{Plan, EXIT_OK, EXIT_RUNTIME};
use crate::em::{fit_gmm, FittedGmm};
use crate::error::{Error, Result};
use crate::estimators::{self, TvMethod};
use crate::experiments::sweep::simulate_and_fit;
use crate::experiments::{build_bound_ledger, run_kl_gap_sweep_with, verify_risk_bound_with, RiskTrialConfig, RunOutputs};
use crate::generation::generated_distribution;
use crate::gmm::DatasetMatrix;
use crate::io::{self, fmt_f64};
use crate::seed::{self, tag};
use crate::VERSION;

/// Files a command produces, in write order.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    seeds: BTreeMap<String, u64>,
    diagnostics: serde_json::Value,
    notes: Vec<String>,
}

impl Outputs {
    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json(&mut self, name: impl Into<String>, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.file(name, text.into_bytes());
        Ok(())
    }

    fn seed(&mut self, role: impl Into<String>, seed: u64) {
        self.seeds.insert(role.into(), seed);
    }
}

fn model_bytes(model: &crate::gmm::Gmm) -> Vec<u8> {
    let mut text = model.to_json();
    text.push('\n');
    text.into_bytes()
}

fn fit_summary(fit: &FittedGmm) -> serde_json::Value {
    json!({
        "final_log_likelihood": fit.final_log_likelihood,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
        "restart_index": fit.restart_index,
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Runs a resolved plan and returns the process exit code.
pub fn execute(plan: &Plan) -> Result<i32> {
    let out_dir = io::require_dir(&plan.output_dir)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let cfg = &plan.config;

    let mut out = Outputs::default();
    let (label, code) = match &plan.invocation {
        Invocation::Simulate => ("simulate".to_string(), simulate(cfg, &mut out)?),
        Invocation::Fit { data } => (format!("fit_{}", file_stem(data)), fit(cfg, data, &mut out)?),
        Invocation::KlGap => {
            let var = cfg.sweep.as_ref().map_or("J", |s| s.variable.as_str());
            (format!("kl_gap_{var}"), kl_gap(cfg, &mut out)?)
        }
        Invocation::Estimate {
            kind,
            inputs,
            budget,
            tv_method,
            seed,
        } => (
            format!("estimate_{}", kind.as_str()),
            estimate(*kind, inputs, *budget, *tv_method, *seed, &mut out)?,
        ),
        Invocation::Verify {
            trials,
            seed,
            max_atoms,
            sample_size,
            loss_bound,
        } => {
            let rc = RiskTrialConfig {
                max_atoms: *max_atoms,
                loss_bound: *loss_bound,
                sample_size: *sample_size,
                identical_distributions: false,
            };
            ("verify".to_string(), verify(*trials, *seed, &rc, &mut out)?)
        }
        Invocation::Bounds { run_dir, seed } => {
            ("bounds".to_string(), bounds(cfg, run_dir.as_deref(), *seed, &mut out)?)
        }
    };

    for (name, bytes) in &out.files {
        io::write_atomic(&out_dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        tool: "rblab".into(),
        version: VERSION.into(),
        invocation: plan.invocation.clone(),
        config: cfg.clone(),
        seeds: out.seeds,
        threads: rayon::current_num_threads(),
        started_unix_secs: started,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
        outputs: out.files.into_iter().map(|(n, _)| n).collect(),
        diagnostics: out.diagnostics,
        notes: out.notes,
    };
    manifest.write(&out_dir.join(format!("{label}.manifest.json")))?;
    Ok(code)
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let g = &cfg.generation;
    let art = simulate_and_fit(g, &cfg.fit)?;
    out.file("gt.model", model_bytes(&art.gt));
    out.file("model_m.model", model_bytes(&art.model_m));
    out.file("anchor.csv", io::dataset_to_csv(&art.anchor)?);
    out.file("synthetic.csv", io::dataset_to_csv(&art.synthetic)?);
    out.file("anchor_fit.model", model_bytes(&art.anchor_fit.model));
    out.file("gen_fit.model", model_bytes(&art.gen_fit.model));

    let m = g.master_seed;
    out.seed("master", m);
    for (role, t) in [
        ("gt_build", tag::GT_BUILD),
        ("m_build", tag::M_BUILD),
        ("anchor", tag::ANCHOR),
        ("synthetic", tag::SYNTHETIC),
        ("noise", tag::NOISE),
        ("fit_anchor", tag::FIT_ANCHOR),
        ("fit_gen", tag::FIT_GEN),
    ] {
        out.seed(role, seed::derive(m, &[t]));
    }
    out.diagnostics = json!({
        "anchor_rows": art.anchor.n(),
        "synthetic_rows": art.synthetic.n(),
        "fit_components": g.n_model(),
        "anchor_fit": fit_summary(&art.anchor_fit),
        "gen_fit": fit_summary(&art.gen_fit),
    });
    println!(
        "anchor rows {}, synthetic rows {}; anchor fit ll {} ({}), synthetic fit ll {} ({})",
        art.anchor.n(),
        art.synthetic.n(),
        art.anchor_fit.final_log_likelihood,
        if art.anchor_fit.converged { "converged" } else { "not converged" },
        art.gen_fit.final_log_likelihood,
        if art.gen_fit.converged { "converged" } else { "not converged" },
    );
    Ok(EXIT_OK)
}

fn fit(cfg: &RunConfig, data_path: &Path, out: &mut Outputs) -> Result<i32> {
    let data = io::read_dataset(data_path)?;
    let fitted = fit_gmm(&data, &cfg.fit)?;
    out.file(format!("{}.model", file_stem(data_path)), model_bytes(&fitted.model));
    out.seed("fit", cfg.fit.seed);
    out.diagnostics = json!({
        "rows": data.n(),
        "fit": fit_summary(&fitted),
        "log_likelihood_trace": fitted.log_likelihood_trace,
        "reseeded_at": fitted.reseeded_at,
    });
    println!("log_likelihood\t{}", fitted.final_log_likelihood);
    println!("converged\t{}", fitted.converged);
    println!("n_iter\t{}", fitted.n_iter);
    println!("restart_index\t{}", fitted.restart_index);
    Ok(EXIT_OK)
}

fn kl_gap(cfg: &RunConfig, out: &mut Outputs) -> Result<i32> {
    let settings = cfg.sweep.clone().unwrap_or_default();
    let spec = settings.to_spec(&cfg.generation, &cfg.fit);
    let total = spec.values.len() * spec.rounds;
    let done = AtomicUsize::new(0);
    let result = run_kl_gap_sweep_with(&spec, |r| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!(
            "[{k}/{total}] {}={} round {}: kl_anchor {:.6} kl_gen {:.6} gap {:.6}",
            spec.variable.as_str(),
            r.value,
            r.round,
            r.kl_anchor,
            r.kl_gen,
            r.kl_gap
        );
    })?;
    let var = spec.variable.as_str();
    out.file(format!("kl_gap_{var}_raw.csv"), io::sweep_raw_csv(&result));
    out.file(format!("kl_gap_{var}.csv"), io::sweep_aggregate_csv(&result));

    out.seed("master", cfg.generation.master_seed);
    for v in &result.per_value {
        for r in &v.rounds {
            out.seed(format!("{var}={:02}/round={:03}", r.value, r.round), r.seed);
        }
    }
    let unconverged = result
        .per_value
        .iter()
        .flat_map(|v| &v.rounds)
        .filter(|r| !(r.anchor_fit_converged && r.gen_fit_converged))
        .count();
    out.diagnostics = json!({ "rounds_with_unconverged_fit": unconverged });
    out.notes.push(
        "the two KL terms of a gap use independent evaluation draws (seed tags kl_anchor and kl_gen)".into(),
    );
    for v in &result.per_value {
        println!("{var}={}\tmean_gap {}\tstd_gap {}", v.value, fmt_f64(v.mean_gap), fmt_f64(v.std_gap));
    }
    Ok(EXIT_OK)
}

fn estimate(
    kind: EstimateKind,
    inputs: &[PathBuf],
    budget: usize,
    tv_method: Option<TvMethodArg>,
    seed: u64,
    out: &mut Outputs,
) -> Result<i32> {
    out.seed("estimate", seed);
    let name = format!("estimate_{}.json", kind.as_str());
    if kind == EstimateKind::Hsic {
        let x = io::read_dataset(&inputs[0])?;
        let y = io::read_dataset(&inputs[1])?;
        let n = x.n().min(y.n());
        let head = |d: &DatasetMatrix| {
            DatasetMatrix::new(d.as_slice()[..n * d.dim()].to_vec(), d.dim(), d.provenance, d.seed, None)
        };
        let r = estimators::hsic(&head(&x)?, &head(&y)?, budget, seed)?;
        println!(
            "{}\t{}",
            fmt_f64(r.statistic),
            r.permutation_p.map_or_else(|| "nan".to_string(), fmt_f64)
        );
        out.json(name, &r)?;
        return Ok(EXIT_OK);
    }
    let p = io::read_model(&inputs[0])?;
    let est = match kind {
        EstimateKind::Entropy => estimators::mc_entropy(&p, budget, seed)?,
        EstimateKind::Kl => estimators::mc_kl(&p, &io::read_model(&inputs[1])?, budget, seed)?,
        EstimateKind::DeltaH => estimators::delta_h(&p, &io::read_model(&inputs[1])?, budget, seed)?,
        EstimateKind::Tv => {
            let method = match tv_method {
                Some(TvMethodArg::Importance) => TvMethod::Importance,
                _ => TvMethod::Grid,
            };
            estimators::tv_distance(&p, &io::read_model(&inputs[1])?, method, budget, seed)?
        }
        EstimateKind::Hsic => unreachable!("handled above"),
    };
    println!("{}\t{}", fmt_f64(est.value), fmt_f64(est.std_error));
    out.json(name, &est)?;
    Ok(EXIT_OK)
}

fn verify(trials: usize, seed: u64, rc: &RiskTrialConfig, out: &mut Outputs) -> Result<i32> {
    let report = verify_risk_bound_with(trials, seed, rc)?;
    out.seed("verify", seed);
    let mut csv = String::from("trial,atoms,true_risk,empirical_risk,synthetic_risk,tv_task,tv_gen,lhs,rhs,holds\n");
    for (i, t) in report.trials.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            t.atoms,
            fmt_f64(t.true_risk),
            fmt_f64(t.empirical_risk),
            fmt_f64(t.synthetic_risk),
            fmt_f64(t.tv_task),
            fmt_f64(t.tv_gen),
            fmt_f64(t.lhs),
            fmt_f64(t.rhs),
            t.holds
        ));
    }
    out.file("verify_trials.csv", csv.into_bytes());
    let summary = json!({
        "seed": report.seed,
        "config": report.config,
        "trials": trials,
        "violations": report.violations,
        "slack": report.slack,
    });
    out.json("verify.json", &summary)?;
    println!(
        "trials {trials}\tviolations {}\tslack min {} mean {} max {}",
        report.violations,
        fmt_f64(report.slack.min),
        fmt_f64(report.slack.mean),
        fmt_f64(report.slack.max)
    );
    if report.all_hold() {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: risk bound violated in {} trial(s)", report.violations);
        Ok(EXIT_RUNTIME)
    }
}

fn bounds(cfg: &RunConfig, run_dir: Option<&Path>, seed: u64, out: &mut Outputs) -> Result<i32> {
    let params = cfg.bound_params.clone().unwrap_or_default();
    let ledger = match run_dir {
        None => build_bound_ledger(None, &params, &cfg.budgets, seed)?,
        Some(dir) => {
            let run = Manifest::read(&dir.join("simulate.manifest.json"))
                .map_err(|e| e.context("reading the run's simulate manifest"))?;
            let model = |name: &str| io::read_model(&dir.join(name));
            let gt = model("gt.model")?;
            let model_m = model("model_m.model")?;
            let anchor_model = model("anchor_fit.model")?;
            let gen_model = model("gen_fit.model")?;
            let anchor = io::read_dataset(&dir.join("anchor.csv"))?;
            let synthetic = io::read_dataset(&dir.join("synthetic.csv"))?;
            let generated = generated_distribution(&model_m, &run.config.generation)?;
            let outputs = RunOutputs {
                gt: &gt,
                model_m: &model_m,
                generated: &generated,
                anchor_model: &anchor_model,
                gen_model: &gen_model,
                anchor: &anchor,
                synthetic: &synthetic,
            };
            out.seed("measure", seed);
            build_bound_ledger(Some(&outputs), &params, &cfg.budgets, seed)?
        }
    };
    out.json("bounds.json", &ledger)?;
    let text = serde_json::to_string_pretty(&ledger).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(EXIT_OK)
}
