//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails.
//!
//!     cargo test --release -p rblab --test acceptance
//!     cargo test --release -p rblab --test acceptance -- hsic pushforward
//!
//! Free arguments select criteria whose key contains one of them.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use rblab::experiments::{
    anchor_post_training_bound, ggmi_upper_bound, mi_generalization_bound, run_kl_gap_sweep, spearman,
    synthetic_mi_bound, synthetic_post_training_bound, verify_risk_bound, BoundParams, SweepSpec, SweptVariable,
};
use rblab::{
    fit_gmm, hsic, mc_entropy, mc_kl, pushforward_log_pdf, tv_distance, AffineTransform, DatasetMatrix, FitConfig,
    GaussianComponent, Gmm, InitMethod, Provenance, TvMethod,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, &str, Check); 8] = [
        ("trend", "KL-gap trends (J up, K down, L down; 30 rounds)", kl_gap_trends),
        ("calibration", "estimator calibration (entropy, KL, TV)", estimator_calibration),
        ("risk", "synthetic-data risk bound over 10^4 exact trials", risk_bound),
        ("em", "EM monotonicity and single-component moments", em_monotonicity),
        ("hsic", "HSIC oracle, null uniformity, dependence detection", hsic_correctness),
        ("pushforward", "affine pushforward log-density", pushforward),
        ("replay", "manifest replay is bit-exact for any --threads", replay_reproducibility),
        ("bounds", "bound calculators: worked values and monotonicity", bound_calculators),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (key, name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| key.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = check();
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- trends

/// Sweep budget for one trend run.
const TREND_ROUNDS: usize = 30;
const TREND_BUDGET_SECS: f64 = 600.0;

fn kl_gap_trends() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (variable, want, bound) in [
        (SweptVariable::J, "rho >= 0.7", 0.7),
        (SweptVariable::K, "rho <= -0.7", -0.7),
        (SweptVariable::L, "rho <= -0.5", -0.5),
    ] {
        let spec = SweepSpec {
            variable,
            rounds: TREND_ROUNDS,
            ..SweepSpec::default()
        };
        let t = Instant::now();
        let result = run_kl_gap_sweep(&spec).expect("sweep runs");
        let secs = t.elapsed().as_secs_f64();
        let xs: Vec<f64> = result.values().iter().map(|&v| v as f64).collect();
        let rho = spearman(&xs, &result.means());
        let ok_rho = if bound > 0.0 { rho >= bound } else { rho <= bound };
        let ok_time = secs <= TREND_BUDGET_SECS;
        pass &= ok_rho && ok_time;
        let means: Vec<String> = result.means().iter().map(|m| format!("{m:.3}")).collect();
        println!(
            "    {}: rho = {rho:+.3} ({want}), {secs:.0}s on {} thread(s); mean gaps {}",
            variable.as_str(),
            rayon::current_num_threads(),
            means.join(" ")
        );
        parts.push(format!(
            "{} rho {rho:+.3}{}{}",
            variable.as_str(),
            if ok_rho { "" } else { " (wrong trend)" },
            if ok_time { String::new() } else { format!(" (over {TREND_BUDGET_SECS:.0}s)") }
        ));
    }
    outcome(pass, parts.join(", "))
}

// ----------------------------------------------------------- calibration

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

/// Closed-form KL between two bivariate normals, written out by hand.
fn kl_normal_2d(m0: [f64; 2], s0: [[f64; 2]; 2], m1: [f64; 2], s1: [[f64; 2]; 2]) -> f64 {
    let p = inv2(&s1);
    let trace = p[0][0] * s0[0][0] + p[0][1] * s0[1][0] + p[1][0] * s0[0][1] + p[1][1] * s0[1][1];
    let d = [m1[0] - m0[0], m1[1] - m0[1]];
    let maha = d[0] * (p[0][0] * d[0] + p[0][1] * d[1]) + d[1] * (p[1][0] * d[0] + p[1][1] * d[1]);
    0.5 * (trace + maha - 2.0 + (det2(&s1) / det2(&s0)).ln())
}

fn random_spd(rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    let a: [[f64; 2]; 2] = [
        [rng.sample(StandardNormal), rng.sample(StandardNormal)],
        [rng.sample(StandardNormal), rng.sample(StandardNormal)],
    ];
    let mut s = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            s[i][j] = (a[i][0] * a[j][0] + a[i][1] * a[j][1]) / 2.0 + if i == j { 0.5 } else { 0.0 };
        }
    }
    s
}

fn gaussian(m: [f64; 2], s: [[f64; 2]; 2]) -> Gmm {
    Gmm::single(
        DVector::from_column_slice(&m),
        DMatrix::from_row_slice(2, 2, &[s[0][0], s[0][1], s[1][0], s[1][1]]),
    )
    .unwrap()
}

fn estimator_calibration() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let target = (2.0 * PI * std::f64::consts::E).ln();
    let h = mc_entropy(&Gmm::standard_normal(2).unwrap(), 100_000, 11).unwrap();
    let ok = h.within(target, 3.0);
    pass &= ok;
    notes.push(format!(
        "entropy {:.5} vs {target:.6} ({:.2} SE)",
        h.value,
        (h.value - target) / h.std_error
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut kl_ok = 0;
    for i in 0..10 {
        let m0 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let m1 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let (s0, s1) = (random_spd(&mut rng), random_spd(&mut rng));
        let exact = kl_normal_2d(m0, s0, m1, s1);
        let est = mc_kl(&gaussian(m0, s0), &gaussian(m1, s1), 100_000, 100 + i).unwrap();
        let z = (est.value - exact).abs() / est.std_error;
        worst = worst.max(z);
        kl_ok += usize::from(z <= 3.0);
    }
    pass &= kl_ok == 10;
    notes.push(format!("KL {kl_ok}/10 pairs within 3 SE (worst {worst:.2} SE)"));

    let tv_exact = 2.0 * Normal::standard().cdf(0.5) - 1.0;
    let p = Gmm::single(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let q = Gmm::single(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let tv = tv_distance(&p, &q, TvMethod::Grid, 4000, 0).unwrap();
    let ok = (tv.value - tv_exact).abs() <= 1e-3;
    pass &= ok;
    notes.push(format!("TV {:.6} vs {tv_exact:.6}", tv.value));
    outcome(pass, notes.join("; "))
}

// ------------------------------------------------------------ risk bound

fn risk_bound() -> Outcome {
    let t = Instant::now();
    let report = verify_risk_bound(10_000, 31).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = report.all_hold() && report.trials.len() == 10_000 && secs <= 60.0;
    outcome(
        pass,
        format!(
            "{} violations in {} trials, min slack {:.3e}, {secs:.2}s",
            report.violations,
            report.trials.len(),
            report.slack.min
        ),
    )
}

// -------------------------------------------------------------------- EM

fn random_problem(seed: u64) -> (DatasetMatrix, FitConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=3);
    let true_k = rng.random_range(1..=4);
    let comps = (0..true_k)
        .map(|_| {
            let mean = DVector::from_fn(d, |_, _| rng.random_range(-4.0..4.0));
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cov = (&a * a.transpose() + DMatrix::identity(d, d) * 0.3) / d as f64;
            GaussianComponent::new_symmetrized(1.0, mean, cov).unwrap()
        })
        .collect();
    let data = Gmm::normalized(comps).unwrap().sample(rng.random_range(150..400), seed).unwrap();
    let config = FitConfig {
        n_components: rng.random_range(1..=5),
        reg_covar: 1e-6,
        rel_tol: 1e-10,
        max_iter: 200,
        n_restarts: 1,
        init_method: if seed.is_multiple_of(2) { InitMethod::KmeansPp } else { InitMethod::RandomPoints },
        seed,
    };
    (data, config)
}

fn em_monotonicity() -> Outcome {
    let mut worst_drop: f64 = 0.0;
    let mut checked = 0usize;
    let mut failures = 0usize;
    for seed in 0..100u64 {
        let (data, config) = random_problem(seed);
        let fit = match fit_gmm(&data, &config) {
            Ok(f) => f,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        for (t, w) in fit.log_likelihood_trace.windows(2).enumerate() {
            // re-seeding an empty component is not an EM step
            if fit.reseeded_at.contains(&(t + 1)) {
                continue;
            }
            worst_drop = worst_drop.max(w[0] - w[1]);
            checked += 1;
        }
    }

    // single component: closed-form moments
    let (data, _) = random_problem(7);
    let reg = 1e-6;
    let fit = fit_gmm(
        &data,
        &FitConfig {
            n_components: 1,
            reg_covar: reg,
            ..FitConfig::default()
        },
    )
    .unwrap();
    let n = data.n() as f64;
    let d = data.dim();
    let mean = DVector::from_fn(d, |j, _| data.rows().map(|r| r[j]).sum::<f64>() / n);
    let cov = DMatrix::from_fn(d, d, |a, b| {
        data.rows().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n + if a == b { reg } else { 0.0 }
    });
    let c = &fit.model.components()[0];
    let moment_err = (c.mean() - &mean).amax().max((c.covariance() - &cov).amax());

    let pass = failures == 0 && worst_drop <= 1e-9 && moment_err <= 1e-10;
    outcome(
        pass,
        format!(
            "{checked} EM steps over 100 problems ({failures} fit errors), largest decrease {worst_drop:.2e}; single-component moment error {moment_err:.2e}"
        ),
    )
}

// ------------------------------------------------------------------ HSIC

fn matrix(rows: &[Vec<f64>]) -> DatasetMatrix {
    DatasetMatrix::from_rows(rows, Provenance::Anchor, 0).unwrap()
}

fn normal_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn median_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            if s > 0.0 {
                d.push(s.sqrt());
            }
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if !m.is_multiple_of(2) {
        d[m / 2]
    } else {
        (d[m / 2 - 1] + d[m / 2]) / 2.0
    }
}

fn kernel(rows: &[Vec<f64>], bw: f64) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| {
                    let s: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
                    (-s / (2.0 * bw * bw)).exp()
                })
                .collect()
        })
        .collect()
}

/// Biased HSIC from its expanded definition, by direct summation.
#[allow(clippy::needless_range_loop)]
fn hsic_brute(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let k = kernel(x, median_distance(x));
    let l = kernel(y, median_distance(y));
    let nf = n as f64;
    let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            t1 += k[i][j] * l[i][j];
            for q in 0..n {
                t3 += k[i][j] * l[i][q];
                for r in 0..n {
                    t2 += k[i][j] * l[q][r];
                }
            }
        }
    }
    t1 / (nf * nf) + t2 / nf.powi(4) - 2.0 * t3 / nf.powi(3)
}

/// Asymptotic Kolmogorov-Smirnov p-value for a sample against U(0,1).
fn ks_uniform_p(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (d, p.clamp(0.0, 1.0))
}

fn hsic_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = normal_rows(&mut rng, 8, 2);
    let y = normal_rows(&mut rng, 8, 1);
    let lib = hsic(&matrix(&x), &matrix(&y), 0, 0).unwrap().statistic;
    let brute = hsic_brute(&x, &y);
    let oracle_err = (lib - brute).abs();

    let p_values: Vec<f64> = (0..200u64)
        .map(|t| {
            let mut rx = ChaCha8Rng::seed_from_u64(10_000 + t);
            let mut ry = ChaCha8Rng::seed_from_u64(20_000 + t);
            let x = matrix(&normal_rows(&mut rx, 40, 2));
            let y = matrix(&normal_rows(&mut ry, 40, 1));
            hsic(&x, &y, 199, t).unwrap().permutation_p.unwrap()
        })
        .collect();
    let (ks_d, ks_p) = ks_uniform_p(p_values);

    let z = matrix(&normal_rows(&mut rng, 100, 2));
    let dep = hsic(&z, &z, 199, 5).unwrap();
    let dep_p = dep.permutation_p.unwrap();

    let pass = oracle_err <= 1e-10 && ks_p > 0.01 && dep_p <= 0.01;
    outcome(
        pass,
        format!(
            "oracle diff {oracle_err:.1e}; null p-values KS D = {ks_d:.3} (p = {ks_p:.3}); y = x permutation p = {dep_p:.4}"
        ),
    )
}

// ----------------------------------------------------------- pushforward

/// Log-density of `N(mean, cov)` via an explicit inverse and determinant.
fn normal_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = cov.clone().try_inverse().unwrap();
    let diff = x - mean;
    let maha = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (maha + cov.determinant().ln() + d * (2.0 * PI).ln())
}

fn pushforward() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = 2;
    let params: Vec<(f64, DVector<f64>, DMatrix<f64>)> = [0.2, 0.5, 0.3]
        .iter()
        .map(|&w| {
            let mean = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
            let cov = (&cov + cov.transpose()) * 0.5;
            (w, mean, cov)
        })
        .collect();
    let base = Gmm::new(
        params
            .iter()
            .map(|(w, m, c)| GaussianComponent::new(*w, m.clone(), c.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.3, -0.4, 0.7, 0.9]);
    let b = DVector::from_column_slice(&[0.5, -2.0]);
    let t = AffineTransform::new(a.clone(), b.clone()).unwrap();

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-8.0..8.0));
        // mixture of the component-wise images N(A mu + b, A S A^T)
        let terms: Vec<f64> = params
            .iter()
            .map(|(w, m, c)| w.ln() + normal_log_pdf(&x, &(&a * m + &b), &(&a * c * a.transpose())))
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle = top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        let got = pushforward_log_pdf(&base, &t, x.as_slice()).unwrap();
        worst = worst.max((got - oracle).abs());
    }
    outcome(worst <= 1e-10, format!("max |error| {worst:.2e} over 1000 points"))
}

// ---------------------------------------------------------------- replay

fn rblab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rblab"))
        .args(args)
        .env_remove("RBLAB_OUTPUT")
        .output()
        .expect("binary runs")
}

fn manifests(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    v.sort();
    v
}

fn replay_reproducibility() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    std::fs::create_dir(&first).unwrap();
    let out = first.to_str().unwrap();
    let gt = first.join("gt.model");
    let m = first.join("model_m.model");
    let anchor = first.join("anchor.csv");
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate", "--seed", "5"],
        vec!["kl-gap", "--variable", "L", "--values", "2..4", "--rounds", "2", "--resamples", "3", "--seed", "2"],
        vec!["fit", anchor.to_str().unwrap(), "-k", "3", "--seed", "4"],
        vec!["estimate", "kl", gt.to_str().unwrap(), m.to_str().unwrap(), "--budget", "30000", "--seed", "1"],
        vec!["estimate", "tv", gt.to_str().unwrap(), m.to_str().unwrap(), "--tv-method", "importance", "--budget", "20000"],
        vec!["estimate", "hsic", anchor.to_str().unwrap(), anchor.to_str().unwrap(), "--budget", "50"],
        vec!["verify", "--trials", "500", "--seed", "3"],
        vec!["bounds", "--run-dir", out, "--seed", "6"],
    ];
    for args in &runs {
        let mut full = vec!["--output", out, "--threads", "1"];
        full.extend(args);
        let o = rblab(&full);
        if !o.status.success() {
            return outcome(false, format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }

    let recorded = manifests(&first);
    let mut compared = 0;
    for threads in ["2", "4"] {
        let dir = root.path().join(format!("t{threads}"));
        std::fs::create_dir(&dir).unwrap();
        for manifest in &recorded {
            let o = rblab(&[
                "--output",
                dir.to_str().unwrap(),
                "--threads",
                threads,
                "replay",
                manifest.to_str().unwrap(),
            ]);
            if !o.status.success() {
                return outcome(false, format!("replay of {} failed", manifest.display()));
            }
            let text = std::fs::read_to_string(manifest).unwrap();
            let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
            for name in parsed["outputs"].as_array().unwrap() {
                let name = name.as_str().unwrap();
                let a = std::fs::read(first.join(name)).unwrap();
                let b = std::fs::read(dir.join(name)).unwrap();
                if a != b {
                    return outcome(false, format!("{name} differs with --threads {threads}"));
                }
                compared += 1;
            }
        }
    }

    // in-process: the same sweep under thread pools of different sizes
    let spec = SweepSpec {
        variable: SweptVariable::K,
        values: vec![1, 3],
        rounds: 3,
        resamples_per_round: 2,
        ..SweepSpec::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_kl_gap_sweep(&spec).unwrap())
    };
    let same_pool = run(1) == run(3);

    outcome(
        same_pool && compared > 0,
        format!(
            "{} manifests replayed under 2 and 4 threads, {compared} files byte-identical; in-process sweep identical across pools: {same_pool}",
            recorded.len()
        ),
    )
}

// ---------------------------------------------------------------- bounds

fn worked() -> BoundParams {
    BoundParams {
        sigma: 1.0,
        eta: 0.5,
        depth: 2,
        n_samples: 100,
        m_samples: 25,
        ..BoundParams::default()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn random_params(rng: &mut ChaCha8Rng) -> BoundParams {
    BoundParams {
        delta_i: rng.random_range(-5.0..5.0),
        b_syn: rng.random_range(0.0..5.0),
        h_e_m: rng.random_range(0.0..5.0),
        delta_eps_p: rng.random_range(-2.0..2.0),
        sigma: rng.random_range(0.1..3.0),
        eta: rng.random_range(0.01..0.99),
        depth: rng.random_range(1..20),
        n_samples: rng.random_range(1..10_000),
        m_samples: rng.random_range(2..10_000),
        loss_bound: rng.random_range(0.0..10.0),
        alpha: rng.random_range(0.0..3.0),
        eps_w_p: rng.random_range(-1.0..1.0),
        lambda_eff: rng.random_range(1.0..4.0),
        h_anchor_given_w: rng.random_range(0.0..5.0),
        h_gen_given_w: rng.random_range(0.0..5.0),
        h_anchor: rng.random_range(-5.0..5.0),
        h_gen: rng.random_range(-5.0..5.0),
        mi_anchor_w: rng.random_range(0.0..5.0),
        tv_task: rng.random_range(0.0..0.5),
        tv_gen: rng.random_range(0.0..0.5),
    }
}

fn bound_calculators() -> Outcome {
    let p = worked();
    let mut exact = vec![mi_generalization_bound(&p, 2.0).unwrap() == 0.1];
    exact.push(
        synthetic_mi_bound(&BoundParams {
            delta_i: 2.0,
            b_syn: 1.0,
            h_e_m: 0.5,
            delta_eps_p: 0.25,
            ..p.clone()
        }) == -0.25,
    );
    exact.push(
        synthetic_post_training_bound(&BoundParams {
            loss_bound: 1.0,
            tv_task: 0.1,
            tv_gen: 0.2,
            b_syn: 2.0,
            ..p.clone()
        })
        .unwrap()
        .value
            == 0.4,
    );
    exact.push(
        ggmi_upper_bound(&BoundParams {
            delta_i: 3.0,
            alpha: 1.0,
            h_anchor_given_w: 0.5,
            h_anchor: 1.0,
            h_gen: 0.0,
            h_gen_given_w: 0.25,
            eps_w_p: 0.0,
            ..p.clone()
        })
        .unwrap()
            == 4.25,
    );
    exact.push(
        anchor_post_training_bound(&BoundParams {
            mi_anchor_w: 2.0,
            ..p.clone()
        })
        .unwrap()
            == 0.2,
    );
    let zero = BoundParams::default();
    exact.push(mi_generalization_bound(&zero, 0.0).unwrap() == 0.0);
    exact.push(synthetic_mi_bound(&zero) == 0.0);
    exact.push(synthetic_post_training_bound(&zero).unwrap().value == 0.0);
    exact.push(ggmi_upper_bound(&zero).unwrap() == 0.0);
    exact.push(anchor_post_training_bound(&zero).unwrap() == 0.0);
    let exact_ok = exact.iter().filter(|&&b| b).count();

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut violations = Vec::new();
    for draw in 0..1000 {
        let q = random_params(&mut rng);
        let mi = rng.random_range(0.01..5.0);
        let mut check = |name: &str, ok: bool| {
            if !ok {
                violations.push(format!("{name} (draw {draw})"));
            }
        };
        let g = |q: &BoundParams, mi| mi_generalization_bound(q, mi).unwrap();
        check("mi bound repeatable", g(&q, mi).to_bits() == g(&q, mi).to_bits());
        check("mi bound zero at zero information", g(&q, 0.0) == 0.0);
        check(
            "mi bound shrinks with depth",
            g(&BoundParams { depth: 50, ..q.clone() }, mi) < g(&BoundParams { depth: 5, ..q.clone() }, mi),
        );
        check(
            "mi bracket drops by 1 per unit delta_i",
            close(
                synthetic_mi_bound(&BoundParams { delta_i: q.delta_i + 1.0, ..q.clone() }),
                synthetic_mi_bound(&q) - 1.0,
            ),
        );
        let post = |q: &BoundParams| synthetic_post_training_bound(q).unwrap();
        let base = post(&q);
        check("post-training repeatable", base == post(&q));
        check(
            "post-training >= C (tv_task + tv_gen)",
            base.value >= q.loss_bound * q.tv_task + q.loss_bound * q.tv_gen
                && base.value >= base.divergence_term,
        );
        let dt = rng.random_range(0.0..0.5);
        let up_task = post(&BoundParams { tv_task: q.tv_task + dt, ..q.clone() });
        let up_gen = post(&BoundParams { tv_gen: q.tv_gen + dt, ..q.clone() });
        check("post-training nondecreasing in tv_task", up_task.value >= base.value);
        check("post-training nondecreasing in tv_gen", up_gen.value >= base.value);
        check("post-training slope C in tv_task", close(up_task.value - base.value, q.loss_bound * dt));
        check("post-training slope C in tv_gen", close(up_gen.value - base.value, q.loss_bound * dt));
        check("clamp flag matches bracket sign", base.bracket_clamped == (synthetic_mi_bound(&q) < 0.0));
        let ggmi = |q: &BoundParams| ggmi_upper_bound(q).unwrap();
        check(
            "ggmi drops by 2 per unit h_gen",
            close(ggmi(&BoundParams { h_gen: q.h_gen + 1.0, ..q.clone() }), ggmi(&q) - 2.0),
        );
        let anchor = |q: &BoundParams| anchor_post_training_bound(q).unwrap();
        let even = BoundParams { m_samples: q.m_samples * 2, ..q.clone() };
        check(
            "anchor bound scales by sqrt 2 when m halves",
            close(anchor(&q), anchor(&even) * 2f64.sqrt()),
        );
        check(
            "anchor bound zero at zero information",
            anchor(&BoundParams { mi_anchor_w: 0.0, ..q.clone() }) == 0.0,
        );
    }
    violations.truncate(5);
    outcome(
        exact_ok == exact.len() && violations.is_empty(),
        format!(
            "{exact_ok}/{} worked values exact; monotonicity violations over 1000 draws: {}",
            exact.len(),
            if violations.is_empty() { "none".to_string() } else { violations.join(", ") }
        ),
    )
}
