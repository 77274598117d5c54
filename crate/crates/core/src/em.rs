//! Expectation-maximization for full-covariance Gaussian mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{DatasetMatrix, GaussianComponent, Gmm};
use crate::seed::{self, tag, Rng};

/// A component whose total responsibility falls below this is re-seeded.
const EMPTY_MASS: f64 = 1e-10;
const LLOYD_ITERS: usize = 20;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    KmeansPp,
    RandomPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub n_components: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub reg_covar: f64,
    pub n_restarts: usize,
    pub init_method: InitMethod,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            max_iter: 500,
            rel_tol: 1e-7,
            reg_covar: 1e-6,
            n_restarts: 4,
            init_method: InitMethod::KmeansPp,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidParameter("n_components must be >= 1".into()));
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::InvalidParameter(
                "max_iter and n_restarts must be >= 1".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be > 0".into()));
        }
        if !(self.reg_covar >= 0.0) {
            return Err(Error::InvalidParameter("reg_covar must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedGmm {
    pub model: Gmm,
    /// Mean per-sample log-likelihood of `model` on the training rows.
    pub final_log_likelihood: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Mean log-likelihood before each M-step, ending with the final value.
    pub log_likelihood_trace: Vec<f64>,
    /// Iterations whose M-step re-seeded an empty component.
    pub reseeded_at: Vec<usize>,
}

/// Fits `config.n_components` Gaussians to `data`, keeping the best of
/// `config.n_restarts` independently initialized EM runs.
pub fn fit_gmm(data: &DatasetMatrix, config: &FitConfig) -> Result<FittedGmm> {
    config.validate()?;
    if data.n() < config.n_components {
        return Err(Error::InsufficientSamples {
            n: data.n(),
            k: config.n_components,
        });
    }
    let mut best: Option<FittedGmm> = None;
    let mut first_err = None;
    for restart in 0..config.n_restarts {
        let mut rng = seed::rng_at(config.seed, &[tag::RESTART, restart as u64]);
        match run_em(data, config, &mut rng) {
            Ok(mut fit) => {
                fit.restart_index = restart;
                let better = match &best {
                    None => true,
                    Some(b) => fit.final_log_likelihood > b.final_log_likelihood + TIE_TOL,
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart ran"))
}

/// Posterior component memberships, `n x K`, computed in log space.
pub fn responsibilities(model: &Gmm, data: &DatasetMatrix) -> Result<DMatrix<f64>> {
    if model.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    let k = model.n_components();
    let mut resp = vec![0.0; data.n() * k];
    e_step(model, data, &mut resp, None);
    Ok(DMatrix::from_row_slice(data.n(), k, &resp))
}

/// Fills `resp` (row-major `n x K`) and returns the mean log-likelihood.
fn e_step(model: &Gmm, data: &DatasetMatrix, resp: &mut [f64], mut point_ll: Option<&mut [f64]>) -> f64 {
    let k = model.n_components();
    let mut total = 0.0;
    for (i, (x, r)) in data.rows().zip(resp.chunks_exact_mut(k)).enumerate() {
        model.joint_log_densities(x, r);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in r.iter_mut() {
            *v *= inv;
        }
        let lse = max + sum.ln();
        if let Some(p) = point_ll.as_deref_mut() {
            p[i] = lse;
        }
        total += lse;
    }
    total / data.n() as f64
}

fn run_em(data: &DatasetMatrix, config: &FitConfig, rng: &mut Rng) -> Result<FittedGmm> {
    let (n, k) = (data.n(), config.n_components);
    let mut resp = initial_assignment(data, config, rng);
    let mut point_ll = vec![0.0; n];
    // Initial hard assignment has no density ordering; reseeding falls back to row order.
    let mut reseeded_at = Vec::new();
    let (mut model, reseeded) = m_step(data, &resp, config.reg_covar, None)?;
    if reseeded {
        reseeded_at.push(0);
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    loop {
        let ll = e_step(&model, data, &mut resp, Some(&mut point_ll));
        if !ll.is_finite() {
            return Err(Error::DegenerateCovariance(0).context("non-finite log-likelihood"));
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ll - prev < config.rel_tol * prev.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if n_iter == config.max_iter {
            break;
        }
        let (next, reseeded) = m_step(data, &resp, config.reg_covar, Some(&point_ll))?;
        n_iter += 1;
        if reseeded {
            reseeded_at.push(n_iter);
        }
        model = next;
    }
    debug_assert_eq!(resp.len(), n * k);
    Ok(FittedGmm {
        model,
        final_log_likelihood: *trace.last().expect("at least one E-step"),
        n_iter,
        converged,
        restart_index: 0,
        log_likelihood_trace: trace,
        reseeded_at,
    })
}

/// Weighted maximum-likelihood update from responsibilities. Components with
/// negligible mass are moved onto the lowest-density rows.
fn m_step(
    data: &DatasetMatrix,
    resp: &[f64],
    reg_covar: f64,
    point_ll: Option<&[f64]>,
) -> Result<(Gmm, bool)> {
    let (n, d) = (data.n(), data.dim());
    let k = resp.len() / n;
    let mut mass = vec![0.0; k];
    for r in resp.chunks_exact(k) {
        for (m, v) in mass.iter_mut().zip(r) {
            *m += v;
        }
    }

    let empty: Vec<usize> = (0..k).filter(|&j| mass[j] < EMPTY_MASS).collect();
    let mut reseed_rows = Vec::new();
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(ll) = point_ll {
            order.sort_by(|&a, &b| ll[a].total_cmp(&ll[b]).then(a.cmp(&b)));
        }
        reseed_rows = order.into_iter().take(empty.len()).collect();
    }

    // flat k x d means and k x d x d covariances (lower triangle filled)
    let mut means = vec![0.0; k * d];
    for (x, r) in data.rows().zip(resp.chunks_exact(k)) {
        for (j, &w) in r.iter().enumerate() {
            if w != 0.0 {
                for (m, xi) in means[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *m += w * xi;
                }
            }
        }
    }
    for j in 0..k {
        let inv = 1.0 / mass[j].max(f64::MIN_POSITIVE);
        for m in &mut means[j * d..(j + 1) * d] {
            *m *= inv;
        }
    }
    let mut cov = vec![0.0; k * d * d];
    let mut diff = vec![0.0; d];
    for (x, r) in data.rows().zip(resp.chunks_exact(k)) {
        for (j, &w) in r.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for ((df, xi), m) in diff.iter_mut().zip(x).zip(&means[j * d..(j + 1) * d]) {
                *df = xi - m;
            }
            let c = &mut cov[j * d * d..(j + 1) * d * d];
            for a in 0..d {
                let wa = w * diff[a];
                for b in 0..=a {
                    c[a * d + b] += wa * diff[b];
                }
            }
        }
    }
    let mut means: Vec<DVector<f64>> = means.chunks_exact(d).map(DVector::from_column_slice).collect();
    let mut covs: Vec<DMatrix<f64>> = (0..k)
        .map(|j| {
            let c = &cov[j * d * d..(j + 1) * d * d];
            let inv = 1.0 / mass[j].max(f64::MIN_POSITIVE);
            DMatrix::from_fn(d, d, |a, b| {
                let v = if a >= b { c[a * d + b] } else { c[b * d + a] } * inv;
                if a == b {
                    v + reg_covar
                } else {
                    v
                }
            })
        })
        .collect();

    if !empty.is_empty() {
        let global = data.covariance() + DMatrix::identity(d, d) * reg_covar;
        for (&j, &row) in empty.iter().zip(&reseed_rows) {
            means[j] = DVector::from_column_slice(data.row(row));
            covs[j] = global.clone();
            mass[j] = 1.0;
        }
    }

    let total: f64 = mass.iter().sum();
    let components = (0..k)
        .map(|j| {
            GaussianComponent::new(mass[j] / total, means[j].clone(), covs[j].clone())
                .map_err(|_| Error::DegenerateCovariance(j))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Gmm::normalized(components)?, !empty.is_empty()))
}

/// Hard one-hot responsibilities from the configured initializer.
fn initial_assignment(data: &DatasetMatrix, config: &FitConfig, rng: &mut Rng) -> Vec<f64> {
    let k = config.n_components;
    let centers = match config.init_method {
        InitMethod::KmeansPp => lloyd(data, kmeans_pp_centers(data, k, rng)),
        InitMethod::RandomPoints => {
            rand::seq::index::sample(rng, data.n(), k)
                .into_iter()
                .map(|i| data.row(i).to_vec())
                .collect()
        }
    };
    let mut resp = vec![0.0; data.n() * k];
    for (i, x) in data.rows().enumerate() {
        resp[i * k + nearest(&centers, x).0] = 1.0;
    }
    resp
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sq_dist(c, x)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// D^2-weighted seeding.
fn kmeans_pp_centers(data: &DatasetMatrix, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = data.n();
    let mut centers = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = data.rows().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (di, x) in dist.iter_mut().zip(data.rows()) {
            *di = di.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(data: &DatasetMatrix, mut centers: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let (k, d) = (centers.len(), data.dim());
    let mut labels = vec![usize::MAX; data.n()];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for (l, x) in labels.iter_mut().zip(data.rows()) {
            let j = nearest(&centers, x).0;
            changed |= *l != j;
            *l = j;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&l, x) in labels.iter().zip(data.rows()) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            // keep the old center for clusters that lost every point
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    centers
}
