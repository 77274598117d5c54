//! Monte-Carlo and kernel estimators: KL divergence, differential entropy,
//! entropy difference, total variation and HSIC.
//!
//! Monte-Carlo loops are split into fixed-size chunks. Chunk `c` draws from its
//! own stream derived from `(seed, c)`, and chunk statistics are merged with a
//! fixed-shape pairwise reduction, so results are bit-identical for any number
//! of worker threads.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{DatasetMatrix, Gmm};
use crate::seed::{self, tag};

const CHUNK: usize = 4096;
const MIN_MC_SAMPLES: usize = 100;
/// Grid half-width in marginal standard deviations.
const GRID_SIGMAS: f64 = 8.0;

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Whether `target` lies within `k` standard errors of the estimate.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    pub permutation_p: Option<f64>,
    pub n_permutations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvMethod {
    Grid,
    Importance,
}

/// Running mean and centered second moment of one chunk.
#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        count: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0.0 {
            return b;
        }
        if b.count == 0.0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        Moments {
            count,
            mean: a.mean + delta * b.count / count,
            m2: a.m2 + b.m2 + delta * delta * a.count * b.count / count,
        }
    }
}

fn pairwise_merge(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::EMPTY,
        1 => parts[0],
        n => Moments::merge(pairwise_merge(&parts[..n / 2]), pairwise_merge(&parts[n / 2..])),
    }
}

/// Mean and standard error of `f(x)` for `x ~ p`, chunked and seeded.
fn mc_mean<F>(p: &Gmm, n: usize, seed: u64, f: F) -> McEstimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut rng = seed::rng_at(seed, &[tag::CHUNK, c as u64]);
            let mut x = vec![0.0; p.dim()];
            let mut m = Moments::EMPTY;
            for _ in 0..len {
                p.draw_into(&mut rng, &mut x);
                m.push(f(&x));
            }
            m
        })
        .collect();
    let m = pairwise_merge(&parts);
    let var = if n > 1 { m.m2 / (n as f64 - 1.0) } else { 0.0 };
    McEstimate {
        value: m.mean,
        std_error: (var / n as f64).sqrt(),
        n_samples: n,
        seed,
    }
}

fn check_budget(n: usize) -> Result<()> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo budget {n} below minimum {MIN_MC_SAMPLES}"
        )));
    }
    Ok(())
}

fn check_same_dim(p: &Gmm, q: &Gmm) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(())
}

/// `KL(p || q)` as the sample mean of `log p(x) - log q(x)`, `x ~ p`.
pub fn mc_kl(p: &Gmm, q: &Gmm, n: usize, seed: u64) -> Result<McEstimate> {
    check_same_dim(p, q)?;
    check_budget(n)?;
    Ok(mc_mean(p, n, seed, |x| p.log_pdf_unchecked(x) - q.log_pdf_unchecked(x)))
}

/// Differential entropy `-E_p[log p(x)]` in nats.
pub fn mc_entropy(p: &Gmm, n: usize, seed: u64) -> Result<McEstimate> {
    check_budget(n)?;
    Ok(mc_mean(p, n, seed, |x| -p.log_pdf_unchecked(x)))
}

/// `H(anchor) - H(gen)` from two independent entropy estimates.
pub fn delta_h(anchor_model: &Gmm, gen_model: &Gmm, n: usize, seed: u64) -> Result<McEstimate> {
    check_same_dim(anchor_model, gen_model)?;
    let ha = mc_entropy(anchor_model, n, seed::derive(seed, &[0]))?;
    let hg = mc_entropy(gen_model, n, seed::derive(seed, &[1]))?;
    Ok(McEstimate {
        value: ha.value - hg.value,
        std_error: ha.std_error.hypot(hg.std_error),
        n_samples: n,
        seed,
    })
}

/// Total-variation distance `0.5 * integral |p - q|`.
///
/// `Grid` integrates with the midpoint rule on `budget` cells per axis over a
/// box covering +-8 marginal standard deviations of every component (d <= 2).
/// `Importance` averages `0.5 |1 - q(x)/p(x)|` over `budget` draws from `p`.
pub fn tv_distance(p: &Gmm, q: &Gmm, method: TvMethod, budget: usize, seed: u64) -> Result<McEstimate> {
    check_same_dim(p, q)?;
    match method {
        TvMethod::Grid => tv_grid(p, q, budget, seed),
        TvMethod::Importance => {
            check_budget(budget)?;
            Ok(mc_mean(p, budget, seed, |x| {
                0.5 * (1.0 - (q.log_pdf_unchecked(x) - p.log_pdf_unchecked(x)).exp()).abs()
            }))
        }
    }
}

fn tv_grid(p: &Gmm, q: &Gmm, cells: usize, seed: u64) -> Result<McEstimate> {
    let d = p.dim();
    if d > 2 {
        return Err(Error::GridDimension(d));
    }
    if cells == 0 {
        return Err(Error::InvalidParameter("grid needs at least one cell per axis".into()));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for c in p.components().iter().chain(q.components()) {
        for i in 0..d {
            let s = c.covariance()[(i, i)].sqrt() * GRID_SIGMAS;
            lo[i] = lo[i].min(c.mean()[i] - s);
            hi[i] = hi[i].max(c.mean()[i] + s);
        }
    }
    let h: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / cells as f64).collect();
    let cell_volume: f64 = h.iter().product();
    let center = |i: usize, j: usize| lo[i] + (j as f64 + 0.5) * h[i];
    let abs_diff = |x: &[f64]| (p.log_pdf_unchecked(x).exp() - q.log_pdf_unchecked(x).exp()).abs();
    let rows: Vec<f64> = if d == 1 {
        vec![(0..cells).map(|j| abs_diff(&[center(0, j)])).sum()]
    } else {
        (0..cells)
            .into_par_iter()
            .map(|a| {
                let x0 = center(0, a);
                (0..cells).map(|b| abs_diff(&[x0, center(1, b)])).sum()
            })
            .collect()
    };
    let total: f64 = rows.iter().sum();
    Ok(McEstimate {
        value: 0.5 * total * cell_volume,
        std_error: 0.0,
        n_samples: cells.pow(d as u32),
        seed,
    })
}

/// Correctly rounded sum of `values`; the result does not depend on their order.
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    // Shewchuk's nonoverlapping partials
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut hi = 0.0;
    while let Some(x) = partials.pop() {
        let prev = hi;
        hi = prev + x;
        let lo = x - (hi - prev);
        if lo != 0.0 {
            // half-way rounding correction
            if let Some(&next) = partials.last() {
                if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
                    let y = lo * 2.0;
                    let x2 = hi + y;
                    if y == x2 - hi {
                        hi = x2;
                    }
                }
            }
            break;
        }
    }
    hi
}

fn median_nonzero_distance(data: &DatasetMatrix) -> Result<f64> {
    let n = data.n();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 > 0.0 {
                dists.push(d2.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::DegenerateBandwidth);
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    Ok(med)
}

/// Gaussian Gram matrix, row-major.
fn gram(data: &DatasetMatrix, bandwidth: f64) -> Vec<f64> {
    let n = data.n();
    let scale = -0.5 / (bandwidth * bandwidth);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let d2: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (scale * d2).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// `H K H` with `H = I - 11^T/n`, using order-independent sums.
fn double_center(k: &[f64], n: usize) -> Vec<f64> {
    let row_means: Vec<f64> = (0..n)
        .map(|i| exact_sum(k[i * n..(i + 1) * n].iter().copied()) / n as f64)
        .collect();
    let grand = exact_sum(row_means.iter().copied()) / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // K is symmetric, so column means equal row means
            out[i * n + j] = k[i * n + j] - row_means[i] - row_means[j] + grand;
        }
    }
    out
}

/// Biased HSIC `trace(K H L H) / n^2` with Gaussian kernels whose bandwidths
/// come from the median nonzero pairwise distance of each sample.
///
/// With `n_permutations > 0` the rows of `y` are shuffled to build a null
/// distribution and `permutation_p = (1 + #{null >= observed}) / (1 + B)`.
pub fn hsic(x: &DatasetMatrix, y: &DatasetMatrix, n_permutations: usize, seed: u64) -> Result<HsicResult> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::InvalidParameter(format!(
            "hsic needs paired rows: x has {n}, y has {}",
            y.n()
        )));
    }
    if n < 4 {
        return Err(Error::InvalidParameter("hsic needs at least 4 rows".into()));
    }
    let bandwidth_x = median_nonzero_distance(x)?;
    let bandwidth_y = median_nonzero_distance(y)?;
    let kc = double_center(&gram(x, bandwidth_x), n);
    let l = gram(y, bandwidth_y);
    let n2 = (n * n) as f64;
    let statistic = exact_sum(kc.iter().zip(&l).map(|(a, b)| a * b)) / n2;

    let permutation_p = (n_permutations > 0).then(|| {
        let mut rng = seed::rng(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut exceed = 0usize;
        for _ in 0..n_permutations {
            perm.shuffle(&mut rng);
            let mut s = 0.0;
            for i in 0..n {
                let lrow = &l[perm[i] * n..(perm[i] + 1) * n];
                let krow = &kc[i * n..(i + 1) * n];
                for j in 0..n {
                    s += krow[j] * lrow[perm[j]];
                }
            }
            if s / n2 >= statistic {
                exceed += 1;
            }
        }
        (1 + exceed) as f64 / (1 + n_permutations) as f64
    });

    Ok(HsicResult {
        statistic,
        bandwidth_x,
        bandwidth_y,
        permutation_p,
        n_permutations,
    })
}
