//! Finite Gaussian mixtures: construction, density evaluation, sampling and
//! the closed-form Gaussian quantities used as oracles elsewhere.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

const SYMMETRY_TOL: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-10;

/// One weighted multivariate normal component.
///
/// The Cholesky factor of the covariance is computed once at construction and
/// doubles as the positive-definiteness check and the sampling transform.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    // Row-major lower-triangular Cholesky factor and its inverse.
    chol: Vec<f64>,
    inv_chol: Vec<f64>,
    // -d/2 ln(2 pi) - sum ln L_ii
    log_norm: f64,
}

impl PartialEq for GaussianComponent {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight
            && self.mean == other.mean
            && self.covariance == other.covariance
    }
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidParameter("component dimension must be >= 1".into()));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if !(0.0..=1.0).contains(&weight) || weight.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "component weight {weight} outside [0, 1]"
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean or covariance".into()));
        }
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[(i, j)], covariance[(j, i)]);
                let scale = a.abs().max(b.abs()).max(1.0);
                asym = asym.max((a - b).abs() / scale);
            }
        }
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let l = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { component: None })?
            .unpack();
        let mut chol = vec![0.0; d * d];
        let mut log_diag = 0.0;
        for i in 0..d {
            for j in 0..=i {
                chol[i * d + j] = l[(i, j)];
            }
            if !(l[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite { component: None });
            }
            log_diag += l[(i, i)].ln();
        }
        let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() - log_diag;
        let inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::NotPositiveDefinite { component: None })?;
        let mut inv_chol = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                inv_chol[i * d + j] = inv[(i, j)];
            }
        }
        Ok(Self {
            weight,
            mean,
            covariance,
            chol,
            inv_chol,
            log_norm,
        })
    }

    /// Builds a component from an approximately symmetric matrix by averaging
    /// it with its transpose first.
    pub fn new_symmetrized(
        weight: f64,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let sym = (&covariance + covariance.transpose()) * 0.5;
        Self::new(weight, mean, sym)
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Lower Cholesky factor as a dense matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.chol[i * d + j])
    }

    pub(crate) fn with_weight(&self, weight: f64) -> Self {
        Self {
            weight,
            ..self.clone()
        }
    }

    /// Unweighted Gaussian log-density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mean = self.mean.as_slice();
        if d == 2 {
            let (a, b) = (x[0] - mean[0], x[1] - mean[1]);
            let z0 = self.inv_chol[0] * a;
            let z1 = self.inv_chol[2] * a + self.inv_chol[3] * b;
            return self.log_norm - 0.5 * (z0 * z0 + z1 * z1);
        }
        let mut maha = 0.0;
        for i in 0..d {
            let row = &self.inv_chol[i * d..i * d + i + 1];
            let zi: f64 = row.iter().zip(x).zip(mean).map(|((l, x), m)| l * (x - m)).sum();
            maha += zi * zi;
        }
        self.log_norm - 0.5 * maha
    }

    /// Draws `mean + L z` with `z` standard normal.
    pub fn draw_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.chol[i * d..i * d + i + 1];
            *o = self.mean[i] + row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>();
        }
    }

    /// Closed-form differential entropy of this component in nats.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 - self.log_norm
    }
}

/// A weighted mixture of multivariate Gaussians sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    components: Vec<GaussianComponent>,
    dim: usize,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Gmm {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("mixture needs at least one component".into()))?;
        let dim = first.dim();
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        let mut acc = 0.0;
        let cumulative = components
            .iter()
            .map(|c| {
                acc += c.weight;
                acc
            })
            .collect();
        Ok(Self {
            components,
            dim,
            log_weights,
            cumulative,
        })
    }

    /// Builds a mixture after dividing every weight by their sum.
    pub fn normalized(components: Vec<GaussianComponent>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter("weights must have positive sum".into()));
        }
        Self::new(
            components
                .iter()
                .map(|c| c.with_weight(c.weight / total))
                .collect(),
        )
    }

    /// Same components with uniform weights.
    pub fn uniform(components: Vec<GaussianComponent>) -> Result<Self> {
        let w = 1.0 / components.len().max(1) as f64;
        Self::new(components.iter().map(|c| c.with_weight(w)).collect())
    }

    pub fn single(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, covariance)?])
    }

    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::single(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            })
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.log_pdf_unchecked(x))
    }

    /// Log-density without the dimension check. `x.len()` must equal `dim`.
    pub fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 32];
        let mut heap;
        let k = self.components.len();
        let terms: &mut [f64] = if k <= 32 {
            &mut terms[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        self.joint_log_densities(x, terms);
        for &t in terms.iter() {
            max = max.max(t);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    /// Writes `ln w_k + ln N(x; mu_k, Sigma_k)` for every component into `out`.
    pub fn joint_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for ((c, lw), o) in self.components.iter().zip(&self.log_weights).zip(out) {
            *o = lw + c.log_density(x);
        }
    }

    /// Draws one point, returning the component index it came from.
    pub fn draw_into(&self, rng: &mut Rng, out: &mut [f64]) -> usize {
        let u: f64 = rng.random();
        let k = self.pick_component(u);
        self.components[k].draw_into(rng, out);
        k
    }

    fn pick_component(&self, u: f64) -> usize {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        if idx < self.components.len() {
            return idx;
        }
        // u landed past a cumulative sum that rounded below 1
        self.components
            .iter()
            .rposition(|c| c.weight > 0.0)
            .unwrap_or(0)
    }

    /// Draws `n` rows deterministically from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DatasetMatrix> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        let mut rng = seed::rng(seed);
        let mut data = vec![0.0; n * self.dim];
        let mut labels = Vec::with_capacity(n);
        for row in data.chunks_exact_mut(self.dim) {
            labels.push(self.draw_into(&mut rng, row));
        }
        DatasetMatrix::new(data, self.dim, Provenance::Resampled, seed, Some(labels))
    }

    /// Overall mixture mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .fold(DVector::zeros(self.dim), |acc, c| acc + c.mean() * c.weight)
    }

    /// Overall mixture covariance `sum_k w_k (Sigma_k + mu_k mu_k^T) - mu mu^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let second = self.components.iter().fold(
            DMatrix::zeros(self.dim, self.dim),
            |acc, c| acc + (c.covariance() + c.mean() * c.mean().transpose()) * c.weight,
        );
        second - &mu * mu.transpose()
    }

    /// Mixture of the first `k` components, reweighted to sum to one.
    pub fn restrict_first(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.components.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot restrict {} components to the first {k}",
                self.components.len()
            )));
        }
        Self::normalized(self.components[..k].to_vec())
    }

    /// Distribution of `X + e` with `e ~ N(0, variance * I)` independent of `X`.
    pub fn convolve_isotropic(&self, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
        }
        let noise = DMatrix::identity(self.dim, self.dim) * variance;
        Self::new(
            self.components
                .iter()
                .map(|c| GaussianComponent::new(c.weight, c.mean.clone(), &c.covariance + &noise))
                .collect::<Result<_>>()?,
        )
    }

    /// Serializable, plain-data view of the mixture.
    pub fn to_spec(&self) -> GmmSpec {
        GmmSpec {
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| ComponentSpec {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c
                        .covariance
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &GmmSpec) -> Result<Self> {
        let components = spec
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if c.mean.len() != spec.dim || c.covariance.len() != spec.dim {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim,
                        got: c.mean.len(),
                    }
                    .context(format!("component {k}")));
                }
                if let Some(row) = c.covariance.iter().find(|r| r.len() != spec.dim) {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim,
                        got: row.len(),
                    }
                    .context(format!("component {k}")));
                }
                let cov = DMatrix::from_fn(spec.dim, spec.dim, |i, j| c.covariance[i][j]);
                GaussianComponent::new(c.weight, DVector::from_vec(c.mean.clone()), cov)
                    .map_err(|e| e.context(format!("component {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let gmm = Self::new(components)?;
        gmm.check_dim(spec.dim)?;
        Ok(gmm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("mixture spec is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GmmSpec =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("mixture file: {e}")))?;
        Self::from_spec(&spec)
    }
}

/// On-disk mixture layout. Covariances are row-major arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub dim: usize,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Anchor,
    Synthetic,
    Resampled,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Anchor => "anchor",
            Provenance::Synthetic => "synthetic",
            Provenance::Resampled => "resampled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "anchor" => Some(Provenance::Anchor),
            "synthetic" => Some(Provenance::Synthetic),
            "resampled" => Some(Provenance::Resampled),
            _ => None,
        }
    }
}

/// `n x d` sample matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMatrix {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    pub provenance: Provenance,
    pub seed: u64,
    pub component_labels: Option<Vec<usize>>,
}

impl DatasetMatrix {
    pub fn new(
        data: Vec<f64>,
        dim: usize,
        provenance: Provenance,
        seed: u64,
        component_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "dataset of {} values is not a nonempty multiple of dimension {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        if let Some(labels) = &component_labels {
            if labels.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
        }
        Ok(Self {
            data,
            n,
            dim,
            provenance,
            seed,
            component_labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance, seed: u64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, provenance, seed, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column-wise sample mean.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for r in self.rows() {
            for (mi, v) in m.iter_mut().zip(r) {
                *mi += v;
            }
        }
        m / self.n as f64
    }

    /// Biased (1/n) sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let d = self.dim;
        let mut c = DMatrix::zeros(d, d);
        for r in self.rows() {
            for i in 0..d {
                let di = r[i] - mu[i];
                for j in 0..=i {
                    c[(i, j)] += di * (r[j] - mu[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        c / self.n as f64
    }

    /// Rows reordered by `perm` (row `i` of the result is row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Self {
            data,
            n: self.n,
            dim: self.dim,
            provenance: self.provenance,
            seed: self.seed,
            component_labels: self
                .component_labels
                .as_ref()
                .map(|l| perm.iter().map(|&p| l[p]).collect()),
        }
    }
}

/// `0.5 ln((2 pi e)^d det Sigma)` in nats.
pub fn gaussian_entropy(covariance: &DMatrix<f64>) -> Result<f64> {
    let d = covariance.nrows();
    if covariance.ncols() != d || d == 0 {
        return Err(Error::InvalidParameter("covariance must be square and nonempty".into()));
    }
    let c = GaussianComponent::new(1.0, DVector::zeros(d), covariance.clone())?;
    Ok(c.entropy())
}

/// Closed-form `KL(N(mean0, cov0) || N(mean1, cov1))` in nats.
pub fn gaussian_kl(
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    mean1: &DVector<f64>,
    cov1: &DMatrix<f64>,
) -> Result<f64> {
    let d = mean0.len();
    for got in [cov0.nrows(), mean1.len(), cov1.nrows()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    let p = GaussianComponent::new(1.0, mean0.clone(), cov0.clone())?;
    let q = GaussianComponent::new(1.0, mean1.clone(), cov1.clone())?;
    let l0 = p.cholesky_factor();
    let l1 = q.cholesky_factor();
    // tr(S1^-1 S0) = ||L1^-1 L0||_F^2
    let a = l1
        .solve_lower_triangular(&l0)
        .ok_or(Error::NotPositiveDefinite { component: None })?;
    let trace = a.norm_squared();
    let diff = mean1 - mean0;
    let z = l1
        .solve_lower_triangular(&diff)
        .ok_or(Error::NotPositiveDefinite { component: None })?;
    let maha = z.norm_squared();
    // ln det S1 - ln det S0 = 2 (log_norm0 - log_norm1)
    let log_det_ratio = 2.0 * (p.log_norm - q.log_norm);
    Ok((0.5 * (trace + maha - d as f64 + log_det_ratio)).max(0.0))
}
