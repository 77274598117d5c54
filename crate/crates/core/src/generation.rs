//! The simulated generation pipeline: a ground-truth mixture, a generative
//! mixture that extends it with task-irrelevant components, anchor and
//! synthetic samples, and the density of an invertible affine prompt map.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{DatasetMatrix, GaussianComponent, Gmm, Provenance};
use crate::seed::{self, tag, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub dim: usize,
    /// Components the anchor data is drawn from (K).
    pub k_anchor: usize,
    /// Target components never sampled into the anchor set (J).
    pub j_unsampled: usize,
    /// Task-irrelevant components added to the generative model (L).
    pub l_irrelevant: usize,
    /// Anchor rows per anchor component (N).
    pub n_per_anchor_component: usize,
    /// Synthetic rows drawn from the generative model.
    pub n_resample: usize,
    /// Standard deviation of the isotropic revision noise.
    pub noise_scale: f64,
    /// Component means are uniform in `[-mean_box, mean_box]^dim`.
    pub mean_box: f64,
    pub cov_scale: f64,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            k_anchor: 2,
            j_unsampled: 2,
            l_irrelevant: 2,
            n_per_anchor_component: 50,
            n_resample: 1000,
            noise_scale: 0.0,
            mean_box: 4.0,
            cov_scale: 1.0,
            master_seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.k_anchor == 0 {
            return bad("k_anchor must be >= 1");
        }
        if self.n_per_anchor_component == 0 || self.n_resample == 0 {
            return bad("sample counts must be >= 1");
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return bad("noise_scale must be a finite value >= 0");
        }
        if !(self.mean_box >= 0.0) || !(self.cov_scale > 0.0) {
            return bad("mean_box must be >= 0 and cov_scale > 0");
        }
        Ok(())
    }

    /// Components of the ground-truth mixture (K + J).
    pub fn n_target(&self) -> usize {
        self.k_anchor + self.j_unsampled
    }

    /// Components of the generative model (K + J + L).
    pub fn n_model(&self) -> usize {
        self.n_target() + self.l_irrelevant
    }
}

/// Uniform-box mean and covariance `cov_scale (A A^T + d I) / d` with
/// standard-normal `A`.
fn random_component(config: &GenerationConfig, rng: &mut Rng) -> Result<GaussianComponent> {
    let d = config.dim;
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-config.mean_box..=config.mean_box));
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = (&a * a.transpose() + DMatrix::identity(d, d) * d as f64) * (config.cov_scale / d as f64);
    GaussianComponent::new_symmetrized(1.0, mean, cov)
}

/// Ground-truth mixture G with K + J equally weighted components; the first K
/// are the anchor-sampled part.
pub fn build_gt_gmm(config: &GenerationConfig) -> Result<Gmm> {
    config.validate()?;
    let mut rng = seed::rng_at(config.master_seed, &[tag::GT_BUILD]);
    let comps = (0..config.n_target())
        .map(|_| random_component(config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Gmm::uniform(comps)
}

/// Generative model M: every component of `gt` followed by L task-irrelevant
/// components, all equally weighted.
pub fn build_model_m(gt: &Gmm, config: &GenerationConfig) -> Result<Gmm> {
    config.validate()?;
    if gt.n_components() != config.n_target() || gt.dim() != config.dim {
        return Err(Error::InvalidParameter(format!(
            "ground truth has {} components in d={}, config expects {} in d={}",
            gt.n_components(),
            gt.dim(),
            config.n_target(),
            config.dim
        )));
    }
    let mut rng = seed::rng_at(config.master_seed, &[tag::M_BUILD]);
    let mut comps = gt.components().to_vec();
    for _ in 0..config.l_irrelevant {
        comps.push(random_component(config, &mut rng)?);
    }
    Gmm::uniform(comps)
}

/// N rows from each of the first K components of `gt`, in component order.
pub fn sample_anchor(gt: &Gmm, config: &GenerationConfig) -> Result<DatasetMatrix> {
    config.validate()?;
    if config.k_anchor > gt.n_components() {
        return Err(Error::InvalidParameter(format!(
            "k_anchor = {} exceeds the {} ground-truth components",
            config.k_anchor,
            gt.n_components()
        )));
    }
    let stage_seed = seed::derive(config.master_seed, &[tag::ANCHOR]);
    let mut rng = seed::rng(stage_seed);
    let n = config.k_anchor * config.n_per_anchor_component;
    let mut data = vec![0.0; n * gt.dim()];
    let mut labels = Vec::with_capacity(n);
    let mut rows = data.chunks_exact_mut(gt.dim());
    for (k, comp) in gt.components()[..config.k_anchor].iter().enumerate() {
        for _ in 0..config.n_per_anchor_component {
            comp.draw_into(&mut rng, rows.next().expect("row count matches"));
            labels.push(k);
        }
    }
    DatasetMatrix::new(data, gt.dim(), Provenance::Anchor, stage_seed, Some(labels))
}

/// `n_resample` rows from `m` plus isotropic `N(0, noise_scale^2 I)` noise.
///
/// Takes only the model and the configuration: the synthetic set depends on
/// the anchor data solely through the model.
pub fn sample_synthetic(m: &Gmm, config: &GenerationConfig) -> Result<DatasetMatrix> {
    config.validate()?;
    let stage_seed = seed::derive(config.master_seed, &[tag::SYNTHETIC]);
    let mut data = m.sample(config.n_resample, stage_seed)?;
    data.provenance = Provenance::Synthetic;
    if config.noise_scale > 0.0 {
        let mut rng = seed::rng_at(config.master_seed, &[tag::NOISE]);
        for i in 0..data.n() {
            for v in data.row_mut(i) {
                *v += config.noise_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(data)
}

/// Distribution the anchor data is drawn from: the first K components of `gt`,
/// reweighted.
pub fn anchor_distribution(gt: &Gmm, config: &GenerationConfig) -> Result<Gmm> {
    gt.restrict_first(config.k_anchor)
}

/// Distribution of the synthetic rows: `m` convolved with the revision noise.
pub fn generated_distribution(m: &Gmm, config: &GenerationConfig) -> Result<Gmm> {
    m.convolve_isotropic(config.noise_scale * config.noise_scale)
}

/// Invertible affine map `x -> matrix * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    inverse: DMatrix<f64>,
    log_abs_det: f64,
}

impl AffineTransform {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let d = offset.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: matrix.nrows(),
            });
        }
        let lu = matrix.clone().lu();
        let det = lu.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularTransform(det.abs()));
        }
        let inverse = lu.try_inverse().ok_or(Error::SingularTransform(det.abs()))?;
        Ok(Self {
            matrix,
            offset,
            inverse,
            log_abs_det: det.abs().ln(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), DVector::zeros(dim)).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    pub fn invert(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (y - &self.offset)
    }
}

/// Log-density at `x` of `t(X)` for `X ~ base`:
/// `log f_base(t^-1(x)) - log |det t.matrix|`.
pub fn pushforward_log_pdf(base: &Gmm, t: &AffineTransform, x: &[f64]) -> Result<f64> {
    if t.dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: t.dim(),
        });
    }
    if x.len() != base.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: x.len(),
        });
    }
    let pre = t.invert(&DVector::from_column_slice(x));
    Ok(base.log_pdf_unchecked(pre.as_slice()) - t.log_abs_det)
}
