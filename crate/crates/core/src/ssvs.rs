//! Spike-and-slab Gibbs sampler for multivariate-response linear regression.
//!
//! Each coefficient gets a two-component Gaussian mixture prior — a wide
//! slab when its Bernoulli indicator is on, a narrow spike when off — with
//! mixture weights and variances set per feature group ("layer"). The
//! responses are treated as independent regressions sharing one
//! inverse-gamma noise variance.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::config::ConfigError;
use crate::fmath;
use crate::numerics::{NumericsError, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsvsError {
    #[error("design matrix must have at least one row and one column")]
    EmptyDesign,
    #[error("features have {features} rows but responses have {responses}")]
    RowMismatch { features: usize, responses: usize },
    #[error("layer map has {found} entries for {expected} feature columns")]
    LayerMapLength { expected: usize, found: usize },
    #[error("layer map entry {index} refers to layer {layer}, but the prior has {layers} layers")]
    LayerIndex {
        index: usize,
        layer: usize,
        layers: usize,
    },
    #[error("non-finite value in design or response matrix")]
    NonFiniteInput,
    #[error("chain holds no kept draws")]
    EmptyChain,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Mixture prior with one (slab, spike, inclusion) triple per feature layer,
/// plus the shared inverse-gamma prior on the noise variance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SsvsPrior {
    /// Slab (included-coefficient) variance per layer (JSON `sigma2_slab`).
    #[cfg_attr(feature = "serde", serde(rename = "sigma2_slab"))]
    pub slab: Vec<f64>,
    /// Spike (excluded-coefficient) variance per layer (JSON `sigma2_spike`).
    #[cfg_attr(feature = "serde", serde(rename = "sigma2_spike"))]
    pub spike: Vec<f64>,
    /// Prior inclusion probability per layer.
    pub pi: Vec<f64>,
    /// Inverse-gamma shape for the noise variance.
    pub alpha_eta: f64,
    /// Inverse-gamma scale for the noise variance.
    pub beta_eta: f64,
}

impl Default for SsvsPrior {
    fn default() -> Self {
        Self::uniform(1, 10.0, 0.001, 0.2, 0.01, 0.01)
    }
}

impl SsvsPrior {
    /// The same (slab, spike, pi) triple repeated for `layers` layers.
    pub fn uniform(
        layers: usize,
        slab: f64,
        spike: f64,
        pi: f64,
        alpha_eta: f64,
        beta_eta: f64,
    ) -> Self {
        Self {
            slab: alloc::vec![slab; layers],
            spike: alloc::vec![spike; layers],
            pi: alloc::vec![pi; layers],
            alpha_eta,
            beta_eta,
        }
    }

    pub fn layers(&self) -> usize {
        self.slab.len()
    }

    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        let layers = self.slab.len();
        if layers == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "sigma2_slab",
                0.0,
                "at least one layer entry",
            ));
        }
        for (key, values) in [("sigma2_spike", &self.spike), ("pi", &self.pi)] {
            if values.len() != layers {
                return Err(ConfigError::length_mismatch(
                    key_prefix,
                    key,
                    layers,
                    values.len(),
                ));
            }
        }
        for layer in 0..layers {
            let slab = self.slab[layer];
            let spike = self.spike[layer];
            if !spike.is_finite() || spike <= 0.0 {
                return Err(ConfigError::out_of_range(
                    key_prefix,
                    "sigma2_spike",
                    spike,
                    "(0, inf)",
                ));
            }
            if !slab.is_finite() || slab < spike {
                return Err(ConfigError::out_of_range(
                    key_prefix,
                    "sigma2_slab",
                    slab,
                    "[sigma2_spike, inf)",
                ));
            }
            let pi = self.pi[layer];
            if !pi.is_finite() || !(0.0..=1.0).contains(&pi) {
                return Err(ConfigError::out_of_range(key_prefix, "pi", pi, "[0, 1]"));
            }
        }
        for (key, value) in [("alpha_eta", self.alpha_eta), ("beta_eta", self.beta_eta)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "(0, inf)"));
            }
        }
        Ok(())
    }
}

/// Chain length bookkeeping (JSON keys `iters`, `burn`, `thin`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GibbsSettings {
    #[cfg_attr(feature = "serde", serde(rename = "iters", alias = "iterations"))]
    pub iterations: usize,
    #[cfg_attr(feature = "serde", serde(rename = "burn", alias = "burn_in"))]
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 500,
            thin: 1,
        }
    }
}

impl GibbsSettings {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.thin == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "thin",
                0.0,
                "a positive integer",
            ));
        }
        if self.iterations <= self.burn_in {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "iters",
                self.iterations as f64,
                "more than `burn`",
            ));
        }
        Ok(())
    }

    /// Number of draws a full run keeps.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Kept posterior draws. Coefficient and indicator draws are `q×k`
/// (features × responses); indicators are stored as 0.0/1.0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SsvsChain {
    pub coef: Vec<DMatrix<f64>>,
    pub indicators: Vec<DMatrix<f64>>,
    pub noise: Vec<f64>,
    pub settings: GibbsSettings,
    pub seed: RngStream,
}

impl SsvsChain {
    pub fn kept(&self) -> usize {
        self.coef.len()
    }
}

/// Posterior means and inclusion frequencies over the kept draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub coef_mean: DMatrix<f64>,
    pub inclusion_prob: DMatrix<f64>,
    pub sigma2_eta_mean: f64,
}

/// Run the Gibbs sampler.
///
/// `layer_of[b]` maps feature column `b` to its prior layer index. Within
/// each iteration, every response column draws its full coefficient vector
/// from the Gaussian conditional, then its indicators given the fresh
/// coefficients; the shared noise variance is drawn last from
/// `InvGamma(alpha_eta + Nk/2, beta_eta + RSS/2)`.
pub fn gibbs_run(
    features: &DMatrix<f64>,
    responses: &DMatrix<f64>,
    prior: &SsvsPrior,
    layer_of: &[usize],
    settings: &GibbsSettings,
    seed: RngStream,
) -> Result<SsvsChain, SsvsError> {
    let n = features.nrows();
    let q = features.ncols();
    let k = responses.ncols();
    if n == 0 || q == 0 || k == 0 {
        return Err(SsvsError::EmptyDesign);
    }
    if responses.nrows() != n {
        return Err(SsvsError::RowMismatch {
            features: n,
            responses: responses.nrows(),
        });
    }
    if layer_of.len() != q {
        return Err(SsvsError::LayerMapLength {
            expected: q,
            found: layer_of.len(),
        });
    }
    for (index, &layer) in layer_of.iter().enumerate() {
        if layer >= prior.layers() {
            return Err(SsvsError::LayerIndex {
                index,
                layer,
                layers: prior.layers(),
            });
        }
    }
    prior.validate("prior")?;
    settings.validate("gibbs")?;
    if !features.iter().chain(responses.iter()).all(|v| v.is_finite()) {
        return Err(SsvsError::NonFiniteInput);
    }

    let ftf = features.transpose() * features;
    let fty = features.transpose() * responses;

    let mut beta = DMatrix::zeros(q, k);
    let mut gamma = DMatrix::from_element(q, k, 1.0);
    let mut sigma2 = pooled_variance(responses).max(1e-12);
    let mut rng = seed.stream();

    let kept_cap = settings.kept();
    let mut coef_draws = Vec::with_capacity(kept_cap);
    let mut indicator_draws = Vec::with_capacity(kept_cap);
    let mut noise_draws = Vec::with_capacity(kept_cap);

    for iteration in 0..settings.iterations {
        for c in 0..k {
            let mut precision = &ftf * (1.0 / sigma2);
            for b in 0..q {
                let layer = layer_of[b];
                let prior_var = if gamma[(b, c)] != 0.0 {
                    prior.slab[layer]
                } else {
                    prior.spike[layer]
                };
                precision[(b, b)] += 1.0 / prior_var;
            }
            let chol = Cholesky::new(precision)
                .ok_or(SsvsError::Numerics(NumericsError::SingularSystem))?;
            let rhs = fty.column(c) * (1.0 / sigma2);
            let mean = chol.solve(&rhs);
            let z = DVector::from_fn(q, |_, _| rng.normal());
            let perturbation = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or(SsvsError::Numerics(NumericsError::SingularSystem))?;
            for b in 0..q {
                beta[(b, c)] = mean[b] + perturbation[b];
            }
            for b in 0..q {
                let layer = layer_of[b];
                let slab = prior.slab[layer];
                let spike = prior.spike[layer];
                let pi = prior.pi[layer];
                let b2 = beta[(b, c)] * beta[(b, c)];
                let log_odds = logit(pi)
                    + 0.5 * fmath::ln(spike / slab)
                    + 0.5 * b2 * (1.0 / spike - 1.0 / slab);
                gamma[(b, c)] = if rng.bernoulli(logistic(log_odds)) {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let residual = responses - features * &beta;
        let rss: f64 = residual.iter().map(|r| r * r).sum();
        sigma2 = rng.inverse_gamma(
            prior.alpha_eta + (n * k) as f64 / 2.0,
            prior.beta_eta + rss / 2.0,
        );

        if iteration >= settings.burn_in && (iteration - settings.burn_in) % settings.thin == 0 {
            coef_draws.push(beta.clone());
            indicator_draws.push(gamma.clone());
            noise_draws.push(sigma2);
        }
    }

    Ok(SsvsChain {
        coef: coef_draws,
        indicators: indicator_draws,
        noise: noise_draws,
        settings: *settings,
        seed,
    })
}

/// Arithmetic summaries over the kept draws.
pub fn posterior_summaries(chain: &SsvsChain) -> Result<PosteriorSummary, SsvsError> {
    if chain.coef.is_empty() {
        return Err(SsvsError::EmptyChain);
    }
    let (q, k) = chain.coef[0].shape();
    let mut coef_mean = DMatrix::zeros(q, k);
    let mut inclusion_prob = DMatrix::zeros(q, k);
    for (beta, gamma) in chain.coef.iter().zip(chain.indicators.iter()) {
        coef_mean += beta;
        inclusion_prob += gamma;
    }
    let count = chain.coef.len() as f64;
    coef_mean /= count;
    inclusion_prob /= count;
    let sigma2_eta_mean = chain.noise.iter().sum::<f64>() / count;
    Ok(PosteriorSummary {
        coef_mean,
        inclusion_prob,
        sigma2_eta_mean,
    })
}

/// Cell-wise quantile of the kept coefficient draws.
pub fn coef_quantiles(chain: &SsvsChain, p: f64) -> Result<DMatrix<f64>, SsvsError> {
    if chain.coef.is_empty() {
        return Err(SsvsError::EmptyChain);
    }
    let (q, k) = chain.coef[0].shape();
    let mut out = DMatrix::zeros(q, k);
    let mut cell = Vec::with_capacity(chain.coef.len());
    for b in 0..q {
        for c in 0..k {
            cell.clear();
            cell.extend(chain.coef.iter().map(|m| m[(b, c)]));
            out[(b, c)] = crate::numerics::quantile(&cell, p)?;
        }
    }
    Ok(out)
}

fn pooled_variance(values: &DMatrix<f64>) -> f64 {
    let n = values.len() as f64;
    let mean: f64 = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn logit(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        fmath::ln(p / (1.0 - p))
    }
}

fn logistic(log_odds: f64) -> f64 {
    if log_odds > 36.0 {
        1.0
    } else if log_odds < -36.0 {
        0.0
    } else {
        1.0 / (1.0 + fmath::exp(-log_odds))
    }
}
