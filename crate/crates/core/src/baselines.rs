//! Reference simulators and baseline forecasters.
//!
//! The simulators generate spatio-temporal fields from known dynamics —
//! a quadratic nonlinear state process, its linear special case, and a
//! two-timescale latent process — so forecasting methods can be scored
//! against ground truth. The baselines (universal kriging, persistence,
//! climatology, a ridge autoregression) set the bar those methods must
//! clear.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR};
use thiserror::Error;

use crate::config::ConfigError;
use crate::fmath;
use crate::numerics::{ridge_solve, spectral_radius, NumericsError, RngStream, Standardizer};
use crate::reservoir::{build_embeddings, EmbeddingSpec, ReservoirError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("state magnitude exceeded {limit:e} at step {step}; the simulated dynamics are unstable")]
    SimulationDiverged { step: usize, limit: f64 },
    #[error("{what} has {found} rows, expected {expected}")]
    RowCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} has {found} columns, expected {expected}")]
    ColumnCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("quadratic coefficient block {state} has a nonzero entry at ({row}, {col}) above the diagonal")]
    QuadraticUpperTriangle {
        state: usize,
        row: usize,
        col: usize,
    },
    #[error("no observations to krige from")]
    NoObservations,
    #[error("requested simulation length is zero")]
    ZeroLength,
    #[error("training history too short: need at least {needed} time points, got {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("no training rows to forecast from")]
    EmptyTraining,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Separable exponential space-time covariance
/// `sigma2 · exp(−‖Δs‖/rho_s) · exp(−|Δt|/rho_t)`, plus a nugget on the
/// diagonal of observation covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CovarianceParams {
    pub sigma2: f64,
    pub rho_s: f64,
    pub rho_t: f64,
    pub nugget: f64,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            rho_s: 1.0,
            rho_t: 1.0,
            nugget: 0.1,
        }
    }
}

impl CovarianceParams {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        for (key, value) in [
            ("sigma2", self.sigma2),
            ("rho_s", self.rho_s),
            ("rho_t", self.rho_t),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "(0, inf)"));
            }
        }
        if !self.nugget.is_finite() || self.nugget < 0.0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "nugget",
                self.nugget,
                "[0, inf)",
            ));
        }
        Ok(())
    }

    fn latent(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let ds = fmath::sqrt(dx * dx + dy * dy);
        let dt = fmath::abs(a.t - b.t);
        self.sigma2 * fmath::exp(-ds / self.rho_s) * fmath::exp(-dt / self.rho_t)
    }
}

/// One observation or prediction site in space-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Observation covariance: latent covariance everywhere, nugget added on the
/// diagonal.
pub fn covariance_matrix(points: &[SpaceTimePoint], params: &CovarianceParams) -> DMatrix<f64> {
    let n = points.len();
    let mut cov = DMatrix::from_fn(n, n, |i, j| params.latent(&points[i], &points[j]));
    for i in 0..n {
        cov[(i, i)] += params.nugget;
    }
    cov
}

/// Covariance between observation sites (rows) and prediction sites
/// (columns). Predictions target the latent process, so no nugget is added
/// even at zero distance.
pub fn cross_covariance(
    points: &[SpaceTimePoint],
    targets: &[SpaceTimePoint],
    params: &CovarianceParams,
) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), targets.len(), |i, j| {
        params.latent(&points[i], &targets[j])
    })
}

/// Plug-in predictive mean and variance per target site.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingPrediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
}

/// Universal kriging of the latent process at `targets`.
///
/// The trend coefficients are estimated by generalized least squares, the
/// residual is interpolated through the covariance, and the predictive
/// variance carries the usual inflation for the estimated trend. `trend`
/// and `target_trend` are the trend design matrices at the observation and
/// prediction sites; they must share a column count.
pub fn krige(
    points: &[SpaceTimePoint],
    values: &DVector<f64>,
    trend: &DMatrix<f64>,
    targets: &[SpaceTimePoint],
    target_trend: &DMatrix<f64>,
    params: &CovarianceParams,
) -> Result<KrigingPrediction, BaselineError> {
    params.validate("kriging")?;
    let n = points.len();
    if n == 0 {
        return Err(BaselineError::NoObservations);
    }
    if values.len() != n {
        return Err(BaselineError::RowCount {
            what: "observation vector",
            expected: n,
            found: values.len(),
        });
    }
    if trend.nrows() != n {
        return Err(BaselineError::RowCount {
            what: "trend design",
            expected: n,
            found: trend.nrows(),
        });
    }
    if target_trend.nrows() != targets.len() {
        return Err(BaselineError::RowCount {
            what: "target trend design",
            expected: targets.len(),
            found: target_trend.nrows(),
        });
    }
    if trend.ncols() == 0 || target_trend.ncols() != trend.ncols() {
        return Err(BaselineError::ColumnCount {
            what: "target trend design",
            expected: trend.ncols().max(1),
            found: target_trend.ncols(),
        });
    }

    let cov = covariance_matrix(points, params);
    let chol = Cholesky::new(cov).ok_or(NumericsError::SingularSystem)?;

    let cov_inv_trend = chol.solve(trend);
    let gram = trend.transpose() * &cov_inv_trend;
    let gram_chol = Cholesky::new(gram).ok_or(NumericsError::SingularSystem)?;
    let beta = gram_chol.solve(&(cov_inv_trend.transpose() * values));

    let residual = values - trend * &beta;
    let weights = chol.solve(&residual);

    let cross = cross_covariance(points, targets, params);
    let cov_inv_cross = chol.solve(&cross);
    // x₀ − Xᵀ C⁻¹ c₀ per target, stacked as columns.
    let trend_gap = target_trend.transpose() - trend.transpose() * &cov_inv_cross;
    let gram_inv_gap = gram_chol.solve(&trend_gap);

    let m = targets.len();
    let mut mean = DVector::zeros(m);
    let mut variance = DVector::zeros(m);
    for j in 0..m {
        mean[j] = target_trend.row(j).transpose().dot(&beta) + cross.column(j).dot(&weights);
        let explained = cross.column(j).dot(&cov_inv_cross.column(j));
        let trend_penalty = trend_gap.column(j).dot(&gram_inv_gap.column(j));
        variance[j] = (params.sigma2 - explained + trend_penalty).max(0.0);
    }
    Ok(KrigingPrediction { mean, variance })
}

/// Latent states and observed fields from one simulator run, row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub states: DMatrix<f64>,
    pub fields: DMatrix<f64>,
}

/// Quadratic nonlinear state process read out through fixed spatial
/// patterns.
///
/// Each state evolves as a linear combination of the previous states plus
/// pairwise interaction terms `θ_{i,kℓ} · α(k) · tanh(α(ℓ))` over `ℓ ≤ k`,
/// plus white noise; the field is `phi_out · α`. The interaction blocks are
/// stored dense but must be lower-triangular so each pair appears once.
#[derive(Debug, Clone, PartialEq)]
pub struct GqnParams {
    /// `p × p` linear transition.
    pub theta_linear: DMatrix<f64>,
    /// Per-state `p × p` lower-triangular interaction coefficients.
    pub theta_quadratic: Vec<DMatrix<f64>>,
    /// Standard deviation of the state noise.
    pub noise_sd: f64,
    /// `n_y × p` readout patterns.
    pub phi_out: DMatrix<f64>,
}

impl GqnParams {
    pub fn state_dim(&self) -> usize {
        self.theta_linear.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.phi_out.nrows()
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let p = self.theta_linear.nrows();
        if self.theta_linear.ncols() != p || p == 0 {
            return Err(BaselineError::ColumnCount {
                what: "linear transition",
                expected: p.max(1),
                found: self.theta_linear.ncols(),
            });
        }
        if self.theta_quadratic.len() != p {
            return Err(BaselineError::RowCount {
                what: "quadratic coefficient list",
                expected: p,
                found: self.theta_quadratic.len(),
            });
        }
        for (state, block) in self.theta_quadratic.iter().enumerate() {
            if block.nrows() != p || block.ncols() != p {
                return Err(BaselineError::RowCount {
                    what: "quadratic coefficient block",
                    expected: p,
                    found: block.nrows(),
                });
            }
            for row in 0..p {
                for col in row + 1..p {
                    if block[(row, col)] != 0.0 {
                        return Err(BaselineError::QuadraticUpperTriangle { state, row, col });
                    }
                }
            }
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(ConfigError::out_of_range("gqn", "noise_sd", self.noise_sd, "[0, inf)").into());
        }
        if self.phi_out.ncols() != p {
            return Err(BaselineError::ColumnCount {
                what: "readout patterns",
                expected: p,
                found: self.phi_out.ncols(),
            });
        }
        Ok(())
    }

    /// A randomly drawn parameter set that stays bounded over long runs:
    /// linear part scaled to spectral radius 0.7, sparse weak interactions,
    /// orthonormal readout patterns, mild state noise.
    pub fn default_stable(p: usize, n_y: usize, seed: RngStream) -> Result<Self, BaselineError> {
        if p == 0 {
            return Err(ConfigError::out_of_range("gqn", "p", 0.0, "a positive integer").into());
        }
        if n_y < p {
            return Err(ConfigError::out_of_range(
                "gqn",
                "n_y",
                n_y as f64,
                "at least `p` so the readout patterns can be orthonormal",
            )
            .into());
        }
        let mut rng = seed.stream();
        let mut theta_linear = DMatrix::from_fn(p, p, |_, _| rng.normal());
        let radius = spectral_radius(&theta_linear)?;
        if radius > 0.0 {
            theta_linear *= 0.7 / radius;
        }
        let mut theta_quadratic = Vec::with_capacity(p);
        for _ in 0..p {
            let mut block = DMatrix::zeros(p, p);
            for k in 0..p {
                for l in 0..=k {
                    if rng.uniform() < 0.1 {
                        block[(k, l)] = rng.uniform_in(-0.1, 0.1);
                    }
                }
            }
            theta_quadratic.push(block);
        }
        let gaussian = DMatrix::from_fn(n_y, p, |_, _| rng.normal());
        let phi_out = QR::new(gaussian).q();
        Ok(Self {
            theta_linear,
            theta_quadratic,
            noise_sd: 0.05,
            phi_out,
        })
    }
}

/// Run the quadratic state process for `discard + t_len` steps from a zero
/// state and keep the last `t_len`.
pub fn simulate_gqn(
    params: &GqnParams,
    t_len: usize,
    discard: usize,
    seed: RngStream,
) -> Result<SimulatedSeries, BaselineError> {
    params.validate()?;
    if t_len == 0 {
        return Err(BaselineError::ZeroLength);
    }
    let p = params.state_dim();
    let n_y = params.n_outputs();
    let mut rng = seed.stream();
    let mut alpha = DVector::zeros(p);
    let mut states = DMatrix::zeros(t_len, p);
    let mut fields = DMatrix::zeros(t_len, n_y);
    for step in 0..discard + t_len {
        let mut next = &params.theta_linear * &alpha;
        for i in 0..p {
            let block = &params.theta_quadratic[i];
            for k in 0..p {
                for l in 0..=k {
                    let coef = block[(k, l)];
                    if coef != 0.0 {
                        next[i] += coef * alpha[k] * fmath::tanh(alpha[l]);
                    }
                }
            }
        }
        for i in 0..p {
            next[i] += params.noise_sd * rng.normal();
        }
        alpha = next;
        if alpha.iter().any(|v| !v.is_finite() || fmath::abs(*v) > DIVERGENCE_LIMIT) {
            return Err(BaselineError::SimulationDiverged {
                step,
                limit: DIVERGENCE_LIMIT,
            });
        }
        if step >= discard {
            let row = step - discard;
            states.row_mut(row).copy_from(&alpha.transpose());
            fields.row_mut(row).copy_from(&(&params.phi_out * &alpha).transpose());
        }
    }
    Ok(SimulatedSeries { states, fields })
}

/// Linear-Gaussian state process: `α_t = M α_{t−1} + η_t` with
/// `η ~ N(0, innovation_cov)`, read out through `phi_out`.
///
/// The innovation covariance is factored by Cholesky when it is positive
/// definite, otherwise through its eigendecomposition with negative
/// eigenvalues clipped to zero.
pub fn simulate_linear_dstm(
    transition: &DMatrix<f64>,
    innovation_cov: &DMatrix<f64>,
    phi_out: &DMatrix<f64>,
    t_len: usize,
    discard: usize,
    seed: RngStream,
) -> Result<SimulatedSeries, BaselineError> {
    let p = transition.nrows();
    if transition.ncols() != p || p == 0 {
        return Err(BaselineError::ColumnCount {
            what: "linear transition",
            expected: p.max(1),
            found: transition.ncols(),
        });
    }
    if innovation_cov.nrows() != p || innovation_cov.ncols() != p {
        return Err(BaselineError::RowCount {
            what: "innovation covariance",
            expected: p,
            found: innovation_cov.nrows(),
        });
    }
    if phi_out.ncols() != p {
        return Err(BaselineError::ColumnCount {
            what: "readout patterns",
            expected: p,
            found: phi_out.ncols(),
        });
    }
    if t_len == 0 {
        return Err(BaselineError::ZeroLength);
    }
    let factor = match Cholesky::new(innovation_cov.clone()) {
        Some(chol) => chol.l(),
        None => {
            let eigen = SymmetricEigen::new(innovation_cov.clone());
            let mut scaled = eigen.eigenvectors.clone();
            for (j, lambda) in eigen.eigenvalues.iter().enumerate() {
                let scale = fmath::sqrt(lambda.max(0.0));
                scaled.column_mut(j).scale_mut(scale);
            }
            scaled
        }
    };
    let n_y = phi_out.nrows();
    let mut rng = seed.stream();
    let mut alpha = DVector::<f64>::zeros(p);
    let mut states = DMatrix::zeros(t_len, p);
    let mut fields = DMatrix::zeros(t_len, n_y);
    for step in 0..discard + t_len {
        let shocks = DVector::from_fn(p, |_, _| rng.normal());
        alpha = transition * &alpha + &factor * shocks;
        if alpha.iter().any(|v| !v.is_finite() || fmath::abs(*v) > DIVERGENCE_LIMIT) {
            return Err(BaselineError::SimulationDiverged {
                step,
                limit: DIVERGENCE_LIMIT,
            });
        }
        if step >= discard {
            let row = step - discard;
            states.row_mut(row).copy_from(&alpha.transpose());
            fields.row_mut(row).copy_from(&(phi_out * &alpha).transpose());
        }
    }
    Ok(SimulatedSeries { states, fields })
}

/// Two groups of latent AR(1) components — one fast-mixing, one slow — read
/// out through orthonormal spatial patterns with observation noise.
///
/// Innovation variances are `1 − ρ²`, so every component has unit
/// stationary variance regardless of its timescale.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TwoScaleParams {
    pub n_y: usize,
    pub fast_dim: usize,
    pub slow_dim: usize,
    pub rho_fast: f64,
    pub rho_slow: f64,
    pub obs_noise_sd: f64,
}

impl Default for TwoScaleParams {
    fn default() -> Self {
        Self {
            n_y: 40,
            fast_dim: 3,
            slow_dim: 3,
            rho_fast: 0.5,
            rho_slow: 0.98,
            obs_noise_sd: 0.1,
        }
    }
}

impl TwoScaleParams {
    pub fn state_dim(&self) -> usize {
        self.fast_dim + self.slow_dim
    }

    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.state_dim() == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "fast_dim",
                0.0,
                "at least one latent component across both groups",
            ));
        }
        if self.n_y < self.state_dim() {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "n_y",
                self.n_y as f64,
                "at least `fast_dim + slow_dim` so the patterns can be orthonormal",
            ));
        }
        for (key, value) in [("rho_fast", self.rho_fast), ("rho_slow", self.rho_slow)] {
            if !value.is_finite() || !(0.0..1.0).contains(&value) {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "[0, 1)"));
            }
        }
        if !self.obs_noise_sd.is_finite() || self.obs_noise_sd < 0.0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "obs_noise_sd",
                self.obs_noise_sd,
                "[0, inf)",
            ));
        }
        Ok(())
    }
}

/// Run the two-timescale process for `discard + t_len` steps from a zero
/// state and keep the last `t_len`.
pub fn simulate_two_scale(
    params: &TwoScaleParams,
    t_len: usize,
    discard: usize,
    seed: RngStream,
) -> Result<SimulatedSeries, BaselineError> {
    params.validate("two_scale")?;
    if t_len == 0 {
        return Err(BaselineError::ZeroLength);
    }
    let p = params.state_dim();
    let n_y = params.n_y;
    let mut rho = DVector::zeros(p);
    for i in 0..params.fast_dim {
        rho[i] = params.rho_fast;
    }
    for i in params.fast_dim..p {
        rho[i] = params.rho_slow;
    }
    let innovation_sd = rho.map(|r| fmath::sqrt(1.0 - r * r));

    let mut rng = seed.stream();
    let gaussian = DMatrix::from_fn(n_y, p, |_, _| rng.normal());
    let patterns = QR::new(gaussian).q();

    let mut alpha = DVector::<f64>::zeros(p);
    let mut states = DMatrix::zeros(t_len, p);
    let mut fields = DMatrix::zeros(t_len, n_y);
    for step in 0..discard + t_len {
        for i in 0..p {
            alpha[i] = rho[i] * alpha[i] + innovation_sd[i] * rng.normal();
        }
        if step >= discard {
            let row = step - discard;
            states.row_mut(row).copy_from(&alpha.transpose());
            let mut observed = &patterns * &alpha;
            for v in observed.iter_mut() {
                *v += params.obs_noise_sd * rng.normal();
            }
            fields.row_mut(row).copy_from(&observed.transpose());
        }
    }
    Ok(SimulatedSeries { states, fields })
}

/// Repeat the last training row for `horizon` steps.
pub fn persistence_forecast(
    train: &DMatrix<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>, BaselineError> {
    if train.nrows() == 0 {
        return Err(BaselineError::EmptyTraining);
    }
    let last = train.row(train.nrows() - 1).into_owned();
    let mut out = DMatrix::zeros(horizon, train.ncols());
    for h in 0..horizon {
        out.row_mut(h).copy_from(&last);
    }
    Ok(out)
}

/// Repeat the training-period mean field for `horizon` steps.
pub fn climatology_forecast(
    train: &DMatrix<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>, BaselineError> {
    if train.nrows() == 0 {
        return Err(BaselineError::EmptyTraining);
    }
    let t = train.nrows() as f64;
    let mean = train.row_sum() / t;
    let mut out = DMatrix::zeros(horizon, train.ncols());
    for h in 0..horizon {
        out.row_mut(h).copy_from(&mean);
    }
    Ok(out)
}

/// Ridge regression from lag-embedded standardized fields straight to the
/// field `lead` steps ahead — the linear benchmark the nonlinear models are
/// measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArModel {
    coef: DMatrix<f64>,
    standardizer: Standardizer,
    embedding: EmbeddingSpec,
    lead: usize,
}

impl LinearArModel {
    pub fn fit(
        z: &DMatrix<f64>,
        embedding: &EmbeddingSpec,
        ridge: f64,
        lead: usize,
    ) -> Result<Self, BaselineError> {
        embedding.validate("embedding")?;
        let t_len = z.nrows();
        let warmup = embedding.warmup();
        let needed = warmup + lead + 1;
        if t_len < needed {
            return Err(BaselineError::InsufficientHistory {
                needed,
                found: t_len,
            });
        }
        let standardizer = Standardizer::fit(z)?;
        let z_std = standardizer.apply(z)?;
        let emb = build_embeddings(&z_std, embedding)?;
        let n_pairs = t_len - warmup - lead;
        let features = with_bias(&emb.rows(0, n_pairs).into_owned());
        let responses = z.rows(warmup + lead, n_pairs).into_owned();
        let coef = ridge_solve(&features, &responses, ridge)?;
        Ok(Self {
            coef,
            standardizer,
            embedding: *embedding,
            lead,
        })
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    /// Predictions for every embeddable time, paired with the time index of
    /// the first predicted row.
    pub fn predict_series(&self, z: &DMatrix<f64>) -> Result<(usize, DMatrix<f64>), BaselineError> {
        let z_std = self.standardizer.apply(z)?;
        let emb = build_embeddings(&z_std, &self.embedding)?;
        let features = with_bias(&emb);
        Ok((self.embedding.warmup() + self.lead, features * &self.coef))
    }
}

fn with_bias(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(features.nrows(), features.ncols() + 1, 1.0);
    out.view_mut((0, 1), (features.nrows(), features.ncols()))
        .copy_from(features);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize) -> Vec<SpaceTimePoint> {
        (0..n)
            .map(|i| SpaceTimePoint {
                x: (i % 3) as f64,
                y: (i / 3) as f64,
                t: (i % 2) as f64,
            })
            .collect()
    }

    #[test]
    fn covariance_has_nugget_on_diagonal_only_and_is_symmetric() {
        let points = grid_points(6);
        let params = CovarianceParams {
            sigma2: 2.0,
            rho_s: 1.5,
            rho_t: 0.8,
            nugget: 0.3,
        };
        let cov = covariance_matrix(&points, &params);
        for i in 0..6 {
            assert!((cov[(i, i)] - 2.3).abs() < 1e-12);
            for j in 0..6 {
                assert_eq!(cov[(i, j)], cov[(j, i)]);
                if i != j {
                    assert!(cov[(i, j)] < 2.0);
                }
            }
        }
        let cross = cross_covariance(&points, &points, &params);
        for i in 0..6 {
            assert!((cross[(i, i)] - 2.0).abs() < 1e-12, "cross-covariance must stay latent");
        }
    }

    #[test]
    fn zero_nugget_kriging_interpolates_exactly() {
        let points = grid_points(7);
        let mut rng = RngStream::new(3, 0).stream();
        let values = DVector::from_fn(7, |_, _| rng.normal());
        let trend = DMatrix::from_element(7, 1, 1.0);
        let params = CovarianceParams {
            nugget: 0.0,
            ..CovarianceParams::default()
        };
        let pred = krige(&points, &values, &trend, &points, &trend, &params).unwrap();
        for i in 0..7 {
            assert!((pred.mean[i] - values[i]).abs() < 1e-8);
            assert!(pred.variance[i] < 1e-8);
        }
    }

    #[test]
    fn pure_trend_data_is_reproduced_through_the_estimated_trend() {
        let points = grid_points(9);
        let trend = DMatrix::from_fn(9, 3, |i, j| match j {
            0 => 1.0,
            1 => points[i].x,
            _ => points[i].t,
        });
        let coeffs = DVector::from_column_slice(&[2.0, -1.5, 0.75]);
        let values = &trend * &coeffs;
        let far = [SpaceTimePoint { x: 40.0, y: -3.0, t: 12.0 }];
        let far_trend = DMatrix::from_row_slice(1, 3, &[1.0, 40.0, 12.0]);
        let pred = krige(
            &points,
            &values,
            &trend,
            &far,
            &far_trend,
            &CovarianceParams::default(),
        )
        .unwrap();
        let expected = 2.0 - 1.5 * 40.0 + 0.75 * 12.0;
        assert!((pred.mean[0] - expected).abs() < 1e-8, "{} vs {expected}", pred.mean[0]);
    }

    #[test]
    fn predictive_variance_grows_away_from_the_data() {
        let points = grid_points(8);
        let mut rng = RngStream::new(9, 0).stream();
        let values = DVector::from_fn(8, |_, _| rng.normal());
        let trend = DMatrix::from_element(8, 1, 1.0);
        let targets = [
            SpaceTimePoint { x: 0.5, y: 0.5, t: 0.0 },
            SpaceTimePoint { x: 25.0, y: 25.0, t: 50.0 },
        ];
        let target_trend = DMatrix::from_element(2, 1, 1.0);
        let pred = krige(
            &points,
            &values,
            &trend,
            &targets,
            &target_trend,
            &CovarianceParams::default(),
        )
        .unwrap();
        assert!(pred.variance[0] < pred.variance[1]);
        assert!(pred.variance[1] > CovarianceParams::default().sigma2 * 0.99);
    }

    #[test]
    fn quadratic_terms_off_reduces_to_the_linear_simulator() {
        let p = 3;
        let sd = 0.25;
        let mut rng = RngStream::new(17, 0).stream();
        let mut transition = DMatrix::from_fn(p, p, |_, _| rng.normal());
        let radius = spectral_radius(&transition).unwrap();
        transition *= 0.6 / radius;
        let phi_out = DMatrix::from_fn(5, p, |i, j| ((i + 2 * j) as f64 * 0.1).sin());
        let params = GqnParams {
            theta_linear: transition.clone(),
            theta_quadratic: alloc::vec![DMatrix::zeros(p, p); p],
            noise_sd: sd,
            phi_out: phi_out.clone(),
        };
        let seed = RngStream::new(42, 5);
        let nonlinear = simulate_gqn(&params, 50, 10, seed).unwrap();
        let innovation_cov = DMatrix::from_diagonal_element(p, p, sd * sd);
        let linear =
            simulate_linear_dstm(&transition, &innovation_cov, &phi_out, 50, 10, seed).unwrap();
        assert_eq!(nonlinear.states, linear.states);
        assert_eq!(nonlinear.fields, linear.fields);
    }

    #[test]
    fn unstable_dynamics_are_reported_with_the_failing_step() {
        let params = GqnParams {
            theta_linear: DMatrix::from_diagonal_element(2, 2, 3.0),
            theta_quadratic: alloc::vec![DMatrix::zeros(2, 2); 2],
            noise_sd: 1.0,
            phi_out: DMatrix::identity(2, 2),
        };
        let err = simulate_gqn(&params, 100, 0, RngStream::new(1, 0)).unwrap_err();
        match err {
            BaselineError::SimulationDiverged { step, .. } => {
                assert!(step < 40, "tripling per step must blow past 1e6 quickly, got {step}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn stable_defaults_survive_long_runs() {
        for seed in [0, 1] {
            let params = GqnParams::default_stable(5, 20, RngStream::new(seed, 0)).unwrap();
            let run = simulate_gqn(&params, 2000, 100, RngStream::new(seed, 1)).unwrap();
            let spread = run.states.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            assert!(spread < 100.0, "states stay moderate, got {spread}");
            // Orthonormal readout: ΦᵀΦ = I.
            let gram = params.phi_out.transpose() * &params.phi_out;
            for i in 0..5 {
                for j in 0..5 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn two_scale_components_match_their_nominal_persistence() {
        let params = TwoScaleParams {
            n_y: 12,
            fast_dim: 1,
            slow_dim: 1,
            rho_fast: 0.4,
            rho_slow: 0.95,
            obs_noise_sd: 0.05,
        };
        let run = simulate_two_scale(&params, 6000, 200, RngStream::new(4, 0)).unwrap();
        for (col, rho) in [(0, 0.4), (1, 0.95)] {
            let series: Vec<f64> = run.states.column(col).iter().copied().collect();
            let n = series.len();
            let mean = series.iter().sum::<f64>() / n as f64;
            let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let lag1 = series
                .windows(2)
                .map(|w| (w[0] - mean) * (w[1] - mean))
                .sum::<f64>()
                / ((n - 1) as f64 * var);
            assert!((var - 1.0).abs() < 0.25, "column {col} variance {var}");
            assert!((lag1 - rho).abs() < 0.05, "column {col} autocorrelation {lag1}");
        }
    }

    #[test]
    fn naive_forecasts_repeat_last_row_and_mean_row() {
        let train = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 6.0, 30.0]);
        let persist = persistence_forecast(&train, 2).unwrap();
        assert_eq!(persist, DMatrix::from_row_slice(2, 2, &[6.0, 30.0, 6.0, 30.0]));
        let clim = climatology_forecast(&train, 2).unwrap();
        assert_eq!(clim, DMatrix::from_row_slice(2, 2, &[3.0, 20.0, 3.0, 20.0]));
        assert!(matches!(
            persistence_forecast(&DMatrix::zeros(0, 2), 1),
            Err(BaselineError::EmptyTraining)
        ));
    }

    #[test]
    fn ridge_autoregression_recovers_a_scalar_ar1() {
        let rho = 0.7;
        let mut rng = RngStream::new(12, 0).stream();
        let mut value = 0.0;
        let t_len = 2000;
        let mut z = DMatrix::zeros(t_len, 1);
        for t in 0..t_len {
            value = rho * value + 0.3 * rng.normal();
            z[(t, 0)] = value;
        }
        let embedding = EmbeddingSpec {
            extra_lags: 0,
            lag_step: 1,
        };
        let model = LinearArModel::fit(&z, &embedding, 1e-8, 1).unwrap();
        let (start, preds) = model.predict_series(&z).unwrap();
        assert_eq!(start, 1);
        let mut abs_gap = 0.0;
        let rows = preds.nrows() - 1;
        for r in 0..rows {
            abs_gap += (preds[(r, 0)] - rho * z[(start + r - 1, 0)]).abs();
        }
        assert!(abs_gap / (rows as f64) < 0.05, "fitted map strays from 0.7·z");
    }

    #[test]
    fn short_histories_are_rejected_with_the_requirement() {
        let z = DMatrix::zeros(4, 2);
        let embedding = EmbeddingSpec {
            extra_lags: 2,
            lag_step: 1,
        };
        assert!(matches!(
            LinearArModel::fit(&z, &embedding, 0.1, 2),
            Err(BaselineError::InsufficientHistory { needed: 5, found: 4 })
        ));
    }
}
