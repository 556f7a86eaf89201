//! Seeded numerics shared by every model: counter-based RNG streams,
//! spectral radius, ridge regression, PCA, and empirical quantiles.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::fmath;

/// Errors from the shared numeric kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("input must be non-empty")]
    EmptyInput,
    #[error("row counts must match, got {left} and {right}")]
    RowMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ridge penalty must be finite and non-negative, got {0}")]
    InvalidPenalty(f64),
    #[error("normal-equation system is singular; add a positive ridge penalty")]
    SingularSystem,
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("component count {requested} outside 1..={limit}")]
    ComponentCount { requested: usize, limit: usize },
    #[error("need at least {needed} rows, got {found}")]
    ShortInput { needed: usize, found: usize },
}

const INV_2POW53: f64 = 1.0 / 9_007_199_254_740_992.0;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Addressable random stream: a `(base_seed, stream_id)` pair.
///
/// Streams with distinct ids are independent ChaCha12 counter streams under
/// the same key, so any unit of work can be given its own stream and
/// replayed in isolation. [`derive`](Self::derive) builds child ids by
/// mixing a tag into the current id; the allocation scheme used by the
/// models lives in [`crate::streams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    /// The run-level root stream (id 0).
    pub fn root(base_seed: u64) -> Self {
        Self::new(base_seed, 0)
    }

    /// Child stream whose id deterministically mixes `tag` into this id.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            base_seed: self.base_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag)),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn stream(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        StreamRng {
            rng,
            spare_normal: None,
        }
    }
}

/// Deterministic generator over one [`RngStream`].
///
/// All non-uniform draws are fixed transforms of the stream's uniforms
/// (Box–Muller normals, Marsaglia–Tsang gammas), so the draw sequence for a
/// given stream is pinned by this crate alone.
pub struct StreamRng {
    rng: ChaCha12Rng,
    spare_normal: Option<f64>,
}

impl StreamRng {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2POW53
    }

    /// Uniform draw on `(0, 1]`; safe to pass through `ln`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * INV_2POW53
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller; pairs are cached so consecutive
    /// calls consume two uniforms per two normals.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = fmath::sqrt(-2.0 * fmath::ln(u1));
        let angle = core::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * fmath::sin(angle));
        radius * fmath::cos(angle)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Gamma(shape, scale) via Marsaglia–Tsang squeeze; `shape < 1` is
    /// boosted through the power-of-uniform identity.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        debug_assert!(shape > 0.0 && scale > 0.0);
        if shape < 1.0 {
            let boost = fmath::pow(self.uniform_open(), 1.0 / shape);
            return self.gamma(shape + 1.0, scale) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / fmath::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v * scale;
            }
            if fmath::ln(u) < 0.5 * x2 + d * (1.0 - v + fmath::ln(v)) {
                return d * v * scale;
            }
        }
    }

    /// Inverse-gamma(shape, rate): `rate / Gamma(shape, 1)`.
    pub fn inverse_gamma(&mut self, shape: f64, rate: f64) -> f64 {
        rate / self.gamma(shape, 1.0)
    }
}

/// Largest eigenvalue modulus of a square matrix with finite entries,
/// read off the real Schur form. Random sparse matrices routinely have a
/// complex-conjugate dominant pair, so nothing lighter than a full
/// eigenvalue pass is reliable here.
pub fn spectral_radius(matrix: &DMatrix<f64>) -> Result<f64, NumericsError> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(NumericsError::NotSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    if n == 0 {
        return Err(NumericsError::EmptyInput);
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteInput);
    }
    if n == 1 {
        return Ok(fmath::abs(matrix[(0, 0)]));
    }
    let radius_sq = matrix
        .complex_eigenvalues()
        .iter()
        .map(|ev| ev.norm_sqr())
        .fold(0.0_f64, f64::max);
    Ok(fmath::sqrt(radius_sq))
}

/// Ridge solution `B` of `min ‖F B − Z‖² + r ‖B‖²` via Cholesky on the
/// normal equations, with one iterative-refinement pass.
///
/// `r = 0` is allowed; a singular unpenalized system is reported instead of
/// returning garbage.
pub fn ridge_solve(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    penalty: f64,
) -> Result<DMatrix<f64>, NumericsError> {
    if features.nrows() == 0 || features.ncols() == 0 || targets.ncols() == 0 {
        return Err(NumericsError::EmptyInput);
    }
    if features.nrows() != targets.nrows() {
        return Err(NumericsError::RowMismatch {
            left: features.nrows(),
            right: targets.nrows(),
        });
    }
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(NumericsError::InvalidPenalty(penalty));
    }
    if features.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteInput);
    }

    let q = features.ncols();
    let mut gram = features.transpose() * features;
    for i in 0..q {
        gram[(i, i)] += penalty;
    }
    let rhs = features.transpose() * targets;
    let chol = Cholesky::new(gram.clone()).ok_or(NumericsError::SingularSystem)?;
    let mut solution = chol.solve(&rhs);
    let residual = &rhs - &gram * &solution;
    solution += chol.solve(&residual);
    Ok(solution)
}

/// Principal-component basis fitted to rows of a data matrix.
///
/// Columns are centered by their means; components are unit-norm right
/// singular vectors ordered by decreasing singular value. Each component's
/// largest-magnitude entry is made positive (ties broken by lowest index)
/// so the basis is reproducible across runs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PcaBasis {
    components: DMatrix<f64>,
    column_means: DVector<f64>,
    singular_values: DVector<f64>,
}

impl PcaBasis {
    pub fn fit(data: &DMatrix<f64>, n_components: usize) -> Result<Self, NumericsError> {
        let t_len = data.nrows();
        let n = data.ncols();
        if t_len < 2 {
            return Err(NumericsError::ShortInput {
                needed: 2,
                found: t_len,
            });
        }
        let limit = t_len.min(n);
        if n_components == 0 || n_components > limit {
            return Err(NumericsError::ComponentCount {
                requested: n_components,
                limit,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteInput);
        }

        let column_means = DVector::from_fn(n, |j, _| data.column(j).sum() / t_len as f64);
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= column_means.transpose();
        }

        let svd = centered.svd(false, true);
        let v_t = svd.v_t.expect("SVD with v_t requested");
        let sigma = svd.singular_values;

        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

        let mut components = DMatrix::zeros(n, n_components);
        let mut singular_values = DVector::zeros(n_components);
        for (out_col, &src_row) in order.iter().take(n_components).enumerate() {
            singular_values[out_col] = sigma[src_row];
            let mut pivot = 0;
            for j in 1..n {
                if fmath::abs(v_t[(src_row, j)]) > fmath::abs(v_t[(src_row, pivot)]) {
                    pivot = j;
                }
            }
            let flip = if v_t[(src_row, pivot)] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                components[(j, out_col)] = flip * v_t[(src_row, j)];
            }
        }

        Ok(Self {
            components,
            column_means,
            singular_values,
        })
    }

    /// Reassemble a basis from stored pieces (model deserialization path).
    pub fn from_parts(
        components: DMatrix<f64>,
        column_means: DVector<f64>,
        singular_values: DVector<f64>,
    ) -> Result<Self, NumericsError> {
        let n = components.nrows();
        let k = components.ncols();
        if n == 0 || k == 0 {
            return Err(NumericsError::EmptyInput);
        }
        if k > n {
            return Err(NumericsError::ComponentCount {
                requested: k,
                limit: n,
            });
        }
        if column_means.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: column_means.len(),
            });
        }
        if singular_values.len() != k {
            return Err(NumericsError::DimensionMismatch {
                expected: k,
                found: singular_values.len(),
            });
        }
        if components.iter().any(|v| !v.is_finite())
            || column_means.iter().any(|v| !v.is_finite())
            || singular_values.iter().any(|v| !v.is_finite())
        {
            return Err(NumericsError::NonFiniteInput);
        }
        Ok(Self {
            components,
            column_means,
            singular_values,
        })
    }

    /// Project rows of `data` onto the basis: `(data − means) · components`.
    pub fn project(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
        if data.ncols() != self.n_features() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.n_features(),
                found: data.ncols(),
            });
        }
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.column_means.transpose();
        }
        Ok(centered * &self.components)
    }

    /// Map scores back to the original space: `scores · componentsᵀ + means`.
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
        if scores.ncols() != self.n_components() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.n_components(),
                found: scores.ncols(),
            });
        }
        let mut out = scores * self.components.transpose();
        for mut row in out.row_iter_mut() {
            row += self.column_means.transpose();
        }
        Ok(out)
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn n_features(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }
}

/// Column-wise centering/scaling transform with stored training statistics.
///
/// Scales are population standard deviations; near-constant columns
/// (sd below 1e-12) get scale 1 so they pass through centered but unscaled.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    means: DVector<f64>,
    scales: DVector<f64>,
}

impl Standardizer {
    pub fn fit(data: &DMatrix<f64>) -> Result<Self, NumericsError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(NumericsError::EmptyInput);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteInput);
        }
        let t = data.nrows() as f64;
        let n = data.ncols();
        let means = DVector::from_fn(n, |j, _| data.column(j).sum() / t);
        let scales = DVector::from_fn(n, |j, _| {
            let m = means[j];
            let var = data.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t;
            let sd = fmath::sqrt(var);
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        });
        Ok(Self { means, scales })
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
        let n = self.means.len();
        if data.ncols() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: data.ncols(),
            });
        }
        let mut out = data.clone();
        for j in 0..n {
            let mean = self.means[j];
            let inv = 1.0 / self.scales[j];
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        Ok(out)
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn scales(&self) -> &DVector<f64> {
        &self.scales
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" convention: `h = (n−1)p`).
pub fn quantile(values: &[f64], p: f64) -> Result<f64, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(NumericsError::InvalidProbability(p));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(NumericsError::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = fmath::floor(h);
    let idx = lo as usize;
    let frac = h - lo;
    if frac == 0.0 || idx + 1 == sorted.len() {
        Ok(sorted[idx])
    } else {
        Ok(sorted[idx] + frac * (sorted[idx + 1] - sorted[idx]))
    }
}
