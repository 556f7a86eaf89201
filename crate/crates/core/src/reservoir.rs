//! Sparse random reservoirs: weight draws, spectral scaling, lagged input
//! embeddings, state recursion, and the quadratic feature expansion.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::ConfigError;
use crate::fmath;
use crate::numerics::{spectral_radius, NumericsError, RngStream, StreamRng};

/// Errors from reservoir construction and state runs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReservoirError {
    #[error("reservoir draw degenerate after {attempts} attempts (recurrence matrix has zero spectral radius); raise the nonzero probability or width")]
    Degenerate { attempts: usize },
    #[error("input history too short: embedding needs more than {needed} rows, got {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("input width {found} does not match reservoir input dimension {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("initial state length {found} does not match reservoir width {expected}")]
    StateWidth { expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sparse random-weight hyperparameters.
///
/// Each recurrence and input weight is nonzero with probability
/// `pi_nonzero_*` and then drawn uniformly on `(-a_*, a_*)`; the recurrence
/// matrix is rescaled so its spectral radius equals the memory parameter
/// `nu`. The state nonlinearity is a hyperbolic tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ReservoirParams {
    /// Hidden-state width.
    pub n_h: usize,
    /// Probability that a recurrence weight is nonzero (JSON key `pi_w`).
    #[cfg_attr(
        feature = "serde",
        serde(rename = "pi_w", alias = "pi_nonzero_w")
    )]
    pub pi_nonzero_w: f64,
    /// Probability that an input weight is nonzero (JSON key `pi_u`).
    #[cfg_attr(
        feature = "serde",
        serde(rename = "pi_u", alias = "pi_nonzero_u")
    )]
    pub pi_nonzero_u: f64,
    /// Half-width of the uniform recurrence-weight distribution.
    pub a_w: f64,
    /// Half-width of the uniform input-weight distribution.
    pub a_u: f64,
    /// Memory parameter in [0, 1]: target spectral radius after rescaling.
    pub nu: f64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            n_h: 50,
            pi_nonzero_w: 0.1,
            pi_nonzero_u: 0.1,
            a_w: 0.1,
            a_u: 0.1,
            nu: 0.8,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.n_h == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "n_h",
                self.n_h as f64,
                "a positive integer",
            ));
        }
        for (key, value) in [
            ("pi_w", self.pi_nonzero_w),
            ("pi_u", self.pi_nonzero_u),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "[0, 1]"));
            }
        }
        for (key, value) in [("a_w", self.a_w), ("a_u", self.a_u)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "(0, inf)"));
            }
        }
        if !self.nu.is_finite() || !(0.0..=1.0).contains(&self.nu) {
            return Err(ConfigError::out_of_range(key_prefix, "nu", self.nu, "[0, 1]"));
        }
        Ok(())
    }
}

/// Lagged-copy input embedding: row `t` becomes
/// `[x_t, x_{t−lag_step}, …, x_{t−extra_lags·lag_step}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EmbeddingSpec {
    /// Number of extra lagged copies appended to the current input (JSON `m`).
    #[cfg_attr(feature = "serde", serde(rename = "m", alias = "extra_lags"))]
    pub extra_lags: usize,
    /// Spacing between lagged copies in time steps (JSON `tau`).
    #[cfg_attr(feature = "serde", serde(rename = "tau", alias = "lag_step"))]
    pub lag_step: usize,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            extra_lags: 2,
            lag_step: 1,
        }
    }
}

impl EmbeddingSpec {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.lag_step == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "tau",
                0.0,
                "a positive integer",
            ));
        }
        Ok(())
    }

    /// Rows consumed from the front of the series by the lag window.
    pub fn warmup(&self) -> usize {
        self.extra_lags * self.lag_step
    }

    /// Embedded width for `input_dim` raw inputs.
    pub fn width(&self, input_dim: usize) -> usize {
        (self.extra_lags + 1) * input_dim
    }
}

/// Stack lagged copies of the rows of `inputs`.
///
/// Output row `i` corresponds to input row `i + warmup` and concatenates
/// the current row with `extra_lags` earlier rows spaced `lag_step` apart.
pub fn build_embeddings(
    inputs: &DMatrix<f64>,
    spec: &EmbeddingSpec,
) -> Result<DMatrix<f64>, ReservoirError> {
    let warmup = spec.warmup();
    let t_len = inputs.nrows();
    if t_len <= warmup {
        return Err(ReservoirError::InsufficientHistory {
            needed: warmup,
            found: t_len,
        });
    }
    let p = inputs.ncols();
    let n_rows = t_len - warmup;
    let mut out = DMatrix::zeros(n_rows, spec.width(p));
    for i in 0..n_rows {
        let t = i + warmup;
        for lag in 0..=spec.extra_lags {
            let src = t - lag * spec.lag_step;
            for j in 0..p {
                out[(i, lag * p + j)] = inputs[(src, j)];
            }
        }
    }
    Ok(out)
}

/// A drawn reservoir: spectrally scaled recurrence weights, input weights,
/// and the stream that reproduces the draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    w_scaled: DMatrix<f64>,
    input_weights: DMatrix<f64>,
    lambda_w: f64,
    params: ReservoirParams,
    seed: RngStream,
}

const MAX_DRAW_ATTEMPTS: usize = 16;
const RETRY_TAG: u64 = 0x5EED_AB1E;

impl Reservoir {
    /// Draw a reservoir for `input_dim`-wide (embedded) inputs.
    ///
    /// Weights are drawn in a fixed order — recurrence matrix row-major,
    /// then input matrix row-major, two uniforms per entry (gate, value) —
    /// so a given stream yields the same leading draws for any
    /// sparsity/width settings. A draw whose recurrence matrix has zero
    /// spectral radius is retried on the next substream, up to 16 attempts.
    pub fn draw(
        params: &ReservoirParams,
        input_dim: usize,
        seed: RngStream,
    ) -> Result<Self, ReservoirError> {
        let n_h = params.n_h;
        for attempt in 0..MAX_DRAW_ATTEMPTS {
            let attempt_seed = if attempt == 0 {
                seed
            } else {
                seed.derive(RETRY_TAG).derive(attempt as u64)
            };
            let mut rng = attempt_seed.stream();
            let w = draw_sparse_uniform(&mut rng, n_h, n_h, params.pi_nonzero_w, params.a_w);
            let input_weights =
                draw_sparse_uniform(&mut rng, n_h, input_dim, params.pi_nonzero_u, params.a_u);
            let lambda_w = spectral_radius(&w)?;
            if lambda_w < 1e-12 {
                continue;
            }
            let w_scaled = w * (params.nu / lambda_w);
            return Ok(Self {
                w_scaled,
                input_weights,
                lambda_w,
                params: *params,
                seed,
            });
        }
        Err(ReservoirError::Degenerate {
            attempts: MAX_DRAW_ATTEMPTS,
        })
    }

    /// Run the tanh state recursion over embedded inputs, one state row per
    /// input row, starting from `initial`.
    pub fn run_states(
        &self,
        inputs: &DMatrix<f64>,
        initial: &DVector<f64>,
    ) -> Result<DMatrix<f64>, ReservoirError> {
        let n_h = self.params.n_h;
        if inputs.ncols() != self.input_weights.ncols() {
            return Err(ReservoirError::InputWidth {
                expected: self.input_weights.ncols(),
                found: inputs.ncols(),
            });
        }
        if initial.len() != n_h {
            return Err(ReservoirError::StateWidth {
                expected: n_h,
                found: initial.len(),
            });
        }
        let t_len = inputs.nrows();
        let mut states = DMatrix::zeros(t_len, n_h);
        let mut state = initial.clone();
        let mut pre = DVector::zeros(n_h);
        for t in 0..t_len {
            let x_t = inputs.row(t).transpose();
            pre.gemv(1.0, &self.w_scaled, &state, 0.0);
            pre.gemv(1.0, &self.input_weights, &x_t, 1.0);
            for i in 0..n_h {
                state[i] = fmath::tanh(pre[i]);
            }
            states.row_mut(t).copy_from(&state.transpose());
        }
        Ok(states)
    }

    /// State run from the zero state.
    pub fn run_states_from_zero(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>, ReservoirError> {
        self.run_states(inputs, &DVector::zeros(self.params.n_h))
    }

    /// Scaled recurrence weights (spectral radius equals `nu`).
    pub fn recurrence_weights(&self) -> &DMatrix<f64> {
        &self.w_scaled
    }

    pub fn input_weights(&self) -> &DMatrix<f64> {
        &self.input_weights
    }

    /// Spectral radius of the unscaled recurrence draw.
    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    /// The stream passed to [`Reservoir::draw`]; replaying it reproduces
    /// this reservoir, including any degenerate-draw retries.
    pub fn seed(&self) -> RngStream {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.params.n_h
    }
}

fn draw_sparse_uniform(
    rng: &mut StreamRng,
    rows: usize,
    cols: usize,
    pi_nonzero: f64,
    half_width: f64,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let gate = rng.uniform();
            let value = rng.uniform();
            if gate < pi_nonzero {
                m[(i, j)] = half_width * (2.0 * value - 1.0);
            }
        }
    }
    m
}

/// Readout design block for a state matrix: `[1 | states | states∘states]`.
/// The leading constant column keeps the readout able to express the field
/// mean even when the states carry no signal.
pub fn quadratic_features(states: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = states.shape();
    let mut out = DMatrix::zeros(rows, 2 * cols + 1);
    for i in 0..rows {
        out[(i, 0)] = 1.0;
        for j in 0..cols {
            let s = states[(i, j)];
            out[(i, 1 + j)] = s;
            out[(i, 1 + cols + j)] = s * s;
        }
    }
    out
}
