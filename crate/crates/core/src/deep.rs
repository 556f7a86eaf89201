//! Deep (layered) echo-state ensemble with a selection-prior readout.
//!
//! Layers are numbered from the output side: layer 1 feeds the readout
//! directly, layer `L` (the deepest) reads the lag-embedded inputs, and
//! each layer in between reads a principal-component reduction of the
//! states one layer deeper, at the same time index. The readout regresses
//! a principal-component reduction of the field on the stacked features of
//! every ensemble member — layer-1 states unreduced, deeper layers reduced
//! — with the spike-and-slab Gibbs sampler choosing which features matter.
//!
//! The genetic tuner searches the width/memory/embedding/penalty space
//! using a cheap ridge-readout surrogate scored on a held-out tail.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::config::ConfigError;
use crate::field::FieldSeries;
use crate::fmath;
use crate::numerics::{NumericsError, PcaBasis, RngStream, StreamRng, Standardizer, ridge_solve};
use crate::qeesn::{summarize_members, EnsembleForecast, Fingerprint, SeriesPrediction};
use crate::reservoir::{build_embeddings, EmbeddingSpec, Reservoir, ReservoirError, ReservoirParams};
use crate::ssvs::{gibbs_run, GibbsSettings, SsvsChain, SsvsError, SsvsPrior};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeepEsnError {
    #[error("ensemble must have at least one member")]
    NoMembers,
    #[error("inputs have {found} rows but the field has {expected}")]
    InputRows { expected: usize, found: usize },
    #[error("training history too short: need at least {needed} time points for this embedding/burn-in/lead, got {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("forecast history too short: need at least {needed} recent time points, got {found}")]
    ForecastHistoryTooShort { needed: usize, found: usize },
    #[error("horizon {horizon} runs past the trained lead {lead}")]
    HorizonBeyondLead { horizon: usize, lead: usize },
    #[error("forecast horizon must be at least 1")]
    ZeroHorizon,
    #[error("prior covers {found} layers but the model has {expected}")]
    PriorLayerCount { expected: usize, found: usize },
    #[error("stored model has {found} reduction sets for {expected} members")]
    MemberCount { expected: usize, found: usize },
    #[error("member {index} stores {found} layer reductions, expected {expected}")]
    ReductionCount {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("member {index} layer reduction maps {found} states, expected {expected}")]
    ReductionShape {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("chain coefficients cover {found} features, expected {expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("chain coefficients cover {found} responses, expected {expected} basis components")]
    ResponseWidth { expected: usize, found: usize },
    #[error("chain holds no kept draws")]
    EmptyChain,
    #[error("no tuner candidate produced a finite validation score")]
    TuningFailed,
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Selection(#[from] SsvsError),
}

/// Architecture and training hyperparameters for the layered model.
///
/// Every layer's reservoir shares the width `layer1_width`; what varies by
/// depth is the reduced dimension handed to the next layer
/// (`reduced_widths[d]` for layer `d+2`) and the memory parameter
/// (`nu[l]` for layer `l+1`). A single-layer model has `reduced_widths`
/// empty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DeepEsnConfig {
    /// Reservoir width used by every layer (JSON key `n_h_1`).
    #[cfg_attr(feature = "serde", serde(rename = "n_h_1", alias = "layer1_width"))]
    pub layer1_width: usize,
    /// Reduced state dimension per deeper layer, shallowest first
    /// (JSON key `n_h_tilde`).
    #[cfg_attr(feature = "serde", serde(rename = "n_h_tilde", alias = "reduced_widths"))]
    pub reduced_widths: Vec<usize>,
    /// Memory parameter per layer, output layer first.
    pub nu: Vec<f64>,
    /// Probability that a recurrence weight is nonzero (JSON key `pi_w`).
    #[cfg_attr(feature = "serde", serde(rename = "pi_w", alias = "pi_nonzero_w"))]
    pub pi_nonzero_w: f64,
    /// Probability that an input weight is nonzero (JSON key `pi_u`).
    #[cfg_attr(feature = "serde", serde(rename = "pi_u", alias = "pi_nonzero_u"))]
    pub pi_nonzero_u: f64,
    /// Half-width of the uniform recurrence-weight distribution.
    pub a_w: f64,
    /// Half-width of the uniform input-weight distribution.
    pub a_u: f64,
    pub embedding: EmbeddingSpec,
    /// Ridge penalty for plain-readout uses of the features, e.g. the
    /// tuner's surrogate fit (JSON key `r_v`).
    #[cfg_attr(feature = "serde", serde(rename = "r_v", alias = "ridge"))]
    pub ridge: f64,
    /// Forecast lead in time steps: features at t predict the field at t+lead.
    pub lead: usize,
    /// State rows dropped from the front before fitting.
    pub burn_in: usize,
}

impl Default for DeepEsnConfig {
    fn default() -> Self {
        Self {
            layer1_width: 50,
            reduced_widths: alloc::vec![10],
            nu: alloc::vec![0.8, 0.8],
            pi_nonzero_w: 0.1,
            pi_nonzero_u: 0.1,
            a_w: 0.1,
            a_u: 0.1,
            embedding: EmbeddingSpec::default(),
            ridge: 0.1,
            lead: 1,
            burn_in: 30,
        }
    }
}

impl DeepEsnConfig {
    /// Number of layers, counting the output layer.
    pub fn depth(&self) -> usize {
        self.reduced_widths.len() + 1
    }

    /// Stacked feature width contributed by one ensemble member.
    pub fn feature_width(&self) -> usize {
        self.layer1_width + self.reduced_widths.iter().sum::<usize>()
    }

    /// First time index with a usable training feature row.
    pub fn first_feature_time(&self) -> usize {
        self.embedding.warmup() + self.burn_in
    }

    /// Reservoir hyperparameters for 0-based layer `layer_index`.
    fn layer_params(&self, layer_index: usize) -> ReservoirParams {
        ReservoirParams {
            n_h: self.layer1_width,
            pi_nonzero_w: self.pi_nonzero_w,
            pi_nonzero_u: self.pi_nonzero_u,
            a_w: self.a_w,
            a_u: self.a_u,
            nu: self.nu[layer_index],
        }
    }

    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.nu.len() != self.depth() {
            return Err(ConfigError::length_mismatch(
                key_prefix,
                "nu",
                self.depth(),
                self.nu.len(),
            ));
        }
        for (layer_index, _) in self.nu.iter().enumerate() {
            self.layer_params(layer_index).validate(key_prefix)?;
        }
        for &width in &self.reduced_widths {
            if width == 0 || width > self.layer1_width {
                return Err(ConfigError::out_of_range(
                    key_prefix,
                    "n_h_tilde",
                    width as f64,
                    "[1, n_h_1]",
                ));
            }
        }
        let embedding_prefix = format!("{key_prefix}.embedding");
        self.embedding.validate(&embedding_prefix)?;
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "r_v",
                self.ridge,
                "[0, inf)",
            ));
        }
        if self.lead == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "lead",
                0.0,
                "a positive integer",
            ));
        }
        Ok(())
    }
}

/// Per-time-row features produced by one pipeline: layer-1 states plus the
/// reduced states of each deeper layer, shallowest first
/// (`reduced[d]` holds layer `d+2`).
#[derive(Debug, Clone, PartialEq)]
pub struct DeepEsnFeatures {
    pub y1: DMatrix<f64>,
    pub reduced: Vec<DMatrix<f64>>,
}

impl DeepEsnFeatures {
    pub fn n_rows(&self) -> usize {
        self.y1.nrows()
    }

    pub fn width(&self) -> usize {
        self.y1.ncols() + self.reduced.iter().map(|m| m.ncols()).sum::<usize>()
    }

    /// `[y1 | reduced layer 2 | … | reduced layer L]`, row per time.
    pub fn stacked(&self) -> DMatrix<f64> {
        let rows = self.n_rows();
        let mut out = DMatrix::zeros(rows, self.width());
        out.view_mut((0, 0), (rows, self.y1.ncols())).copy_from(&self.y1);
        let mut col = self.y1.ncols();
        for block in &self.reduced {
            out.view_mut((0, col), (rows, block.ncols())).copy_from(block);
            col += block.ncols();
        }
        out
    }
}

/// One ensemble member's frozen layer stack: drawn reservoirs plus the
/// fitted state reductions, stored deepest layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepPipeline {
    reservoirs: Vec<Reservoir>,
    reductions: Vec<PcaBasis>,
    seed: RngStream,
}

impl DeepPipeline {
    /// Draw the layer reservoirs from `seed` and fit each deeper layer's
    /// state reduction on rows `[burn_in, train_rows)` of its states.
    ///
    /// `x_emb` is the embedded (already standardized) input matrix; row `r`
    /// of every returned feature block aligns with row `r` of `x_emb`.
    pub fn fit(
        x_emb: &DMatrix<f64>,
        config: &DeepEsnConfig,
        seed: RngStream,
        train_rows: usize,
    ) -> Result<(Self, DeepEsnFeatures), DeepEsnError> {
        let depth = config.depth();
        let total_rows = x_emb.nrows();
        if train_rows > total_rows || train_rows <= config.burn_in + 1 {
            return Err(DeepEsnError::InsufficientHistory {
                needed: config.burn_in + 2,
                found: train_rows.min(total_rows),
            });
        }
        let mut reservoirs = Vec::with_capacity(depth);
        let mut reductions = Vec::with_capacity(depth.saturating_sub(1));
        let mut deepest_first = Vec::with_capacity(depth.saturating_sub(1));
        let mut input = x_emb.clone();
        let mut y1 = DMatrix::zeros(0, 0);
        for position in 0..depth {
            let layer = depth - position;
            let params = config.layer_params(layer - 1);
            let reservoir = Reservoir::draw(&params, input.ncols(), seed.derive(layer as u64))?;
            let states = reservoir.run_states_from_zero(&input)?;
            reservoirs.push(reservoir);
            if layer > 1 {
                let reduced_dim = config.reduced_widths[layer - 2];
                let fit_slice = states
                    .rows(config.burn_in, train_rows - config.burn_in)
                    .into_owned();
                let basis = PcaBasis::fit(&fit_slice, reduced_dim)?;
                let projected = basis.project(&states)?;
                reductions.push(basis);
                deepest_first.push(projected.clone());
                input = projected;
            } else {
                y1 = states;
            }
        }
        deepest_first.reverse();
        let features = DeepEsnFeatures {
            y1,
            reduced: deepest_first,
        };
        Ok((Self { reservoirs, reductions, seed }, features))
    }

    /// Rebuild a pipeline from its seed and stored reductions. Reservoir
    /// draws are deterministic in the seed, so only the data-dependent
    /// reductions need to have been kept.
    pub fn from_stored(
        config: &DeepEsnConfig,
        seed: RngStream,
        input_width: usize,
        reductions: Vec<PcaBasis>,
        member_index: usize,
    ) -> Result<Self, DeepEsnError> {
        let depth = config.depth();
        if reductions.len() != depth - 1 {
            return Err(DeepEsnError::ReductionCount {
                index: member_index,
                expected: depth - 1,
                found: reductions.len(),
            });
        }
        for basis in &reductions {
            if basis.n_features() != config.layer1_width {
                return Err(DeepEsnError::ReductionShape {
                    index: member_index,
                    expected: config.layer1_width,
                    found: basis.n_features(),
                });
            }
        }
        let mut reservoirs = Vec::with_capacity(depth);
        for position in 0..depth {
            let layer = depth - position;
            let params = config.layer_params(layer - 1);
            let in_dim = if position == 0 {
                input_width
            } else {
                // Layer ℓ < L reads the reduction of layer ℓ+1.
                config.reduced_widths[layer - 1]
            };
            reservoirs.push(Reservoir::draw(&params, in_dim, seed.derive(layer as u64))?);
        }
        Ok(Self {
            reservoirs,
            reductions,
            seed,
        })
    }

    /// Run the frozen stack over embedded inputs.
    pub fn run(&self, x_emb: &DMatrix<f64>) -> Result<DeepEsnFeatures, DeepEsnError> {
        let depth = self.reservoirs.len();
        let mut deepest_first = Vec::with_capacity(depth.saturating_sub(1));
        let mut input = x_emb.clone();
        let mut y1 = DMatrix::zeros(0, 0);
        for position in 0..depth {
            let states = self.reservoirs[position].run_states_from_zero(&input)?;
            if position < depth - 1 {
                let projected = self.reductions[position].project(&states)?;
                deepest_first.push(projected.clone());
                input = projected;
            } else {
                y1 = states;
            }
        }
        deepest_first.reverse();
        Ok(DeepEsnFeatures {
            y1,
            reduced: deepest_first,
        })
    }

    pub fn seed(&self) -> RngStream {
        self.seed
    }

    pub fn reductions(&self) -> &[PcaBasis] {
        &self.reductions
    }
}

/// Standardize `x`, embed it, and fit one pipeline over all of it —
/// convenience for inspecting what a configuration's features look like.
pub fn run_deep_states(
    x: &DMatrix<f64>,
    config: &DeepEsnConfig,
    seed: RngStream,
) -> Result<(DeepPipeline, DeepEsnFeatures), DeepEsnError> {
    config.validate("deesn")?;
    let standardizer = Standardizer::fit(x)?;
    let x_std = standardizer.apply(x)?;
    let emb = build_embeddings(&x_std, &config.embedding)?;
    let rows = emb.nrows();
    DeepPipeline::fit(&emb, config, seed, rows)
}

/// Principal-component reduction of the field plus the per-location spread
/// the truncation throws away, used to reinflate forecasts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResponseBasis {
    pub pca: PcaBasis,
    /// Population standard deviation of the truncation residual per location.
    pub truncation_sd: nalgebra::DVector<f64>,
}

impl ResponseBasis {
    pub fn fit(values: &DMatrix<f64>, n_components: usize) -> Result<Self, NumericsError> {
        let pca = PcaBasis::fit(values, n_components)?;
        let reconstructed = pca.reconstruct(&pca.project(values)?)?;
        let t = values.nrows() as f64;
        let truncation_sd = nalgebra::DVector::from_fn(values.ncols(), |j, _| {
            let sq: f64 = values
                .column(j)
                .iter()
                .zip(reconstructed.column(j).iter())
                .map(|(v, r)| (v - r) * (v - r))
                .sum();
            fmath::sqrt(sq / t)
        });
        Ok(Self { pca, truncation_sd })
    }

    pub fn n_components(&self) -> usize {
        self.pca.n_components()
    }
}

/// A fitted deep ensemble: the frozen pipelines, the field basis, and the
/// posterior draws of the readout.
#[derive(Debug, Clone, PartialEq)]
pub struct DeesnModel {
    config: DeepEsnConfig,
    n_res: usize,
    n_inputs: usize,
    basis: ResponseBasis,
    input_standardizer: Standardizer,
    feature_standardizer: Standardizer,
    pipelines: Vec<DeepPipeline>,
    chain: SsvsChain,
    fingerprint: Fingerprint,
    warnings: Vec<String>,
}

/// Fit the deep ensemble on a training series.
///
/// `inputs` defaults to the field itself. The field is reduced to
/// `basis_k` principal components; each of the `n_res` pipelines is drawn
/// from its own stream; and the Gibbs sampler regresses component scores at
/// `t + lead` on the standardized stacked features of all members at `t`,
/// with one prior layer per architecture layer.
#[allow(clippy::too_many_arguments)]
pub fn fit_deesn(
    z: &FieldSeries,
    inputs: Option<&DMatrix<f64>>,
    config: &DeepEsnConfig,
    n_res: usize,
    basis_k: usize,
    prior: &SsvsPrior,
    gibbs: &GibbsSettings,
    base_seed: u64,
) -> Result<DeesnModel, DeepEsnError> {
    config.validate("deesn")?;
    if n_res == 0 {
        return Err(DeepEsnError::NoMembers);
    }
    if prior.layers() != config.depth() {
        return Err(DeepEsnError::PriorLayerCount {
            expected: config.depth(),
            found: prior.layers(),
        });
    }
    let x = inputs.unwrap_or_else(|| z.values());
    if x.nrows() != z.t_len() {
        return Err(DeepEsnError::InputRows {
            expected: z.t_len(),
            found: x.nrows(),
        });
    }
    let t_len = z.t_len();
    let needed = config.first_feature_time() + config.lead + 1;
    if t_len < needed {
        return Err(DeepEsnError::InsufficientHistory {
            needed,
            found: t_len,
        });
    }
    let n_pairs = t_len - needed + 1;

    let input_standardizer = Standardizer::fit(x)?;
    let x_std = input_standardizer.apply(x)?;
    let emb = build_embeddings(&x_std, &config.embedding)?;

    let basis = ResponseBasis::fit(z.values(), basis_k)?;
    let alpha = basis.pca.project(z.values())?;

    let member_width = config.feature_width();
    let mut design = DMatrix::zeros(n_pairs, n_res * member_width);
    let mut pipelines = Vec::with_capacity(n_res);
    for member in 0..n_res {
        let seed = streams::deesn_pipeline(base_seed, member as u64);
        let (pipeline, features) =
            DeepPipeline::fit(&emb, config, seed, config.burn_in + n_pairs)?;
        let stacked = features.stacked();
        design
            .view_mut((0, member * member_width), (n_pairs, member_width))
            .copy_from(&stacked.rows(config.burn_in, n_pairs));
        pipelines.push(pipeline);
    }

    let feature_standardizer = Standardizer::fit(&design)?;
    let design_std = feature_standardizer.apply(&design)?;
    let responses = alpha
        .rows(config.first_feature_time() + config.lead, n_pairs)
        .into_owned();
    let layer_of = layer_map(config, n_res);
    let chain = gibbs_run(
        &design_std,
        &responses,
        prior,
        &layer_of,
        gibbs,
        streams::deesn_chain(base_seed),
    )?;

    let mut warnings = Vec::new();
    let q = n_res * member_width;
    if n_pairs < q {
        warnings.push(format!(
            "only {n_pairs} training pairs for {q} stacked features; the selection prior is doing heavy lifting — consider fewer members or narrower layers"
        ));
    }

    Ok(DeesnModel {
        config: config.clone(),
        n_res,
        n_inputs: x.ncols(),
        basis,
        input_standardizer,
        feature_standardizer,
        pipelines,
        chain,
        fingerprint: Fingerprint {
            data_sha256: z.content_hash(),
            base_seed,
        },
        warnings,
    })
}

/// Prior-layer index for every column of the stacked member design.
fn layer_map(config: &DeepEsnConfig, n_res: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(n_res * config.feature_width());
    for _ in 0..n_res {
        for _ in 0..config.layer1_width {
            map.push(0);
        }
        for (d, &width) in config.reduced_widths.iter().enumerate() {
            for _ in 0..width {
                map.push(d + 1);
            }
        }
    }
    map
}

impl DeesnModel {
    /// Rebuild a model from stored parts (model deserialization path).
    /// Pipelines are reconstructed from the base seed plus each member's
    /// stored reductions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: DeepEsnConfig,
        n_res: usize,
        n_inputs: usize,
        basis: ResponseBasis,
        input_standardizer: Standardizer,
        feature_standardizer: Standardizer,
        reduction_sets: Vec<Vec<PcaBasis>>,
        chain: SsvsChain,
        fingerprint: Fingerprint,
    ) -> Result<Self, DeepEsnError> {
        config.validate("deesn")?;
        if n_res == 0 {
            return Err(DeepEsnError::NoMembers);
        }
        if reduction_sets.len() != n_res {
            return Err(DeepEsnError::MemberCount {
                expected: n_res,
                found: reduction_sets.len(),
            });
        }
        if chain.coef.is_empty() {
            return Err(DeepEsnError::EmptyChain);
        }
        let q = n_res * config.feature_width();
        if chain.coef[0].nrows() != q {
            return Err(DeepEsnError::FeatureWidth {
                expected: q,
                found: chain.coef[0].nrows(),
            });
        }
        if chain.coef[0].ncols() != basis.n_components() {
            return Err(DeepEsnError::ResponseWidth {
                expected: basis.n_components(),
                found: chain.coef[0].ncols(),
            });
        }
        let input_width = config.embedding.width(n_inputs);
        let mut pipelines = Vec::with_capacity(n_res);
        for (member, reductions) in reduction_sets.into_iter().enumerate() {
            let seed = streams::deesn_pipeline(fingerprint.base_seed, member as u64);
            pipelines.push(DeepPipeline::from_stored(
                &config,
                seed,
                input_width,
                reductions,
                member,
            )?);
        }
        Ok(Self {
            config,
            n_res,
            n_inputs,
            basis,
            input_standardizer,
            feature_standardizer,
            pipelines,
            chain,
            fingerprint,
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &DeepEsnConfig {
        &self.config
    }

    pub fn n_res(&self) -> usize {
        self.n_res
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn basis(&self) -> &ResponseBasis {
        &self.basis
    }

    pub fn input_standardizer(&self) -> &Standardizer {
        &self.input_standardizer
    }

    pub fn feature_standardizer(&self) -> &Standardizer {
        &self.feature_standardizer
    }

    pub fn pipelines(&self) -> &[DeepPipeline] {
        &self.pipelines
    }

    pub fn chain(&self) -> &SsvsChain {
        &self.chain
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Forecast the `horizon` valid times ending `lead` steps past the last
    /// input row, at a 95% central interval. One forecast member per kept
    /// posterior draw.
    pub fn forecast(
        &self,
        recent_inputs: &DMatrix<f64>,
        horizon: usize,
    ) -> Result<EnsembleForecast, DeepEsnError> {
        if horizon == 0 {
            return Err(DeepEsnError::ZeroHorizon);
        }
        if horizon > self.config.lead {
            return Err(DeepEsnError::HorizonBeyondLead {
                horizon,
                lead: self.config.lead,
            });
        }
        let t_rec = recent_inputs.nrows();
        let needed = self.config.first_feature_time() + horizon;
        if t_rec < needed {
            return Err(DeepEsnError::ForecastHistoryTooShort {
                needed,
                found: t_rec,
            });
        }
        let warmup = self.config.embedding.warmup();
        let x_std = self.input_standardizer.apply(recent_inputs)?;
        let emb = build_embeddings(&x_std, &self.config.embedding)?;

        let member_width = self.config.feature_width();
        let mut picked = DMatrix::zeros(horizon, self.n_res * member_width);
        for (member, pipeline) in self.pipelines.iter().enumerate() {
            let stacked = pipeline.run(&emb)?.stacked();
            for h in 0..horizon {
                let state_row = t_rec - horizon + h - warmup;
                picked
                    .view_mut((h, member * member_width), (1, member_width))
                    .copy_from(&stacked.row(state_row));
            }
        }
        let design = self.feature_standardizer.apply(&picked)?;
        let mut rng = streams::deesn_forecast_noise(self.fingerprint.base_seed).stream();
        let member_values = self.draw_predictions(&design, true, &mut rng)?;
        let steps_ahead = (1..=horizon)
            .map(|h| self.config.lead - horizon + h)
            .collect();
        Ok(summarize_members(member_values, 0.95, steps_ahead)?)
    }

    /// Per-draw predictions for every in-sample valid time of `inputs`
    /// (training-style alignment: features at t predict t+lead, truncated
    /// at the last observed time). Used for validation scoring and skill
    /// comparisons.
    pub fn predict_series(
        &self,
        inputs: &DMatrix<f64>,
        with_noise: bool,
    ) -> Result<SeriesPrediction, DeepEsnError> {
        let x_std = self.input_standardizer.apply(inputs)?;
        let emb = build_embeddings(&x_std, &self.config.embedding)?;
        let n_states = emb.nrows();
        let burn_in = self.config.burn_in;
        let lead = self.config.lead;
        if n_states < burn_in + lead + 1 {
            return Err(DeepEsnError::InsufficientHistory {
                needed: self.config.first_feature_time() + lead + 1,
                found: inputs.nrows(),
            });
        }
        let n_rows = n_states - burn_in - lead;
        let member_width = self.config.feature_width();
        let mut design = DMatrix::zeros(n_rows, self.n_res * member_width);
        for (member, pipeline) in self.pipelines.iter().enumerate() {
            let stacked = pipeline.run(&emb)?.stacked();
            design
                .view_mut((0, member * member_width), (n_rows, member_width))
                .copy_from(&stacked.rows(burn_in, n_rows));
        }
        let design_std = self.feature_standardizer.apply(&design)?;
        let mut rng = streams::deesn_forecast_noise(self.fingerprint.base_seed).stream();
        let members = self.draw_predictions(&design_std, with_noise, &mut rng)?;
        let mut mean = DMatrix::zeros(n_rows, self.basis.pca.n_features());
        for m in &members {
            mean += m;
        }
        mean /= members.len() as f64;
        Ok(SeriesPrediction {
            valid_start: self.config.first_feature_time() + lead,
            members,
            mean,
        })
    }

    /// One field prediction per kept posterior draw for the given
    /// standardized design rows, optionally with score and truncation
    /// noise.
    fn draw_predictions(
        &self,
        design_std: &DMatrix<f64>,
        with_noise: bool,
        rng: &mut StreamRng,
    ) -> Result<Vec<DMatrix<f64>>, DeepEsnError> {
        if self.chain.coef.is_empty() {
            return Err(DeepEsnError::EmptyChain);
        }
        let rows = design_std.nrows();
        let n_loc = self.basis.pca.n_features();
        let k = self.basis.n_components();
        let mut out = Vec::with_capacity(self.chain.coef.len());
        for (draw, coef) in self.chain.coef.iter().enumerate() {
            let mut scores = design_std * coef;
            if with_noise {
                let sd = fmath::sqrt(self.chain.noise[draw]);
                for r in 0..rows {
                    for c in 0..k {
                        scores[(r, c)] += sd * rng.normal();
                    }
                }
            }
            let mut field = self.basis.pca.reconstruct(&scores)?;
            if with_noise {
                for r in 0..rows {
                    for loc in 0..n_loc {
                        field[(r, loc)] += self.basis.truncation_sd[loc] * rng.normal();
                    }
                }
            }
            out.push(field);
        }
        Ok(out)
    }
}

/// Bounds for the tuner's search, all inclusive `(low, high)` pairs.
/// The ridge penalty is searched on a log scale between its bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GaSearchSpace {
    pub nu: (f64, f64),
    #[cfg_attr(feature = "serde", serde(rename = "n_h_1", alias = "layer1_width"))]
    pub layer1_width: (usize, usize),
    #[cfg_attr(feature = "serde", serde(rename = "n_h_tilde", alias = "reduced_width"))]
    pub reduced_width: (usize, usize),
    #[cfg_attr(feature = "serde", serde(rename = "r_v", alias = "ridge"))]
    pub ridge: (f64, f64),
    #[cfg_attr(feature = "serde", serde(rename = "m", alias = "extra_lags"))]
    pub extra_lags: (usize, usize),
}

impl Default for GaSearchSpace {
    fn default() -> Self {
        Self {
            nu: (0.2, 1.0),
            layer1_width: (20, 80),
            reduced_width: (5, 20),
            ridge: (1e-6, 1.0),
            extra_lags: (0, 4),
        }
    }
}

impl GaSearchSpace {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.nu.0) || self.nu.1 < self.nu.0 || self.nu.1 > 1.0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "nu",
                self.nu.1,
                "an ordered pair inside [0, 1]",
            ));
        }
        for (key, (lo, hi)) in [
            ("n_h_1", self.layer1_width),
            ("n_h_tilde", self.reduced_width),
        ] {
            if lo == 0 || hi < lo {
                return Err(ConfigError::out_of_range(
                    key_prefix,
                    key,
                    hi as f64,
                    "an ordered pair of positive integers",
                ));
            }
        }
        if !self.ridge.0.is_finite()
            || !self.ridge.1.is_finite()
            || self.ridge.0 <= 0.0
            || self.ridge.1 < self.ridge.0
        {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "r_v",
                self.ridge.1,
                "an ordered pair inside (0, inf)",
            ));
        }
        if self.extra_lags.1 < self.extra_lags.0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "m",
                self.extra_lags.1 as f64,
                "an ordered pair",
            ));
        }
        Ok(())
    }
}

/// Evolution-loop knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GaSettings {
    pub population: usize,
    pub max_generations: usize,
    /// Individuals sampled (with replacement) per parent selection.
    pub tournament: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Best individuals copied unchanged — and unevaluated — into the next
    /// generation.
    pub elitism: usize,
    /// Maximum fitness evaluations, counting the initial population.
    /// Evolution stops before any generation whose children it cannot fund.
    pub budget: Option<usize>,
}

impl Default for GaSettings {
    fn default() -> Self {
        Self {
            population: 20,
            max_generations: 15,
            tournament: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.2,
            elitism: 2,
            budget: None,
        }
    }
}

impl GaSettings {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        if self.population < 2 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "population",
                self.population as f64,
                "[2, inf)",
            ));
        }
        if self.max_generations == 0 {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "max_generations",
                0.0,
                "a positive integer",
            ));
        }
        if self.tournament == 0 || self.tournament > self.population {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "tournament",
                self.tournament as f64,
                "[1, population]",
            ));
        }
        for (key, value) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::out_of_range(key_prefix, key, value, "[0, 1]"));
            }
        }
        if self.elitism >= self.population {
            return Err(ConfigError::out_of_range(
                key_prefix,
                "elitism",
                self.elitism as f64,
                "[0, population)",
            ));
        }
        if let Some(budget) = self.budget {
            if budget < self.population {
                return Err(ConfigError::out_of_range(
                    key_prefix,
                    "budget",
                    budget as f64,
                    "at least `population`",
                ));
            }
        }
        Ok(())
    }
}

/// Best and mean fitness of one generation's population.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationStat {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// Tuner result: the winning configuration, its validation score, the
/// per-generation trace, and how many fitness evaluations were spent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaOutcome {
    pub best: DeepEsnConfig,
    pub best_fitness: f64,
    pub trace: Vec<GenerationStat>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct GeneSpec {
    lo: f64,
    hi: f64,
    integer: bool,
}

/// Genome layout: `depth` memory parameters, `depth − 1` reduced widths,
/// the shared layer width, the log10 ridge penalty, the extra lag count.
fn gene_schema(space: &GaSearchSpace, depth: usize) -> Vec<GeneSpec> {
    let mut schema = Vec::with_capacity(2 * depth + 2);
    for _ in 0..depth {
        schema.push(GeneSpec {
            lo: space.nu.0,
            hi: space.nu.1,
            integer: false,
        });
    }
    for _ in 0..depth - 1 {
        schema.push(GeneSpec {
            lo: space.reduced_width.0 as f64,
            hi: space.reduced_width.1 as f64,
            integer: true,
        });
    }
    schema.push(GeneSpec {
        lo: space.layer1_width.0 as f64,
        hi: space.layer1_width.1 as f64,
        integer: true,
    });
    schema.push(GeneSpec {
        lo: fmath::ln(space.ridge.0) / core::f64::consts::LN_10,
        hi: fmath::ln(space.ridge.1) / core::f64::consts::LN_10,
        integer: false,
    });
    schema.push(GeneSpec {
        lo: space.extra_lags.0 as f64,
        hi: space.extra_lags.1 as f64,
        integer: true,
    });
    schema
}

fn random_gene(spec: &GeneSpec, rng: &mut StreamRng) -> f64 {
    if spec.integer {
        fmath::floor(rng.uniform_in(spec.lo, spec.hi + 1.0)).min(spec.hi)
    } else {
        rng.uniform_in(spec.lo, spec.hi)
    }
}

fn mutate_gene(value: f64, spec: &GeneSpec, rng: &mut StreamRng) -> f64 {
    if spec.integer {
        random_gene(spec, rng)
    } else {
        (value + 0.1 * (spec.hi - spec.lo) * rng.normal()).clamp(spec.lo, spec.hi)
    }
}

fn round_clamped(value: f64, (lo, hi): (usize, usize)) -> usize {
    let rounded = fmath::floor(value + 0.5);
    (rounded.max(lo as f64).min(hi as f64)) as usize
}

/// Map a genome to a full configuration, inheriting everything the tuner
/// does not search from `base`. Reduced widths are capped at the decoded
/// layer width.
fn decode(genome: &[f64], base: &DeepEsnConfig, space: &GaSearchSpace) -> DeepEsnConfig {
    let depth = base.depth();
    let mut config = base.clone();
    for l in 0..depth {
        config.nu[l] = genome[l].clamp(space.nu.0, space.nu.1);
    }
    let layer1 = round_clamped(genome[2 * depth - 1], space.layer1_width);
    config.layer1_width = layer1;
    for d in 0..depth - 1 {
        config.reduced_widths[d] =
            round_clamped(genome[depth + d], space.reduced_width).min(layer1).max(1);
    }
    config.ridge = fmath::exp(genome[2 * depth] * core::f64::consts::LN_10);
    config.embedding.extra_lags = round_clamped(genome[2 * depth + 1], space.extra_lags);
    config
}

fn generation_stat(generation: usize, fits: &[f64]) -> GenerationStat {
    let best = fits.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = fits.iter().sum::<f64>() / fits.len() as f64;
    GenerationStat {
        generation,
        best,
        mean,
    }
}

fn tournament_pick(fits: &[f64], size: usize, rng: &mut StreamRng) -> usize {
    let n = fits.len();
    let mut best = ((rng.uniform() * n as f64) as usize).min(n - 1);
    for _ in 1..size {
        let candidate = ((rng.uniform() * n as f64) as usize).min(n - 1);
        if fits[candidate] < fits[best] {
            best = candidate;
        }
    }
    best
}

/// Generic evolution loop over a fixed-length real genome; lower fitness
/// wins. Returns the best genome ever evaluated, its fitness, the trace,
/// and the evaluation count.
fn evolve<F: FnMut(&[f64]) -> f64>(
    schema: &[GeneSpec],
    settings: &GaSettings,
    mut rng: StreamRng,
    mut eval: F,
) -> (Vec<f64>, f64, Vec<GenerationStat>, usize) {
    let pop_size = settings.population;
    let budget = settings.budget.unwrap_or(usize::MAX);
    let mut evaluations = 0usize;
    let mut best_genome = Vec::new();
    let mut best_fit = f64::INFINITY;

    let mut genomes: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| schema.iter().map(|spec| random_gene(spec, &mut rng)).collect())
        .collect();
    let mut fits: Vec<f64> = genomes
        .iter()
        .map(|genome| {
            let fit = eval(genome);
            evaluations += 1;
            if fit < best_fit {
                best_fit = fit;
                best_genome = genome.clone();
            }
            fit
        })
        .collect();
    if best_genome.is_empty() {
        // Every candidate scored infinite; keep one anyway so the caller
        // can report what was tried.
        best_genome = genomes[0].clone();
    }
    let mut trace = alloc::vec![generation_stat(1, &fits)];

    for generation in 2..=settings.max_generations {
        let children = pop_size - settings.elitism;
        if evaluations + children > budget {
            break;
        }
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&i, &j| fits[i].total_cmp(&fits[j]));
        let mut next_genomes: Vec<Vec<f64>> = order[..settings.elitism]
            .iter()
            .map(|&i| genomes[i].clone())
            .collect();
        let mut next_fits: Vec<f64> =
            order[..settings.elitism].iter().map(|&i| fits[i]).collect();
        while next_genomes.len() < pop_size {
            let p1 = tournament_pick(&fits, settings.tournament, &mut rng);
            let p2 = tournament_pick(&fits, settings.tournament, &mut rng);
            let mut child: Vec<f64> = if rng.uniform() < settings.crossover_prob {
                genomes[p1]
                    .iter()
                    .zip(genomes[p2].iter())
                    .map(|(a, b)| if rng.uniform() < 0.5 { *a } else { *b })
                    .collect()
            } else {
                genomes[p1].clone()
            };
            for (gene, spec) in child.iter_mut().zip(schema.iter()) {
                if rng.uniform() < settings.mutation_prob {
                    *gene = mutate_gene(*gene, spec, &mut rng);
                }
            }
            let fit = eval(&child);
            evaluations += 1;
            if fit < best_fit {
                best_fit = fit;
                best_genome = child.clone();
            }
            next_genomes.push(child);
            next_fits.push(fit);
        }
        genomes = next_genomes;
        fits = next_fits;
        trace.push(generation_stat(generation, &fits));
    }

    (best_genome, best_fit, trace, evaluations)
}

/// Surrogate fitness: fit a plain ridge readout from one pipeline's
/// features to the field on the first four fifths of the series and return
/// mean squared prediction error on the rest. All candidates share the
/// pipeline stream, so differences in score come from the configuration
/// alone.
fn surrogate_mspe(
    z_values: &DMatrix<f64>,
    x: &DMatrix<f64>,
    config: &DeepEsnConfig,
    base_seed: u64,
) -> Result<f64, DeepEsnError> {
    let t_len = z_values.nrows();
    let t_split = t_len * 4 / 5;
    let warmup = config.embedding.warmup();
    let lead = config.lead;
    let burn_in = config.burn_in;
    if t_split <= warmup + burn_in + lead + 1 {
        return Err(DeepEsnError::InsufficientHistory {
            needed: warmup + burn_in + lead + 2,
            found: t_split,
        });
    }
    let standardizer = Standardizer::fit(&x.rows(0, t_split).into_owned())?;
    let x_std = standardizer.apply(x)?;
    let emb = build_embeddings(&x_std, &config.embedding)?;
    let total_rows = emb.nrows();
    let (_, features) = DeepPipeline::fit(
        &emb,
        config,
        streams::ga_fitness(base_seed),
        t_split - warmup,
    )?;
    let stacked = features.stacked();

    let train_end = t_split - warmup - lead;
    let n_train = train_end - burn_in;
    let design = with_intercept(&stacked.rows(burn_in, n_train).into_owned());
    let targets = z_values.rows(warmup + burn_in + lead, n_train).into_owned();
    let coef = ridge_solve(&design, &targets, config.ridge)?;

    let n_val = total_rows - lead - train_end;
    let val_design = with_intercept(&stacked.rows(train_end, n_val).into_owned());
    let preds = val_design * coef;
    let truth = z_values.rows(t_split, n_val);
    let mut sq = 0.0;
    for r in 0..n_val {
        for c in 0..z_values.ncols() {
            let diff = preds[(r, c)] - truth[(r, c)];
            sq += diff * diff;
        }
    }
    Ok(sq / (n_val * z_values.ncols()) as f64)
}

fn with_intercept(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(features.nrows(), features.ncols() + 1, 1.0);
    out.view_mut((0, 1), (features.nrows(), features.ncols()))
        .copy_from(features);
    out
}

/// Search the configuration space with a genetic algorithm.
///
/// The architecture depth is inherited from `base` and not searched; the
/// genome covers per-layer memory, layer and reduction widths, the ridge
/// penalty (log scale), and the embedding's extra lag count. Candidates
/// whose evaluation fails (for example, a reduction wider than the
/// training rows can support) score infinite fitness and die out.
pub fn tune_deep(
    z: &FieldSeries,
    inputs: Option<&DMatrix<f64>>,
    base: &DeepEsnConfig,
    space: &GaSearchSpace,
    settings: &GaSettings,
    base_seed: u64,
) -> Result<GaOutcome, DeepEsnError> {
    base.validate("deesn")?;
    space.validate("search")?;
    settings.validate("tuner")?;
    let x = inputs.unwrap_or_else(|| z.values());
    if x.nrows() != z.t_len() {
        return Err(DeepEsnError::InputRows {
            expected: z.t_len(),
            found: x.nrows(),
        });
    }
    let schema = gene_schema(space, base.depth());
    let rng = streams::ga(base_seed).stream();
    let eval = |genome: &[f64]| {
        let config = decode(genome, base, space);
        surrogate_mspe(z.values(), x, &config, base_seed).unwrap_or(f64::INFINITY)
    };
    let (best_genome, best_fitness, trace, evaluations) = evolve(&schema, settings, rng, eval);
    if !best_fitness.is_finite() {
        return Err(DeepEsnError::TuningFailed);
    }
    Ok(GaOutcome {
        best: decode(&best_genome, base, space),
        best_fitness,
        trace,
        evaluations,
    })
}
