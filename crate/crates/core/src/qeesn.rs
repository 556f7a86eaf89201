//! Shallow reservoir ensemble with a quadratic ridge readout.
//!
//! Each member draws its own sparse reservoir from a member-id stream, runs
//! the tanh state recursion over standardized embedded inputs, and fits a
//! ridge readout from `[states | states²]` to the field `lead` steps ahead.
//! The ensemble's forecast spread comes from reservoir variability plus
//! optional observation-noise draws at the fitted residual scale.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::config::ConfigError;
use crate::field::{FieldError, FieldSeries};
use crate::numerics::{quantile, ridge_solve, NumericsError, RngStream, Standardizer};
use crate::reservoir::{
    build_embeddings, quadratic_features, EmbeddingSpec, Reservoir, ReservoirError,
    ReservoirParams,
};
use crate::streams;

/// Errors from ensemble fitting and forecasting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QeesnError {
    #[error("ensemble must have at least one member")]
    NoMembers,
    #[error("input rows ({found}) must match field length ({expected})")]
    InputRows { expected: usize, found: usize },
    #[error("training history too short: need at least {needed} time points for this embedding/burn-in/lead, got {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("forecast history too short: need at least {needed} input rows, got {found}")]
    ForecastHistoryTooShort { needed: usize, found: usize },
    #[error("horizon {horizon} exceeds the trained lead {lead}; each forecast needs inputs from horizon−lead steps ahead")]
    HorizonBeyondLead { horizon: usize, lead: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("interval level must lie strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),
    #[error("cross-validation grid `{key}` is empty")]
    EmptyGrid { key: &'static str },
    #[error("validation window of {val_len} steps is shorter than the lead {lead}")]
    ValidationTooShort { val_len: usize, lead: usize },
    #[error("member {index} was not drawn from its member-id stream; assemble members in id order")]
    MemberOrder { index: usize },
    #[error("member {index} readout shape does not match the ensemble")]
    MemberShape { index: usize },
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Hyperparameters for the shallow ensemble.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QeesnHyper {
    pub reservoir: ReservoirParams,
    pub embedding: EmbeddingSpec,
    /// Ridge penalty for the readout (JSON key `r_v`).
    #[cfg_attr(feature = "serde", serde(rename = "r_v", alias = "ridge"))]
    pub ridge: f64,
    /// Forecast lead in time steps: features at t predict the field at t+lead.
    pub lead: usize,
    /// State rows dropped from the front before fitting, so the readout
    /// never sees the transient from the zero initial state.
    pub burn_in: usize,
    /// Add Gaussian observation noise at the fitted residual scale to
    /// member forecasts.
    pub add_noise: bool,
}

impl Default for QeesnHyper {
    fn default() -> Self {
        Self {
            reservoir: ReservoirParams::default(),
            embedding: EmbeddingSpec::default(),
            ridge: 0.1,
            lead: 1,
            burn_in: 30,
            add_noise: true,
        }
    }
}

impl QeesnHyper {
    pub fn validate(&self, key_prefix: &str) -> Result<(), ConfigError> {
        let reservoir_prefix = format!("{key_prefix}.reservoir");
        self.reservoir.validate(&reservoir_prefix)?;
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

    /// First time index with a usable training feature row.
    fn first_feature_time(&self) -> usize {
        self.embedding.warmup() + self.burn_in
    }
}

/// One fitted member: the stream that reproduces its reservoir, the
/// readout mapping `[states | states²]` to the field, and the mean squared
/// training residual.
#[derive(Debug, Clone, PartialEq)]
pub struct QeesnMember {
    pub reservoir_seed: RngStream,
    /// `n_loc × (2·n_h + 1)`; intercept column first, then the linear and
    /// quadratic blocks.
    pub readout: DMatrix<f64>,
    pub sigma2_eps: f64,
}

/// What a trained model remembers about its training run.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fingerprint {
    pub data_sha256: String,
    pub base_seed: u64,
}

/// Ensemble forecast over a fixed set of future valid times.
///
/// Row `h` of each matrix is the forecast `steps_ahead[h]` steps past the
/// last supplied input time; columns are location ids. `mean` is the exact
/// arithmetic average of `member_values`; `lower`/`upper` are cell-wise
/// ensemble quantiles at the given central-interval level.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub member_values: Vec<DMatrix<f64>>,
    pub mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub level: f64,
    pub steps_ahead: Vec<usize>,
}

/// Member predictions over every usable in-sample valid time.
///
/// Row `i` is the prediction valid at time index `valid_start + i` of the
/// supplied input series; the last row is valid at the final observed time.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPrediction {
    pub valid_start: usize,
    pub members: Vec<DMatrix<f64>>,
    pub mean: DMatrix<f64>,
}

/// Fit one member. Members are independent given `(base_seed, member_id)`,
/// so they may be fitted in any order or in parallel; assemble results in
/// member-id order.
pub fn fit_member(
    z: &FieldSeries,
    inputs: Option<&DMatrix<f64>>,
    hyper: &QeesnHyper,
    member_id: usize,
    base_seed: u64,
) -> Result<QeesnMember, QeesnError> {
    let x = inputs.unwrap_or_else(|| z.values());
    check_input_rows(z, x)?;
    let standardizer = Standardizer::fit(x)?;
    let x_std = standardizer.apply(x)?;
    let emb = build_embeddings(&x_std, &hyper.embedding)?;
    let seed = streams::qeesn_member(base_seed, member_id as u64);
    let reservoir = Reservoir::draw(&hyper.reservoir, emb.ncols(), seed)?;
    let states = reservoir.run_states_from_zero(&emb)?;

    let n_pairs = training_pairs(z.t_len(), hyper)?;
    let features = quadratic_features(&states.rows(hyper.burn_in, n_pairs).into_owned());
    let responses = z
        .values()
        .rows(hyper.first_feature_time() + hyper.lead, n_pairs)
        .into_owned();
    let coef = ridge_solve(&features, &responses, hyper.ridge)?;
    let fitted = &features * &coef;
    let sigma2_eps = (&responses - fitted)
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        / (n_pairs * z.n_loc()) as f64;
    Ok(QeesnMember {
        reservoir_seed: seed,
        readout: coef.transpose(),
        sigma2_eps,
    })
}

fn check_input_rows(z: &FieldSeries, x: &DMatrix<f64>) -> Result<(), QeesnError> {
    if x.nrows() != z.t_len() {
        return Err(QeesnError::InputRows {
            expected: z.t_len(),
            found: x.nrows(),
        });
    }
    Ok(())
}

fn training_pairs(t_len: usize, hyper: &QeesnHyper) -> Result<usize, QeesnError> {
    let needed = hyper.first_feature_time() + hyper.lead + 1;
    if t_len < needed {
        return Err(QeesnError::InsufficientHistory {
            needed,
            found: t_len,
        });
    }
    Ok(t_len - needed + 1)
}

/// Parametric-bootstrap ensemble of independently drawn reservoirs sharing
/// one standardizer and readout recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct QeesnEnsemble {
    members: Vec<QeesnMember>,
    hyper: QeesnHyper,
    standardizer: Standardizer,
    n_inputs: usize,
    fingerprint: Fingerprint,
    warnings: Vec<String>,
}

impl QeesnEnsemble {
    /// Fit `n_res` members sequentially in member-id order.
    pub fn fit(
        z: &FieldSeries,
        inputs: Option<&DMatrix<f64>>,
        hyper: &QeesnHyper,
        n_res: usize,
        base_seed: u64,
    ) -> Result<Self, QeesnError> {
        hyper.validate("qeesn")?;
        if n_res == 0 {
            return Err(QeesnError::NoMembers);
        }
        let mut members = Vec::with_capacity(n_res);
        for member_id in 0..n_res {
            members.push(fit_member(z, inputs, hyper, member_id, base_seed)?);
        }
        Self::from_members(z, inputs, hyper, members, base_seed)
    }

    /// Assemble an ensemble from members fitted elsewhere (possibly in
    /// parallel). Members must be in member-id order: each stored seed is
    /// checked against its member-id stream.
    pub fn from_members(
        z: &FieldSeries,
        inputs: Option<&DMatrix<f64>>,
        hyper: &QeesnHyper,
        members: Vec<QeesnMember>,
        base_seed: u64,
    ) -> Result<Self, QeesnError> {
        hyper.validate("qeesn")?;
        if members.is_empty() {
            return Err(QeesnError::NoMembers);
        }
        let x = inputs.unwrap_or_else(|| z.values());
        check_input_rows(z, x)?;
        let readout_shape = (z.n_loc(), 2 * hyper.reservoir.n_h + 1);
        for (index, member) in members.iter().enumerate() {
            if member.reservoir_seed != streams::qeesn_member(base_seed, index as u64) {
                return Err(QeesnError::MemberOrder { index });
            }
            if member.readout.shape() != readout_shape {
                return Err(QeesnError::MemberShape { index });
            }
        }
        let standardizer = Standardizer::fit(x)?;
        let n_pairs = training_pairs(z.t_len(), hyper)?;
        let mut warnings = Vec::new();
        if n_pairs < 2 * hyper.reservoir.n_h + 1 {
            warnings.push(format!(
                "only {n_pairs} training pairs for {} readout features; readout is underdetermined — consider a shorter embedding or smaller reservoir",
                2 * hyper.reservoir.n_h + 1
            ));
        }
        Ok(Self {
            members,
            hyper: hyper.clone(),
            standardizer,
            n_inputs: x.ncols(),
            fingerprint: Fingerprint {
                data_sha256: z.content_hash(),
                base_seed,
            },
            warnings,
        })
    }

    pub fn members(&self) -> &[QeesnMember] {
        &self.members
    }

    pub fn hyper(&self) -> &QeesnHyper {
        &self.hyper
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Rebuild an ensemble from stored parts (model deserialization path).
    /// The fingerprint is trusted as stored; member seeds are still checked.
    pub fn from_stored(
        members: Vec<QeesnMember>,
        hyper: QeesnHyper,
        standardizer: Standardizer,
        n_inputs: usize,
        fingerprint: Fingerprint,
    ) -> Result<Self, QeesnError> {
        if members.is_empty() {
            return Err(QeesnError::NoMembers);
        }
        for (index, member) in members.iter().enumerate() {
            if member.reservoir_seed != streams::qeesn_member(fingerprint.base_seed, index as u64)
            {
                return Err(QeesnError::MemberOrder { index });
            }
        }
        Ok(Self {
            members,
            hyper,
            standardizer,
            n_inputs,
            fingerprint,
            warnings: Vec::new(),
        })
    }

    /// Forecast the `horizon` valid times ending `lead` steps past the last
    /// input row, at a 95% central interval.
    pub fn forecast(
        &self,
        recent_inputs: &DMatrix<f64>,
        horizon: usize,
    ) -> Result<EnsembleForecast, QeesnError> {
        self.forecast_level(recent_inputs, horizon, 0.95)
    }

    /// As [`forecast`](Self::forecast) with a caller-chosen interval level.
    pub fn forecast_level(
        &self,
        recent_inputs: &DMatrix<f64>,
        horizon: usize,
        level: f64,
    ) -> Result<EnsembleForecast, QeesnError> {
        if horizon == 0 {
            return Err(QeesnError::ZeroHorizon);
        }
        if horizon > self.hyper.lead {
            return Err(QeesnError::HorizonBeyondLead {
                horizon,
                lead: self.hyper.lead,
            });
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(QeesnError::InvalidLevel(level));
        }
        let t_rec = recent_inputs.nrows();
        let needed = self.hyper.first_feature_time() + horizon;
        if t_rec < needed {
            return Err(QeesnError::ForecastHistoryTooShort {
                needed,
                found: t_rec,
            });
        }
        let x_std = self.standardizer.apply(recent_inputs)?;
        let emb = build_embeddings(&x_std, &self.hyper.embedding)?;
        let warmup = self.hyper.embedding.warmup();
        let n_h = self.hyper.reservoir.n_h;
        let n_loc = self.members[0].readout.nrows();

        let mut member_values = Vec::with_capacity(self.members.len());
        for (member_id, member) in self.members.iter().enumerate() {
            let reservoir =
                Reservoir::draw(&self.hyper.reservoir, emb.ncols(), member.reservoir_seed)?;
            let states = reservoir.run_states_from_zero(&emb)?;
            let mut picked = DMatrix::zeros(horizon, n_h);
            for h in 0..horizon {
                let state_row = t_rec - horizon + h - warmup;
                picked.row_mut(h).copy_from(&states.row(state_row));
            }
            let mut preds = quadratic_features(&picked) * member.readout.transpose();
            if self.hyper.add_noise {
                let mut rng = streams::qeesn_forecast_noise(
                    self.fingerprint.base_seed,
                    member_id as u64,
                )
                .stream();
                let sd = crate::fmath::sqrt(member.sigma2_eps);
                for h in 0..horizon {
                    for loc in 0..n_loc {
                        preds[(h, loc)] += sd * rng.normal();
                    }
                }
            }
            member_values.push(preds);
        }
        let steps_ahead = (1..=horizon)
            .map(|h| self.hyper.lead - horizon + h)
            .collect();
        Ok(summarize_members(member_values, level, steps_ahead)?)
    }

    /// Member predictions for every in-sample valid time of `inputs`
    /// (training-style alignment: features at t predict t+lead, truncated
    /// at the last observed time). Used for validation scoring and skill
    /// comparisons.
    pub fn predict_series(
        &self,
        inputs: &DMatrix<f64>,
        with_noise: bool,
    ) -> Result<SeriesPrediction, QeesnError> {
        let x_std = self.standardizer.apply(inputs)?;
        let emb = build_embeddings(&x_std, &self.hyper.embedding)?;
        let n_states = emb.nrows();
        let burn_in = self.hyper.burn_in;
        let lead = self.hyper.lead;
        if n_states < burn_in + lead + 1 {
            return Err(QeesnError::InsufficientHistory {
                needed: self.hyper.first_feature_time() + lead + 1,
                found: inputs.nrows(),
            });
        }
        let n_rows = n_states - burn_in - lead;
        let n_loc = self.members[0].readout.nrows();
        let mut members = Vec::with_capacity(self.members.len());
        let mut mean = DMatrix::zeros(n_rows, n_loc);
        for (member_id, member) in self.members.iter().enumerate() {
            let reservoir =
                Reservoir::draw(&self.hyper.reservoir, emb.ncols(), member.reservoir_seed)?;
            let states = reservoir.run_states_from_zero(&emb)?;
            let features = quadratic_features(&states.rows(burn_in, n_rows).into_owned());
            let mut preds = features * member.readout.transpose();
            if with_noise {
                let mut rng = streams::qeesn_forecast_noise(
                    self.fingerprint.base_seed,
                    member_id as u64,
                )
                .stream();
                let sd = crate::fmath::sqrt(member.sigma2_eps);
                for i in 0..n_rows {
                    for loc in 0..n_loc {
                        preds[(i, loc)] += sd * rng.normal();
                    }
                }
            }
            mean += &preds;
            members.push(preds);
        }
        mean /= members.len() as f64;
        Ok(SeriesPrediction {
            valid_start: self.hyper.first_feature_time() + lead,
            members,
            mean,
        })
    }
}

/// Average member matrices and take cell-wise ensemble quantiles.
pub(crate) fn summarize_members(
    member_values: Vec<DMatrix<f64>>,
    level: f64,
    steps_ahead: Vec<usize>,
) -> Result<EnsembleForecast, NumericsError> {
    let n_members = member_values.len();
    let (rows, cols) = member_values[0].shape();
    let mut mean = DMatrix::zeros(rows, cols);
    for m in &member_values {
        mean += m;
    }
    mean /= n_members as f64;

    let alpha = (1.0 - level) / 2.0;
    let mut lower = DMatrix::zeros(rows, cols);
    let mut upper = DMatrix::zeros(rows, cols);
    let mut cell = alloc::vec![0.0; n_members];
    for i in 0..rows {
        for j in 0..cols {
            for (k, m) in member_values.iter().enumerate() {
                cell[k] = m[(i, j)];
            }
            lower[(i, j)] = quantile(&cell, alpha)?;
            upper[(i, j)] = quantile(&cell, 1.0 - alpha)?;
        }
    }
    Ok(EnsembleForecast {
        member_values,
        mean,
        lower,
        upper,
        level,
        steps_ahead,
    })
}

/// Cross-validation grid over reservoir width, memory, and ridge penalty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CvGrid {
    pub n_h: Vec<usize>,
    pub nu: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "r_v", alias = "ridge"))]
    pub ridge: Vec<f64>,
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvTrial {
    pub n_h: usize,
    pub nu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "r_v"))]
    pub ridge: f64,
    pub mspe: f64,
}

/// Selected hyperparameters plus the full trial trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub selected: QeesnHyper,
    pub trials: Vec<CvTrial>,
}

/// Grid search scored by ensemble-mean MSPE on a time-ordered 80/20 split.
///
/// Every grid point trains on the first 80% of the time axis and is scored
/// on the final 20%; ties prefer the smaller width, then the smaller
/// memory, then the larger penalty.
pub fn cross_validate(
    z: &FieldSeries,
    inputs: Option<&DMatrix<f64>>,
    grid: &CvGrid,
    base: &QeesnHyper,
    n_res: usize,
    base_seed: u64,
) -> Result<CvOutcome, QeesnError> {
    if grid.n_h.is_empty() {
        return Err(QeesnError::EmptyGrid { key: "n_h" });
    }
    if grid.nu.is_empty() {
        return Err(QeesnError::EmptyGrid { key: "nu" });
    }
    if grid.ridge.is_empty() {
        return Err(QeesnError::EmptyGrid { key: "r_v" });
    }
    let t_len = z.t_len();
    let t_split = t_len * 4 / 5;
    let val_len = t_len - t_split;
    if val_len < base.lead {
        return Err(QeesnError::ValidationTooShort {
            val_len,
            lead: base.lead,
        });
    }
    if t_split == 0 {
        return Err(QeesnError::InsufficientHistory {
            needed: base.first_feature_time() + base.lead + 1,
            found: 0,
        });
    }

    let mut n_h_values = grid.n_h.clone();
    n_h_values.sort_unstable();
    n_h_values.dedup();
    let mut nu_values = grid.nu.clone();
    nu_values.sort_unstable_by(f64::total_cmp);
    nu_values.dedup();
    let mut ridge_values = grid.ridge.clone();
    ridge_values.sort_unstable_by(|a, b| f64::total_cmp(b, a));
    ridge_values.dedup();

    let x_full = inputs.unwrap_or_else(|| z.values());
    check_input_rows(z, x_full)?;
    let train_z = z.window(0, t_split)?;
    let train_x = x_full.rows(0, t_split).into_owned();
    let truth = z.values().rows(t_split, val_len).into_owned();

    let mut trials = Vec::new();
    let mut best: Option<(f64, QeesnHyper)> = None;
    for &n_h in &n_h_values {
        for &nu in &nu_values {
            for &ridge in &ridge_values {
                let mut hyper = base.clone();
                hyper.reservoir.n_h = n_h;
                hyper.reservoir.nu = nu;
                hyper.ridge = ridge;
                hyper.validate("cv")?;
                let ensemble =
                    QeesnEnsemble::fit(&train_z, Some(&train_x), &hyper, n_res, base_seed)?;
                let series = ensemble.predict_series(x_full, false)?;
                if series.valid_start > t_split {
                    return Err(QeesnError::InsufficientHistory {
                        needed: series.valid_start + 1,
                        found: t_split,
                    });
                }
                let offset = t_split - series.valid_start;
                let val_pred = series.mean.rows(offset, val_len);
                let mut sq_sum = 0.0;
                for (p, t) in val_pred.iter().zip(truth.iter()) {
                    let d = p - t;
                    sq_sum += d * d;
                }
                let mspe = sq_sum / (val_len * z.n_loc()) as f64;
                trials.push(CvTrial {
                    n_h,
                    nu,
                    ridge,
                    mspe,
                });
                let better = match &best {
                    None => true,
                    Some((best_mspe, _)) => mspe < *best_mspe,
                };
                if better {
                    best = Some((mspe, hyper));
                }
            }
        }
    }
    let (_, selected) = best.expect("non-empty grid produces at least one trial");
    Ok(CvOutcome { selected, trials })
}
