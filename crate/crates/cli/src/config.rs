//! The JSON config file shared by `simulate`, `train`, and `tune`.
//!
//! One file describes a whole experiment: which model to fit, its
//! hyperparameters, how to simulate data for it, and how to tune it. Each
//! subcommand reads only the blocks it needs, so a single config can drive
//! the full pipeline. Unknown keys are rejected so a typo fails loudly
//! instead of silently falling back to a default.

use std::path::Path;

use reservoir_cast_core::baselines::{CovarianceParams, TwoScaleParams};
use reservoir_cast_core::config::ConfigError;
use reservoir_cast_core::deep::{DeepEsnConfig, GaSearchSpace, GaSettings};
use reservoir_cast_core::qeesn::{CvGrid, QeesnHyper};
use reservoir_cast_core::ssvs::{GibbsSettings, SsvsPrior};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io_util::read_bytes;
use crate::manifest::hex_digest;

/// Which forecaster a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qeesn,
    Deesn,
    Kriging,
    Persistence,
    Climatology,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qeesn => "qeesn",
            ModelKind::Deesn => "deesn",
            ModelKind::Kriging => "kriging",
            ModelKind::Persistence => "persistence",
            ModelKind::Climatology => "climatology",
        }
    }
}

/// Top-level config. `model` and the matching block drive `train`; the
/// other blocks are optional riders used by `simulate` and `tune`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub base_seed: u64,
    /// Ensemble size for the reservoir models.
    #[serde(default = "default_n_res")]
    pub n_res: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qeesn: Option<QeesnHyper>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deesn: Option<DeesnBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kriging: Option<KrigingBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneBlock>,
}

fn default_n_res() -> usize {
    30
}

/// Deep-model block: reservoir stack, response basis size, readout prior,
/// and sampler length.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeesnBlock {
    #[serde(default)]
    pub esn: DeepEsnConfig,
    /// Response principal components fed to the readout.
    #[serde(default = "default_basis_k")]
    pub basis_k: usize,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub gibbs: GibbsSettings,
}

impl Default for DeesnBlock {
    fn default() -> Self {
        DeesnBlock {
            esn: DeepEsnConfig::default(),
            basis_k: default_basis_k(),
            prior: PriorSpec::default(),
            gibbs: GibbsSettings::default(),
        }
    }
}

fn default_basis_k() -> usize {
    5
}

/// A prior setting given either once for every layer or per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    PerLayer(Vec<f64>),
}

impl ScalarOrVec {
    fn resolve(&self, path: &str, layers: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; layers]),
            ScalarOrVec::PerLayer(vs) => {
                if vs.len() != layers {
                    return Err(ConfigError::LengthMismatch {
                        path: path.to_string(),
                        expected: layers,
                        found: vs.len(),
                    });
                }
                Ok(vs.clone())
            }
        }
    }
}

/// Spike-and-slab prior spec; scalars broadcast across feature layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default = "default_slab")]
    pub sigma2_slab: ScalarOrVec,
    #[serde(default = "default_spike")]
    pub sigma2_spike: ScalarOrVec,
    #[serde(default = "default_pi")]
    pub pi: ScalarOrVec,
    #[serde(default = "default_alpha_eta")]
    pub alpha_eta: f64,
    #[serde(default = "default_beta_eta")]
    pub beta_eta: f64,
}

fn default_slab() -> ScalarOrVec {
    ScalarOrVec::Scalar(10.0)
}
fn default_spike() -> ScalarOrVec {
    ScalarOrVec::Scalar(0.001)
}
fn default_pi() -> ScalarOrVec {
    ScalarOrVec::Scalar(0.2)
}
fn default_alpha_eta() -> f64 {
    0.01
}
fn default_beta_eta() -> f64 {
    0.01
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            sigma2_slab: default_slab(),
            sigma2_spike: default_spike(),
            pi: default_pi(),
            alpha_eta: default_alpha_eta(),
            beta_eta: default_beta_eta(),
        }
    }
}

impl PriorSpec {
    /// Expand to one (slab, spike, pi) triple per feature layer.
    pub fn resolve(&self, layers: usize) -> Result<SsvsPrior, ConfigError> {
        let prior = SsvsPrior {
            slab: self.sigma2_slab.resolve("deesn.prior.sigma2_slab", layers)?,
            spike: self
                .sigma2_spike
                .resolve("deesn.prior.sigma2_spike", layers)?,
            pi: self.pi.resolve("deesn.prior.pi", layers)?,
            alpha_eta: self.alpha_eta,
            beta_eta: self.beta_eta,
        };
        prior.validate("deesn.prior")?;
        Ok(prior)
    }
}

/// Space-time covariance plus how much trailing history the predictor sees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingBlock {
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_rho")]
    pub rho_s: f64,
    #[serde(default = "default_rho")]
    pub rho_t: f64,
    #[serde(default = "default_nugget")]
    pub nugget: f64,
    /// Trailing time points used as the conditioning set.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_sigma2() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    1.0
}
fn default_nugget() -> f64 {
    0.1
}
fn default_window() -> usize {
    5
}

impl Default for KrigingBlock {
    fn default() -> Self {
        KrigingBlock {
            sigma2: default_sigma2(),
            rho_s: default_rho(),
            rho_t: default_rho(),
            nugget: default_nugget(),
            window: default_window(),
        }
    }
}

impl KrigingBlock {
    pub fn params(&self) -> CovarianceParams {
        CovarianceParams {
            sigma2: self.sigma2,
            rho_s: self.rho_s,
            rho_t: self.rho_t,
            nugget: self.nugget,
        }
    }
}

/// Synthetic-data settings for `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default = "default_t_len")]
    pub t_len: usize,
    /// Leading steps dropped so the series starts past the transient.
    #[serde(default = "default_discard")]
    pub discard: usize,
    #[serde(default)]
    pub gqn: GqnBlock,
    #[serde(default)]
    pub linear: LinearBlock,
    #[serde(default)]
    pub two_scale: TwoScaleParams,
}

fn default_t_len() -> usize {
    200
}
fn default_discard() -> usize {
    100
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock {
            t_len: default_t_len(),
            discard: default_discard(),
            gqn: GqnBlock::default(),
            linear: LinearBlock::default(),
            two_scale: TwoScaleParams::default(),
        }
    }
}

/// Size and strength of the randomly drawn quadratic state process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GqnBlock {
    #[serde(default = "default_gqn_p")]
    pub p: usize,
    #[serde(default = "default_gqn_n_y")]
    pub n_y: usize,
    /// Multiplier on the drawn quadratic coefficients; 1 keeps the stable
    /// defaults, large values push the dynamics toward blow-up.
    #[serde(default = "default_quad_scale")]
    pub quad_scale: f64,
    /// State noise standard deviation; `null` keeps the drawn default.
    #[serde(default)]
    pub noise_sd: Option<f64>,
}

fn default_gqn_p() -> usize {
    5
}
fn default_gqn_n_y() -> usize {
    50
}
fn default_quad_scale() -> f64 {
    1.0
}

impl Default for GqnBlock {
    fn default() -> Self {
        GqnBlock {
            p: default_gqn_p(),
            n_y: default_gqn_n_y(),
            quad_scale: default_quad_scale(),
            noise_sd: None,
        }
    }
}

/// Size and stability of the randomly drawn linear state process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    #[serde(default = "default_linear_p")]
    pub p: usize,
    #[serde(default = "default_linear_n_y")]
    pub n_y: usize,
    /// Spectral radius the transition matrix is scaled to.
    #[serde(default = "default_linear_rho")]
    pub rho: f64,
    #[serde(default = "default_linear_noise")]
    pub noise_sd: f64,
}

fn default_linear_p() -> usize {
    3
}
fn default_linear_n_y() -> usize {
    10
}
fn default_linear_rho() -> f64 {
    0.8
}
fn default_linear_noise() -> f64 {
    0.3
}

impl Default for LinearBlock {
    fn default() -> Self {
        LinearBlock {
            p: default_linear_p(),
            n_y: default_linear_n_y(),
            rho: default_linear_rho(),
            noise_sd: default_linear_noise(),
        }
    }
}

/// Search settings for `tune`: a grid for the shallow model, a genetic
/// search for the deep one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneBlock {
    #[serde(default = "default_grid")]
    pub grid: CvGrid,
    #[serde(default)]
    pub ga_space: GaSearchSpace,
    #[serde(default)]
    pub ga: GaSettings,
}

fn default_grid() -> CvGrid {
    CvGrid {
        n_h: vec![20, 50],
        nu: vec![0.3, 0.6, 0.9],
        ridge: vec![1e-4, 1e-2, 1.0],
    }
}

impl Default for TuneBlock {
    fn default() -> Self {
        TuneBlock {
            grid: default_grid(),
            ga_space: GaSearchSpace::default(),
            ga: GaSettings::default(),
        }
    }
}

impl ModelConfig {
    /// Check every block that is present, not just the selected model's, so
    /// a config is either wholly good or rejected up front.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(hyper) = &self.qeesn {
            hyper.validate("qeesn")?;
        }
        if let Some(deesn) = &self.deesn {
            deesn.esn.validate("deesn.esn")?;
            if deesn.basis_k == 0 {
                return Err(ConfigError::OutOfRange {
                    path: "deesn.basis_k".to_string(),
                    value: "0".to_string(),
                    allowed: "at least 1".to_string(),
                });
            }
            deesn.prior.resolve(deesn.esn.reduced_widths.len() + 1)?;
            deesn.gibbs.validate("deesn.gibbs")?;
        }
        if let Some(kriging) = &self.kriging {
            kriging.params().validate("kriging")?;
            if kriging.window == 0 {
                return Err(ConfigError::OutOfRange {
                    path: "kriging.window".to_string(),
                    value: "0".to_string(),
                    allowed: "at least 1".to_string(),
                });
            }
        }
        if let Some(sim) = &self.simulate {
            sim.validate()?;
        }
        if let Some(tune) = &self.tune {
            tune.ga_space.validate("tune.ga_space")?;
            tune.ga.validate("tune.ga")?;
        }
        match self.model {
            ModelKind::Qeesn | ModelKind::Deesn => {
                if self.n_res == 0 {
                    return Err(ConfigError::OutOfRange {
                        path: "n_res".to_string(),
                        value: "0".to_string(),
                        allowed: "at least 1".to_string(),
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The shallow hyperparameters to train with (block or defaults).
    pub fn qeesn_hyper(&self) -> QeesnHyper {
        self.qeesn.clone().unwrap_or_default()
    }

    /// The deep block to train with (block or defaults).
    pub fn deesn_block(&self) -> DeesnBlock {
        self.deesn.clone().unwrap_or_default()
    }
}

impl SimulateBlock {
    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, value: f64, allowed: &str| ConfigError::OutOfRange {
            path: format!("simulate.{path}"),
            value: format!("{value}"),
            allowed: allowed.to_string(),
        };
        if self.t_len == 0 {
            return Err(bad("t_len", 0.0, "at least 1"));
        }
        if self.gqn.p == 0 {
            return Err(bad("gqn.p", 0.0, "at least 1"));
        }
        if self.gqn.n_y < self.gqn.p {
            return Err(bad("gqn.n_y", self.gqn.n_y as f64, "at least gqn.p"));
        }
        if !(self.gqn.quad_scale >= 0.0 && self.gqn.quad_scale.is_finite()) {
            return Err(bad(
                "gqn.quad_scale",
                self.gqn.quad_scale,
                "finite nonnegative values",
            ));
        }
        if let Some(sd) = self.gqn.noise_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(bad("gqn.noise_sd", sd, "positive finite values"));
            }
        }
        if self.linear.p == 0 {
            return Err(bad("linear.p", 0.0, "at least 1"));
        }
        if self.linear.n_y == 0 {
            return Err(bad("linear.n_y", 0.0, "at least 1"));
        }
        if !(self.linear.rho > 0.0 && self.linear.rho < 1.0) {
            return Err(bad("linear.rho", self.linear.rho, "the open interval (0, 1)"));
        }
        if !(self.linear.noise_sd > 0.0) {
            return Err(bad("linear.noise_sd", self.linear.noise_sd, "positive values"));
        }
        self.two_scale.validate("simulate.two_scale")?;
        Ok(())
    }
}

/// Parse and validate a config file; returns it with the file's SHA-256
/// for the run manifest.
pub fn load_config(path: &Path) -> Result<(ModelConfig, String), CliError> {
    let bytes = read_bytes(path)?;
    let digest = hex_digest(&bytes);
    let config: ModelConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok((config, digest))
}
