//! Model directory layout: what `train` writes and `forecast` reads back.
//!
//! Reservoir ensembles split into a small JSON descriptor plus flat binary
//! arrays (little-endian u64/f64), since readout matrices and Gibbs draws
//! are far too large for JSON. The simple baselines are JSON only. Every
//! directory also carries the training `locations.csv` and a run manifest.
//!
//! Reservoir weights are never stored: members record only which RNG
//! stream drew them, and loading replays that stream. The loaders
//! cross-check every dimension in the binary headers against the JSON
//! descriptor, so a mixed-up pair of files fails before any forecast.

use std::path::Path;

use reservoir_cast_core::baselines::CovarianceParams;
use reservoir_cast_core::deep::{DeepEsnConfig, DeesnModel, ResponseBasis};
use reservoir_cast_core::field::LocationRecord;
use reservoir_cast_core::numerics::{PcaBasis, Standardizer};
use reservoir_cast_core::qeesn::{Fingerprint, QeesnEnsemble, QeesnHyper, QeesnMember};
use reservoir_cast_core::ssvs::{GibbsSettings, SsvsChain};
use reservoir_cast_core::{streams, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{read_locations, write_locations_csv};
use crate::error::CliError;
use crate::io_util::{atomic_write, read_bytes};

const MEMBERS_MAGIC: &[u8; 4] = b"RCQM";
const BASIS_MAGIC: &[u8; 4] = b"RCBA";
const CHAIN_MAGIC: &[u8; 4] = b"RCCH";
const FORMAT_VERSION: u64 = 1;

/// `model.json` for everything except the deep model.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelJson {
    Qeesn(QeesnJson),
    Kriging(KrigingJson),
    Persistence(PersistenceJson),
    Climatology(ClimatologyJson),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QeesnJson {
    pub hyper: QeesnHyper,
    pub n_res: usize,
    pub n_inputs: usize,
    pub standardizer: Standardizer,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KrigingJson {
    pub params: CovarianceParams,
    pub window: usize,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PersistenceJson {
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClimatologyJson {
    /// Per-location training mean, in location-id order.
    pub mean: Vec<f64>,
    pub fingerprint: Fingerprint,
}

/// `deesn.json`: everything about the deep model that is not a big array.
#[derive(Debug, Serialize, Deserialize)]
pub struct DeesnJson {
    /// Always "deesn"; keeps the descriptor self-identifying.
    pub model: String,
    pub esn: DeepEsnConfig,
    pub n_res: usize,
    pub basis_k: usize,
    pub n_inputs: usize,
    pub gibbs: GibbsSettings,
    pub input_standardizer: Standardizer,
    pub feature_standardizer: Standardizer,
    pub fingerprint: Fingerprint,
}

/// A trained model read back from disk, ready to forecast.
pub enum LoadedModel {
    Qeesn(QeesnEnsemble),
    Deesn(DeesnModel),
    Kriging {
        params: CovarianceParams,
        window: usize,
        fingerprint: Fingerprint,
    },
    Persistence {
        fingerprint: Fingerprint,
    },
    Climatology {
        mean: DVector<f64>,
        fingerprint: Fingerprint,
    },
}

impl LoadedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Qeesn(_) => "qeesn",
            LoadedModel::Deesn(_) => "deesn",
            LoadedModel::Kriging { .. } => "kriging",
            LoadedModel::Persistence { .. } => "persistence",
            LoadedModel::Climatology { .. } => "climatology",
        }
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        match self {
            LoadedModel::Qeesn(m) => m.fingerprint(),
            LoadedModel::Deesn(m) => m.fingerprint(),
            LoadedModel::Kriging { fingerprint, .. }
            | LoadedModel::Persistence { fingerprint }
            | LoadedModel::Climatology { fingerprint, .. } => fingerprint,
        }
    }
}

// ---------------------------------------------------------------- binary IO

struct BinWriter {
    buf: Vec<u8>,
}

impl BinWriter {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        let mut w = BinWriter { buf };
        w.u64(FORMAT_VERSION);
        w
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        for row in m.row_iter() {
            for v in row.iter() {
                self.f64(*v);
            }
        }
    }

    fn vector(&mut self, v: &DVector<f64>) {
        for x in v.iter() {
            self.f64(*x);
        }
    }
}

struct BinReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> BinReader<'a> {
    fn open(path: &'a Path, bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self, CliError> {
        let mut r = BinReader {
            bytes,
            pos: 0,
            path,
        };
        let found = r.take(4)?;
        if found != magic {
            return Err(r.corrupt(format!(
                "bad magic {found:?}, expected {magic:?}"
            )));
        }
        let version = r.u64()?;
        if version != FORMAT_VERSION {
            return Err(r.corrupt(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        Ok(r)
    }

    fn corrupt(&self, what: String) -> CliError {
        CliError::Data(format!("{}: {what}", self.path.display()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn dim(&mut self, what: &str, expected: usize) -> Result<(), CliError> {
        let found = self.u64()? as usize;
        if found != expected {
            return Err(self.corrupt(format!("{what} is {found}, descriptor says {expected}")));
        }
        Ok(())
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn vector(&mut self, len: usize) -> Result<DVector<f64>, CliError> {
        let mut v = DVector::zeros(len);
        for i in 0..len {
            v[i] = self.f64()?;
        }
        Ok(v)
    }

    fn finish(self) -> Result<(), CliError> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes past the declared contents",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value).expect("descriptor serializes");
    json.push('\n');
    atomic_write(path, json.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

// -------------------------------------------------------------- shallow dir

pub fn save_qeesn(
    dir: &Path,
    ensemble: &QeesnEnsemble,
    locations: &[LocationRecord],
) -> Result<(), CliError> {
    let descriptor = ModelJson::Qeesn(QeesnJson {
        hyper: ensemble.hyper().clone(),
        n_res: ensemble.members().len(),
        n_inputs: ensemble.n_inputs(),
        standardizer: ensemble.standardizer().clone(),
        fingerprint: ensemble.fingerprint().clone(),
    });
    write_json(&dir.join("model.json"), &descriptor)?;

    let members = ensemble.members();
    let (n_loc, width) = members[0].readout.shape();
    let mut w = BinWriter::new(MEMBERS_MAGIC);
    w.u64(members.len() as u64);
    w.u64(n_loc as u64);
    w.u64(width as u64);
    for member in members {
        w.f64(member.sigma2_eps);
        w.matrix(&member.readout);
    }
    atomic_write(&dir.join("members.bin"), &w.buf)?;
    write_locations_csv(&dir.join("locations.csv"), locations)
}

fn load_qeesn(dir: &Path, json: QeesnJson) -> Result<QeesnEnsemble, CliError> {
    let path = dir.join("members.bin");
    let bytes = read_bytes(&path)?;
    let mut r = BinReader::open(&path, &bytes, MEMBERS_MAGIC)?;
    r.dim("member count", json.n_res)?;
    let n_loc = r.u64()? as usize;
    let width = r.u64()? as usize;
    let mut members = Vec::with_capacity(json.n_res);
    for member_id in 0..json.n_res {
        let sigma2_eps = r.f64()?;
        let readout = r.matrix(n_loc, width)?;
        members.push(QeesnMember {
            reservoir_seed: streams::qeesn_member(json.fingerprint.base_seed, member_id as u64),
            readout,
            sigma2_eps,
        });
    }
    r.finish()?;
    Ok(QeesnEnsemble::from_stored(
        members,
        json.hyper,
        json.standardizer,
        json.n_inputs,
        json.fingerprint,
    )?)
}

// ----------------------------------------------------------------- deep dir

pub fn save_deesn(
    dir: &Path,
    model: &DeesnModel,
    locations: &[LocationRecord],
) -> Result<(), CliError> {
    let config = model.config();
    let descriptor = DeesnJson {
        model: "deesn".to_string(),
        esn: config.clone(),
        n_res: model.n_res(),
        basis_k: model.basis().n_components(),
        n_inputs: model.n_inputs(),
        gibbs: model.chain().settings,
        input_standardizer: model.input_standardizer().clone(),
        feature_standardizer: model.feature_standardizer().clone(),
        fingerprint: model.fingerprint().clone(),
    };
    write_json(&dir.join("deesn.json"), &descriptor)?;

    let basis = model.basis();
    let n_loc = basis.pca.components().nrows();
    let n_deeper = config.reduced_widths.len();
    let mut w = BinWriter::new(BASIS_MAGIC);
    w.u64(n_loc as u64);
    w.u64(basis.n_components() as u64);
    w.u64(model.n_res() as u64);
    w.u64(n_deeper as u64);
    w.u64(config.layer1_width as u64);
    for &width in &config.reduced_widths {
        w.u64(width as u64);
    }
    w.matrix(basis.pca.components());
    w.vector(basis.pca.column_means());
    w.vector(basis.pca.singular_values());
    w.vector(&basis.truncation_sd);
    for pipeline in model.pipelines() {
        for reduction in pipeline.reductions() {
            w.matrix(reduction.components());
            w.vector(reduction.column_means());
            w.vector(reduction.singular_values());
        }
    }
    atomic_write(&dir.join("basis.bin"), &w.buf)?;

    let chain = model.chain();
    let (q, k) = chain.coef[0].shape();
    let mut w = BinWriter::new(CHAIN_MAGIC);
    w.u64(chain.kept() as u64);
    w.u64(q as u64);
    w.u64(k as u64);
    for draw in 0..chain.kept() {
        w.matrix(&chain.coef[draw]);
        w.matrix(&chain.indicators[draw]);
        w.f64(chain.noise[draw]);
    }
    atomic_write(&dir.join("chain.bin"), &w.buf)?;
    write_locations_csv(&dir.join("locations.csv"), locations)
}

fn load_deesn(dir: &Path) -> Result<DeesnModel, CliError> {
    let json: DeesnJson = read_json(&dir.join("deesn.json"))?;
    if json.model != "deesn" {
        return Err(CliError::Data(format!(
            "{}: descriptor names model `{}`, expected `deesn`",
            dir.join("deesn.json").display(),
            json.model
        )));
    }

    let path = dir.join("basis.bin");
    let bytes = read_bytes(&path)?;
    let mut r = BinReader::open(&path, &bytes, BASIS_MAGIC)?;
    let n_loc = r.u64()? as usize;
    r.dim("basis component count", json.basis_k)?;
    r.dim("member count", json.n_res)?;
    r.dim("deeper layer count", json.esn.reduced_widths.len())?;
    r.dim("layer width", json.esn.layer1_width)?;
    for (idx, &width) in json.esn.reduced_widths.iter().enumerate() {
        r.dim(&format!("reduced width {idx}"), width)?;
    }
    let pca = PcaBasis::from_parts(
        r.matrix(n_loc, json.basis_k)?,
        r.vector(n_loc)?,
        r.vector(json.basis_k)?,
    )
    .map_err(|e| CliError::Data(format!("{}: response basis: {e}", path.display())))?;
    let truncation_sd = r.vector(n_loc)?;
    let basis = ResponseBasis { pca, truncation_sd };
    let mut reduction_sets = Vec::with_capacity(json.n_res);
    for _ in 0..json.n_res {
        let mut reductions = Vec::with_capacity(json.esn.reduced_widths.len());
        for &width in &json.esn.reduced_widths {
            let reduction = PcaBasis::from_parts(
                r.matrix(json.esn.layer1_width, width)?,
                r.vector(json.esn.layer1_width)?,
                r.vector(width)?,
            )
            .map_err(|e| CliError::Data(format!("{}: state reduction: {e}", path.display())))?;
            reductions.push(reduction);
        }
        reduction_sets.push(reductions);
    }
    r.finish()?;

    let path = dir.join("chain.bin");
    let bytes = read_bytes(&path)?;
    let mut r = BinReader::open(&path, &bytes, CHAIN_MAGIC)?;
    let n_draws = r.u64()? as usize;
    if n_draws == 0 {
        return Err(r.corrupt("chain holds no draws".to_string()));
    }
    let q = r.u64()? as usize;
    r.dim("chain response width", json.basis_k)?;
    let mut coef = Vec::with_capacity(n_draws);
    let mut indicators = Vec::with_capacity(n_draws);
    let mut noise = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        coef.push(r.matrix(q, json.basis_k)?);
        indicators.push(r.matrix(q, json.basis_k)?);
        noise.push(r.f64()?);
    }
    r.finish()?;
    let chain = SsvsChain {
        coef,
        indicators,
        noise,
        settings: json.gibbs,
        seed: streams::deesn_chain(json.fingerprint.base_seed),
    };

    Ok(DeesnModel::from_parts(
        json.esn,
        json.n_res,
        json.n_inputs,
        basis,
        json.input_standardizer,
        json.feature_standardizer,
        reduction_sets,
        chain,
        json.fingerprint,
    )?)
}

// ------------------------------------------------------------ whole-dir API

/// Write a baseline model descriptor (no binary sidecars).
pub fn save_simple(
    dir: &Path,
    descriptor: &ModelJson,
    locations: &[LocationRecord],
) -> Result<(), CliError> {
    write_json(&dir.join("model.json"), descriptor)?;
    write_locations_csv(&dir.join("locations.csv"), locations)
}

/// Load whatever model a directory holds, plus its training locations.
pub fn load_model(dir: &Path) -> Result<(LoadedModel, Vec<LocationRecord>), CliError> {
    let locations = read_locations(&dir.join("locations.csv"))?;
    let model = if dir.join("deesn.json").is_file() {
        LoadedModel::Deesn(load_deesn(dir)?)
    } else {
        match read_json(&dir.join("model.json"))? {
            ModelJson::Qeesn(json) => LoadedModel::Qeesn(load_qeesn(dir, json)?),
            ModelJson::Kriging(json) => LoadedModel::Kriging {
                params: json.params,
                window: json.window,
                fingerprint: json.fingerprint,
            },
            ModelJson::Persistence(json) => LoadedModel::Persistence {
                fingerprint: json.fingerprint,
            },
            ModelJson::Climatology(json) => LoadedModel::Climatology {
                mean: DVector::from_vec(json.mean),
                fingerprint: json.fingerprint,
            },
        }
    };
    Ok((model, locations))
}
