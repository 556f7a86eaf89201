//! `tune`: search hyperparameters and write a ready-to-train config.

use std::path::Path;
use std::time::Instant;

use reservoir_cast_core::deep::{tune_deep, GaOutcome};
use reservoir_cast_core::qeesn::{cross_validate, CvTrial, QeesnHyper};
use serde::Serialize;

use crate::config::{load_config, ModelKind, TuneBlock};
use crate::data::{read_field_csv, read_locations};
use crate::error::CliError;
use crate::io_util::atomic_write;
use crate::manifest::RunManifest;

/// Which search `--method` names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Grid search with a time-ordered validation split (shallow model).
    Cv,
    /// Genetic search (deep model).
    Ga,
}

#[derive(Serialize)]
struct CvReport {
    selected: QeesnHyper,
    trials: Vec<CvTrial>,
}

pub fn run(
    config_path: &Path,
    data_path: &Path,
    locations_path: &Path,
    method: Method,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    let (mut config, config_digest) = load_config(config_path)?;
    let locations = read_locations(locations_path)?;
    let z = read_field_csv(data_path, &locations)?;

    let mut manifest = RunManifest::new("tune");
    manifest.config_sha256 = Some(config_digest);
    manifest.base_seed = Some(config.base_seed);
    manifest.add_input("data", data_path)?;
    manifest.add_input("locations", locations_path)?;

    let tune = config.tune.clone().unwrap_or_else(TuneBlock::default);
    let report_json = match method {
        Method::Cv => {
            if config.model != ModelKind::Qeesn {
                return Err(CliError::Config(format!(
                    "method cv tunes a qeesn config, this one trains `{}`",
                    config.model.as_str()
                )));
            }
            let base = config.qeesn_hyper();
            let outcome =
                cross_validate(&z, None, &tune.grid, &base, config.n_res, config.base_seed)?;
            config.qeesn = Some(outcome.selected.clone());
            to_json(&CvReport {
                selected: outcome.selected,
                trials: outcome.trials,
            })
        }
        Method::Ga => {
            if config.model != ModelKind::Deesn {
                return Err(CliError::Config(format!(
                    "method ga tunes a deesn config, this one trains `{}`",
                    config.model.as_str()
                )));
            }
            let mut block = config.deesn_block();
            let outcome: GaOutcome = tune_deep(
                &z,
                None,
                &block.esn,
                &tune.ga_space,
                &tune.ga,
                config.base_seed,
            )?;
            block.esn = outcome.best.clone();
            config.deesn = Some(block);
            to_json(&outcome)
        }
    };

    let mut selected = serde_json::to_string_pretty(&config).expect("config serializes");
    selected.push('\n');
    atomic_write(&out_dir.join("selected.json"), selected.as_bytes())?;
    atomic_write(&out_dir.join("report.json"), report_json.as_bytes())?;
    manifest.finish(out_dir, started)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut json = serde_json::to_string_pretty(value).expect("report serializes");
    json.push('\n');
    json
}
