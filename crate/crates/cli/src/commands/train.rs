//! `train`: fit the configured model on a field series and write the model
//! directory.

use std::path::Path;
use std::time::Instant;

use reservoir_cast_core::deep::fit_deesn;
use reservoir_cast_core::qeesn::Fingerprint;

use crate::config::{load_config, ModelKind};
use crate::data::{read_field_csv, read_locations};
use crate::error::CliError;
use crate::formats::{
    save_deesn, save_qeesn, save_simple, ClimatologyJson, KrigingJson, ModelJson, PersistenceJson,
};
use crate::manifest::RunManifest;
use crate::parallel;

pub fn run(
    config_path: &Path,
    data_path: &Path,
    locations_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    let (config, config_digest) = load_config(config_path)?;
    let locations = read_locations(locations_path)?;
    let z = read_field_csv(data_path, &locations)?;

    let mut manifest = RunManifest::new("train");
    manifest.config_sha256 = Some(config_digest);
    manifest.base_seed = Some(config.base_seed);
    manifest.add_input("data", data_path)?;
    manifest.add_input("locations", locations_path)?;

    let fingerprint = Fingerprint {
        data_sha256: z.content_hash(),
        base_seed: config.base_seed,
    };
    let mut warnings: Vec<String> = Vec::new();
    match config.model {
        ModelKind::Qeesn => {
            let hyper = config.qeesn_hyper();
            let threads = parallel::thread_cap()?;
            let ensemble =
                parallel::fit_qeesn(&z, None, &hyper, config.n_res, config.base_seed, threads)?;
            warnings.extend(ensemble.warnings().iter().cloned());
            save_qeesn(out_dir, &ensemble, z.locations())?;
        }
        ModelKind::Deesn => {
            let block = config.deesn_block();
            let prior = block.prior.resolve(block.esn.reduced_widths.len() + 1)?;
            let model = fit_deesn(
                &z,
                None,
                &block.esn,
                config.n_res,
                block.basis_k,
                &prior,
                &block.gibbs,
                config.base_seed,
            )?;
            warnings.extend(model.warnings().iter().cloned());
            save_deesn(out_dir, &model, z.locations())?;
        }
        ModelKind::Kriging => {
            let block = config.kriging.clone().unwrap_or_default();
            let descriptor = ModelJson::Kriging(KrigingJson {
                params: block.params(),
                window: block.window,
                fingerprint,
            });
            save_simple(out_dir, &descriptor, z.locations())?;
        }
        ModelKind::Persistence => {
            let descriptor = ModelJson::Persistence(PersistenceJson { fingerprint });
            save_simple(out_dir, &descriptor, z.locations())?;
        }
        ModelKind::Climatology => {
            let descriptor = ModelJson::Climatology(ClimatologyJson {
                mean: z.mean_field().iter().copied().collect(),
                fingerprint,
            });
            save_simple(out_dir, &descriptor, z.locations())?;
        }
    }
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    manifest.finish(out_dir, started)
}
