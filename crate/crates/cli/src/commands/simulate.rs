//! `simulate`: draw a synthetic field series and write it with its latent
//! truth.

use std::path::Path;
use std::time::Instant;

use reservoir_cast_core::baselines::{
    simulate_gqn, simulate_linear_dstm, simulate_two_scale, GqnParams, SimulatedSeries,
};
use reservoir_cast_core::field::{unit_grid_locations, FieldSeries};
use reservoir_cast_core::numerics::spectral_radius;
use reservoir_cast_core::{streams, DMatrix};
use serde::Serialize;

use crate::config::{load_config, ModelConfig, SimulateBlock};
use crate::data::{write_field_csv, write_locations_csv};
use crate::error::CliError;
use crate::io_util::atomic_write;
use crate::manifest::RunManifest;

/// Which generator `--model` names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Generator {
    Gqn,
    Linear,
    TwoScale,
}

impl Generator {
    fn as_str(self) -> &'static str {
        match self {
            Generator::Gqn => "gqn",
            Generator::Linear => "linear",
            Generator::TwoScale => "two_scale",
        }
    }
}

/// Everything needed to regenerate or inspect the draw: the generator, its
/// resolved parameters, and the latent state path behind the fields.
#[derive(Serialize)]
struct TruthFile {
    generator: &'static str,
    seed: u64,
    t_len: usize,
    discard: usize,
    params: serde_json::Value,
    /// Latent states, one row per kept time step.
    states: Vec<Vec<f64>>,
}

pub fn run(
    generator: Generator,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("simulate");

    let (block, config_seed) = match config_path {
        Some(path) => {
            let (config, digest) = load_config(path)?;
            manifest.config_sha256 = Some(digest);
            let ModelConfig {
                simulate, base_seed, ..
            } = config;
            (simulate.unwrap_or_default(), base_seed)
        }
        None => (SimulateBlock::default(), 0),
    };
    let seed = seed_override.unwrap_or(config_seed);
    manifest.base_seed = Some(seed);

    let param_stream = streams::simulator(seed).derive(0);
    let path_stream = streams::simulator(seed).derive(1);
    let (sim, params_json) = match generator {
        Generator::Gqn => {
            let mut params = GqnParams::default_stable(block.gqn.p, block.gqn.n_y, param_stream)?;
            for quad in &mut params.theta_quadratic {
                *quad *= block.gqn.quad_scale;
            }
            if let Some(sd) = block.gqn.noise_sd {
                params.noise_sd = sd;
            }
            let sim = simulate_gqn(&params, block.t_len, block.discard, path_stream)?;
            let json = serde_json::json!({
                "p": block.gqn.p,
                "n_y": block.gqn.n_y,
                "quad_scale": block.gqn.quad_scale,
                "noise_sd": params.noise_sd,
            });
            (sim, json)
        }
        Generator::Linear => {
            let (transition, innovation, phi_out) = draw_linear_system(&block, param_stream);
            let sim = simulate_linear_dstm(
                &transition,
                &innovation,
                &phi_out,
                block.t_len,
                block.discard,
                path_stream,
            )?;
            let json = serde_json::json!({
                "p": block.linear.p,
                "n_y": block.linear.n_y,
                "rho": block.linear.rho,
                "noise_sd": block.linear.noise_sd,
            });
            (sim, json)
        }
        Generator::TwoScale => {
            let sim = simulate_two_scale(&block.two_scale, block.t_len, block.discard, path_stream)?;
            let json = serde_json::to_value(&block.two_scale).expect("params serialize");
            (sim, json)
        }
    };

    write_outputs(out_dir, generator, seed, &block, sim, params_json)?;
    manifest.finish(out_dir, started)
}

/// Random stable linear system: normal transition rescaled to the requested
/// spectral radius, isotropic innovations, orthonormal readout patterns.
fn draw_linear_system(
    block: &SimulateBlock,
    stream: reservoir_cast_core::numerics::RngStream,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let p = block.linear.p;
    let n_y = block.linear.n_y;
    let mut rng = stream.stream();
    let raw = DMatrix::from_fn(p, p, |_, _| rng.normal());
    let radius = spectral_radius(&raw).unwrap_or(0.0);
    let transition = if radius > 0.0 {
        &raw * (block.linear.rho / radius)
    } else {
        DMatrix::from_diagonal_element(p, p, block.linear.rho)
    };
    let innovation =
        DMatrix::from_diagonal_element(p, p, block.linear.noise_sd * block.linear.noise_sd);
    let patterns = DMatrix::from_fn(n_y, p, |_, _| rng.normal());
    let phi_out = patterns.qr().q();
    (transition, innovation, phi_out)
}

fn write_outputs(
    out_dir: &Path,
    generator: Generator,
    seed: u64,
    block: &SimulateBlock,
    sim: SimulatedSeries,
    params: serde_json::Value,
) -> Result<(), CliError> {
    let n_y = sim.fields.ncols();
    let locations = unit_grid_locations(n_y);
    let times: Vec<i64> = (0..sim.fields.nrows() as i64).collect();
    let field = FieldSeries::new(sim.fields, times, locations)?;
    write_field_csv(&out_dir.join("field.csv"), &field)?;
    write_locations_csv(&out_dir.join("locations.csv"), field.locations())?;

    let truth = TruthFile {
        generator: generator.as_str(),
        seed,
        t_len: block.t_len,
        discard: block.discard,
        params,
        states: sim
            .states
            .row_iter()
            .map(|row| row.iter().copied().collect())
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    json.push('\n');
    atomic_write(&out_dir.join("truth.json"), json.as_bytes())
}
