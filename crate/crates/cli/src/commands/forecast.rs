//! `forecast`: run a trained model over fresh history and write member and
//! summary trajectories.

use std::path::Path;
use std::time::Instant;

use reservoir_cast_core::baselines::{
    krige, persistence_forecast, CovarianceParams, SpaceTimePoint,
};
use reservoir_cast_core::field::{FieldSeries, LocationRecord};
use reservoir_cast_core::qeesn::EnsembleForecast;
use reservoir_cast_core::{DMatrix, DVector};

use crate::data::{read_field_csv, write_members_csv, write_summary_csv, ForecastTable};
use crate::error::CliError;
use crate::formats::{load_model, LoadedModel};
use crate::manifest::RunManifest;

/// Central 95% normal quantile, matching the ensemble models' default band.
const Z_95: f64 = 1.959_964;

pub fn run(
    model_dir: &Path,
    data_path: &Path,
    horizon: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    if horizon == 0 {
        return Err(CliError::Config("horizon must be at least 1".to_string()));
    }
    let (model, locations) = load_model(model_dir)?;
    let z = read_field_csv(data_path, &locations)?;

    let mut manifest = RunManifest::new("forecast");
    manifest.base_seed = Some(model.fingerprint().base_seed);
    manifest.add_input("data", data_path)?;
    let descriptor = match model {
        LoadedModel::Deesn(_) => "deesn.json",
        _ => "model.json",
    };
    manifest.add_input("model", &model_dir.join(descriptor))?;

    let last = *z.times().last().expect("nonempty series");
    let dt = z.time_step();
    let times: Vec<i64> = (1..=horizon as i64).map(|h| last + h * dt).collect();
    let n_loc = z.n_loc();

    let table = match model {
        LoadedModel::Qeesn(ensemble) => {
            from_ensemble(times, n_loc, ensemble.forecast(z.values(), horizon)?)
        }
        LoadedModel::Deesn(deep) => {
            from_ensemble(times, n_loc, deep.forecast(z.values(), horizon)?)
        }
        LoadedModel::Persistence { .. } => {
            degenerate(times, n_loc, persistence_forecast(z.values(), horizon)?)
        }
        LoadedModel::Climatology { mean, .. } => {
            let rows = climatology_rows(&z, &mean, horizon)?;
            degenerate(times, n_loc, rows)
        }
        LoadedModel::Kriging { params, window, .. } => {
            let (mean, lower, upper) = krige_ahead(&z, &params, window, &times)?;
            ForecastTable {
                times,
                n_loc,
                members: vec![mean.clone()],
                mean,
                lower,
                upper,
            }
        }
    };

    write_members_csv(&out_dir.join("members.csv"), &table)?;
    write_summary_csv(&out_dir.join("summary.csv"), &table)?;
    manifest.finish(out_dir, started)
}

fn from_ensemble(times: Vec<i64>, n_loc: usize, forecast: EnsembleForecast) -> ForecastTable {
    ForecastTable {
        times,
        n_loc,
        members: forecast.member_values,
        mean: forecast.mean,
        lower: forecast.lower,
        upper: forecast.upper,
    }
}

/// A point forecast presented as a one-member ensemble with a collapsed
/// band.
fn degenerate(times: Vec<i64>, n_loc: usize, rows: DMatrix<f64>) -> ForecastTable {
    ForecastTable {
        times,
        n_loc,
        members: vec![rows.clone()],
        mean: rows.clone(),
        lower: rows.clone(),
        upper: rows,
    }
}

/// The stored training mean repeated over the horizon. The supplied history
/// only anchors the location count; a climatology never updates.
fn climatology_rows(
    z: &FieldSeries,
    mean: &DVector<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>, CliError> {
    if mean.len() != z.n_loc() {
        return Err(CliError::Data(format!(
            "stored climatology covers {} locations, data has {}",
            mean.len(),
            z.n_loc()
        )));
    }
    Ok(DMatrix::from_fn(horizon, mean.len(), |_, j| mean[j]))
}

/// Universal kriging from the trailing `window` observed times to every
/// (future time, location) target, with a planar spatial trend.
fn krige_ahead(
    z: &FieldSeries,
    params: &CovarianceParams,
    window: usize,
    times: &[i64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), CliError> {
    if z.t_len() < window {
        return Err(CliError::Data(format!(
            "kriging window needs {window} trailing time points, data has {}",
            z.t_len()
        )));
    }
    let start = z.t_len() - window;
    let n_loc = z.n_loc();
    let mut points = Vec::with_capacity(window * n_loc);
    let mut values = DVector::zeros(window * n_loc);
    for (row, t) in (start..z.t_len()).enumerate() {
        for (loc, rec) in z.locations().iter().enumerate() {
            points.push(space_time(rec, z.times()[t]));
            values[row * n_loc + loc] = z.values()[(t, loc)];
        }
    }
    let mut targets = Vec::with_capacity(times.len() * n_loc);
    for &t in times {
        for rec in z.locations() {
            targets.push(space_time(rec, t));
        }
    }
    let trend = planar_trend(&points);
    let target_trend = planar_trend(&targets);
    let prediction = krige(&points, &values, &trend, &targets, &target_trend, params)?;

    let horizon = times.len();
    let mean = DMatrix::from_fn(horizon, n_loc, |h, j| prediction.mean[h * n_loc + j]);
    let half = DMatrix::from_fn(horizon, n_loc, |h, j| {
        Z_95 * prediction.variance[h * n_loc + j].max(0.0).sqrt()
    });
    let lower = &mean - &half;
    let upper = &mean + &half;
    Ok((mean, lower, upper))
}

fn space_time(rec: &LocationRecord, t: i64) -> SpaceTimePoint {
    SpaceTimePoint {
        x: rec.x,
        y: rec.y,
        t: t as f64,
    }
}

fn planar_trend(points: &[SpaceTimePoint]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => points[i].x,
        _ => points[i].y,
    })
}
