//! `evaluate`: score a written forecast against observed truth.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use reservoir_cast_core::metrics::ScoreReport;
use reservoir_cast_core::qeesn::EnsembleForecast;
use reservoir_cast_core::DMatrix;

use crate::data::{read_members_csv, read_summary_csv, read_value_cells};
use crate::error::CliError;
use crate::io_util::atomic_write;
use crate::manifest::RunManifest;

pub fn run(forecast_dir: &Path, truth_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let members_path = forecast_dir.join("members.csv");
    let summary_path = forecast_dir.join("summary.csv");
    let (times, n_loc, member_values) = read_members_csv(&members_path)?;
    let (summary_times, mean, lower, upper) = read_summary_csv(&summary_path)?;
    if summary_times != times || mean.ncols() != n_loc {
        return Err(CliError::Data(format!(
            "{}: summary covers different cells than the member file",
            summary_path.display()
        )));
    }

    let mut manifest = RunManifest::new("evaluate");
    manifest.add_input("members", &members_path)?;
    manifest.add_input("summary", &summary_path)?;
    manifest.add_input("truth", truth_path)?;

    let cells = read_value_cells(truth_path)?;
    let mut truth = DMatrix::zeros(times.len(), n_loc);
    for (row, &time) in times.iter().enumerate() {
        for loc in 0..n_loc {
            truth[(row, loc)] = *cells.get(&(time, loc)).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: no observation at time {time}, loc {loc}",
                    truth_path.display()
                ))
            })?;
        }
    }

    let forecast = EnsembleForecast {
        member_values,
        mean,
        lower,
        upper,
        level: 0.95,
        steps_ahead: (1..=times.len()).collect(),
    };
    let report = ScoreReport::compute(&forecast, &truth)?;

    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    atomic_write(&out_dir.join("scores.json"), json.as_bytes())?;

    let mut csv = String::from("lead,time,mspe,crps,coverage\n");
    for slice in &report.per_lead {
        let _ = writeln!(
            csv,
            "{},{},{:.16e},{:.16e},{:.16e}",
            forecast.steps_ahead[slice.index],
            times[slice.index],
            slice.mspe,
            slice.crps,
            slice.coverage
        );
    }
    atomic_write(&out_dir.join("per_lead.csv"), csv.as_bytes())?;
    manifest.finish(out_dir, started)
}
