//! On-disk tabular formats: long-form field CSV, location tables, and the
//! two forecast CSVs.
//!
//! Readers go through the `csv` crate and insist on exact headers; writers
//! emit values as `{:.16e}` with LF line endings so a rerun with the same
//! seed reproduces files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use reservoir_cast_core::field::{FieldSeries, LocationRecord};
use reservoir_cast_core::DMatrix;
use serde::Deserialize;

use crate::error::{io_context, CliError};
use crate::io_util::atomic_write;

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_context(path, io),
            other => CliError::Data(format!("{}: {other:?}", path.display())),
        })
}

fn check_headers(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), CliError> {
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(CliError::Data(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn record_err(path: &Path, line: usize, err: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {err}", path.display()))
}

/// Read a `loc,x,y` table. Ids must come out contiguous from 0 once sorted.
pub fn read_locations(path: &Path) -> Result<Vec<LocationRecord>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        loc: usize,
        x: f64,
        y: f64,
    }
    let mut reader = open_reader(path)?;
    check_headers(path, &mut reader, &["loc", "x", "y"])?;
    let mut records = Vec::new();
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| record_err(path, line, e))?;
        records.push(LocationRecord {
            id: row.loc,
            x: row.x,
            y: row.y,
        });
    }
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no location rows",
            path.display()
        )));
    }
    records.sort_by_key(|rec| rec.id);
    for (want, rec) in records.iter().enumerate() {
        if rec.id != want {
            return Err(CliError::Data(format!(
                "{}: location ids must be contiguous from 0; missing id {want}",
                path.display()
            )));
        }
    }
    Ok(records)
}

/// Read a long-form `time,loc,value` field against a known location table.
/// Every (time, loc) pair must appear exactly once.
pub fn read_field_csv(
    path: &Path,
    locations: &[LocationRecord],
) -> Result<FieldSeries, CliError> {
    #[derive(Deserialize)]
    struct Row {
        time: i64,
        loc: usize,
        value: f64,
    }
    let n_loc = locations.len();
    let mut reader = open_reader(path)?;
    check_headers(path, &mut reader, &["time", "loc", "value"])?;
    let mut cells: BTreeMap<(i64, usize), f64> = BTreeMap::new();
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| record_err(path, line, e))?;
        if row.loc >= n_loc {
            return Err(record_err(
                path,
                line,
                format!("location id {} outside the table of {n_loc}", row.loc),
            ));
        }
        if cells.insert((row.time, row.loc), row.value).is_some() {
            return Err(record_err(
                path,
                line,
                format!("duplicate cell at time {}, loc {}", row.time, row.loc),
            ));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let mut times: Vec<i64> = cells.keys().map(|&(t, _)| t).collect();
    times.dedup();
    if cells.len() != times.len() * n_loc {
        return Err(CliError::Data(format!(
            "{}: incomplete grid; {} times x {n_loc} locations needs {} cells, found {}",
            path.display(),
            times.len(),
            times.len() * n_loc,
            cells.len()
        )));
    }
    let values = DMatrix::from_fn(times.len(), n_loc, |t, loc| cells[&(times[t], loc)]);
    Ok(FieldSeries::new(values, times, locations.to_vec())?)
}

/// Read `time,loc,value` rows as a cell map without requiring a complete
/// grid; used to join observed truth onto forecast cells.
pub fn read_value_cells(path: &Path) -> Result<BTreeMap<(i64, usize), f64>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        time: i64,
        loc: usize,
        value: f64,
    }
    let mut reader = open_reader(path)?;
    check_headers(path, &mut reader, &["time", "loc", "value"])?;
    let mut cells = BTreeMap::new();
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| record_err(path, line, e))?;
        if cells.insert((row.time, row.loc), row.value).is_some() {
            return Err(record_err(
                path,
                line,
                format!("duplicate cell at time {}, loc {}", row.time, row.loc),
            ));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(cells)
}

/// Write a field back out in long form, rows ordered by (time, loc).
pub fn write_field_csv(path: &Path, field: &FieldSeries) -> Result<(), CliError> {
    let mut out = String::from("time,loc,value\n");
    for (t, &time) in field.times().iter().enumerate() {
        for loc in 0..field.n_loc() {
            let _ = writeln!(out, "{time},{loc},{:.16e}", field.values()[(t, loc)]);
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Write a `loc,x,y` table.
pub fn write_locations_csv(path: &Path, locations: &[LocationRecord]) -> Result<(), CliError> {
    let mut out = String::from("loc,x,y\n");
    for rec in locations {
        let _ = writeln!(out, "{},{:.16e},{:.16e}", rec.id, rec.x, rec.y);
    }
    atomic_write(path, out.as_bytes())
}

/// One forecast ensemble written flat: member trajectories plus a summary.
pub struct ForecastTable {
    /// Valid times, one per forecast step.
    pub times: Vec<i64>,
    pub n_loc: usize,
    /// Per member, a `steps x n_loc` value matrix.
    pub members: Vec<DMatrix<f64>>,
    pub mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

/// Write every member trajectory as `time,loc,member,value` rows.
pub fn write_members_csv(path: &Path, table: &ForecastTable) -> Result<(), CliError> {
    let mut out = String::from("time,loc,member,value\n");
    for (t, &time) in table.times.iter().enumerate() {
        for loc in 0..table.n_loc {
            for (m, member) in table.members.iter().enumerate() {
                let _ = writeln!(out, "{time},{loc},{m},{:.16e}", member[(t, loc)]);
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Write the ensemble mean and 95% band as `time,loc,mean,q025,q975` rows.
pub fn write_summary_csv(path: &Path, table: &ForecastTable) -> Result<(), CliError> {
    let mut out = String::from("time,loc,mean,q025,q975\n");
    for (t, &time) in table.times.iter().enumerate() {
        for loc in 0..table.n_loc {
            let _ = writeln!(
                out,
                "{time},{loc},{:.16e},{:.16e},{:.16e}",
                table.mean[(t, loc)],
                table.lower[(t, loc)],
                table.upper[(t, loc)]
            );
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Read `members.csv` back. Member ids must be contiguous from 0 and every
/// (time, loc, member) cell present.
pub fn read_members_csv(
    path: &Path,
) -> Result<(Vec<i64>, usize, Vec<DMatrix<f64>>), CliError> {
    #[derive(Deserialize)]
    struct Row {
        time: i64,
        loc: usize,
        member: usize,
        value: f64,
    }
    let mut reader = open_reader(path)?;
    check_headers(path, &mut reader, &["time", "loc", "member", "value"])?;
    let mut cells: BTreeMap<(i64, usize, usize), f64> = BTreeMap::new();
    let mut n_loc = 0usize;
    let mut n_members = 0usize;
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| record_err(path, line, e))?;
        n_loc = n_loc.max(row.loc + 1);
        n_members = n_members.max(row.member + 1);
        if cells
            .insert((row.time, row.loc, row.member), row.value)
            .is_some()
        {
            return Err(record_err(
                path,
                line,
                format!(
                    "duplicate cell at time {}, loc {}, member {}",
                    row.time, row.loc, row.member
                ),
            ));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let mut times: Vec<i64> = cells.keys().map(|&(t, _, _)| t).collect();
    times.dedup();
    if cells.len() != times.len() * n_loc * n_members {
        return Err(CliError::Data(format!(
            "{}: incomplete grid over time x location x member",
            path.display()
        )));
    }
    let members: Vec<DMatrix<f64>> = (0..n_members)
        .map(|m| DMatrix::from_fn(times.len(), n_loc, |t, loc| cells[&(times[t], loc, m)]))
        .collect();
    Ok((times, n_loc, members))
}

/// Read `summary.csv` back as (times, mean, lower, upper).
pub type SummaryTable = (Vec<i64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

pub fn read_summary_csv(path: &Path) -> Result<SummaryTable, CliError> {
    #[derive(Deserialize)]
    struct Row {
        time: i64,
        loc: usize,
        mean: f64,
        q025: f64,
        q975: f64,
    }
    let mut reader = open_reader(path)?;
    check_headers(path, &mut reader, &["time", "loc", "mean", "q025", "q975"])?;
    let mut cells: BTreeMap<(i64, usize), (f64, f64, f64)> = BTreeMap::new();
    let mut n_loc = 0usize;
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| record_err(path, line, e))?;
        n_loc = n_loc.max(row.loc + 1);
        if cells
            .insert((row.time, row.loc), (row.mean, row.q025, row.q975))
            .is_some()
        {
            return Err(record_err(
                path,
                line,
                format!("duplicate cell at time {}, loc {}", row.time, row.loc),
            ));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let mut times: Vec<i64> = cells.keys().map(|&(t, _)| t).collect();
    times.dedup();
    if cells.len() != times.len() * n_loc {
        return Err(CliError::Data(format!(
            "{}: incomplete grid over time x location",
            path.display()
        )));
    }
    let pick = |f: fn(&(f64, f64, f64)) -> f64| {
        DMatrix::from_fn(times.len(), n_loc, |t, loc| f(&cells[&(times[t], loc)]))
    };
    Ok((times.clone(), pick(|c| c.0), pick(|c| c.1), pick(|c| c.2)))
}
