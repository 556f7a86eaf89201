//! Gridded space-time field containers: a dense `time × location` value
//! matrix plus the location table and the (evenly spaced) time stamps.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors from field construction and slicing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field must have at least one time and one location")]
    Empty,
    #[error("values shape {rows}x{cols} does not match {times} times x {locs} locations")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        times: usize,
        locs: usize,
    },
    #[error("value at time index {t}, location {loc} is not finite")]
    NonFiniteValue { t: usize, loc: usize },
    #[error("times must be strictly increasing, violated at index {at}")]
    TimesNotIncreasing { at: usize },
    #[error("time step must be constant, violated at index {at}")]
    UnevenTimeStep { at: usize },
    #[error("location ids must be unique and contiguous from 0 (n={n}), got id {id}")]
    BadLocationId { id: usize, n: usize },
    #[error("location coordinate for id {id} is not finite")]
    NonFiniteCoordinate { id: usize },
    #[error("window [{start}, {start}+{len}) outside series of length {t_len}")]
    WindowOutOfRange {
        start: usize,
        len: usize,
        t_len: usize,
    },
}

/// One site on the spatial grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocationRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// Immutable gridded series: `values[(t, loc)]` is the observation at the
/// t-th time stamp and the given location id. No missing entries; times are
/// evenly spaced integers; location ids are contiguous from 0 and stored in
/// id order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    values: DMatrix<f64>,
    times: Vec<i64>,
    locations: Vec<LocationRecord>,
}

impl FieldSeries {
    pub fn new(
        values: DMatrix<f64>,
        times: Vec<i64>,
        locations: Vec<LocationRecord>,
    ) -> Result<Self, FieldError> {
        if times.is_empty() || locations.is_empty() {
            return Err(FieldError::Empty);
        }
        if values.nrows() != times.len() || values.ncols() != locations.len() {
            return Err(FieldError::ShapeMismatch {
                rows: values.nrows(),
                cols: values.ncols(),
                times: times.len(),
                locs: locations.len(),
            });
        }
        for (idx, pair) in times.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(FieldError::TimesNotIncreasing { at: idx + 1 });
            }
        }
        if times.len() > 2 {
            let step = times[1] - times[0];
            for (idx, pair) in times.windows(2).enumerate().skip(1) {
                if pair[1] - pair[0] != step {
                    return Err(FieldError::UnevenTimeStep { at: idx + 1 });
                }
            }
        }
        let n = locations.len();
        let mut seen = alloc::vec![false; n];
        for rec in &locations {
            if rec.id >= n || seen[rec.id] {
                return Err(FieldError::BadLocationId { id: rec.id, n });
            }
            if !rec.x.is_finite() || !rec.y.is_finite() {
                return Err(FieldError::NonFiniteCoordinate { id: rec.id });
            }
            seen[rec.id] = true;
        }
        let mut locations = locations;
        locations.sort_by_key(|rec| rec.id);
        for (t, row) in values.row_iter().enumerate() {
            for (loc, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(FieldError::NonFiniteValue { t, loc });
                }
            }
        }
        Ok(Self {
            values,
            times,
            locations,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn locations(&self) -> &[LocationRecord] {
        &self.locations
    }

    pub fn t_len(&self) -> usize {
        self.times.len()
    }

    pub fn n_loc(&self) -> usize {
        self.locations.len()
    }

    /// Spacing between consecutive time stamps (1 for a single-time series).
    pub fn time_step(&self) -> i64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            1
        }
    }

    /// Contiguous time slice `[start, start+len)` sharing the location table.
    pub fn window(&self, start: usize, len: usize) -> Result<Self, FieldError> {
        if len == 0 || start + len > self.t_len() {
            return Err(FieldError::WindowOutOfRange {
                start,
                len,
                t_len: self.t_len(),
            });
        }
        Ok(Self {
            values: self.values.rows(start, len).into_owned(),
            times: self.times[start..start + len].to_vec(),
            locations: self.locations.clone(),
        })
    }

    /// Per-location mean over time.
    pub fn mean_field(&self) -> DVector<f64> {
        let t = self.t_len() as f64;
        DVector::from_fn(self.n_loc(), |j, _| self.values.column(j).sum() / t)
    }

    /// Hex SHA-256 over dimensions, times, coordinates, and value bytes;
    /// stored in trained models so a forecast can name the data it saw.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.t_len() as u64).to_le_bytes());
        hasher.update((self.n_loc() as u64).to_le_bytes());
        for t in &self.times {
            hasher.update(t.to_le_bytes());
        }
        for rec in &self.locations {
            hasher.update((rec.id as u64).to_le_bytes());
            hasher.update(rec.x.to_le_bytes());
            hasher.update(rec.y.to_le_bytes());
        }
        for row in self.values.row_iter() {
            for v in row.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use core::fmt::Write;
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

/// Location table for `n` sites on a near-square lattice in the unit square.
pub fn unit_grid_locations(n: usize) -> Vec<LocationRecord> {
    let mut side = 1usize;
    while side * side < n {
        side += 1;
    }
    let denom = (side - 1).max(1) as f64;
    (0..n)
        .map(|id| LocationRecord {
            id,
            x: (id % side) as f64 / denom,
            y: (id / side) as f64 / denom,
        })
        .collect()
}
