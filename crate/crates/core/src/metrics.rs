//! Forecast verification: squared-error, ensemble CRPS, and central-interval
//! coverage, with per-lead-row and per-location breakdowns.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::qeesn::EnsembleForecast;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("interval bound inverted at row {row}, column {col}: lower > upper")]
    InvertedInterval { row: usize, col: usize },
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::ShapeMismatch {
            left_rows: a.nrows(),
            left_cols: a.ncols(),
            right_rows: b.nrows(),
            right_cols: b.ncols(),
        });
    }
    Ok(())
}

/// Mean squared prediction error over all cells.
pub fn mspe(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let n = pred.len();
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

/// Empirical CRPS of an ensemble against one observation:
/// `(1/n)Σ|xᵢ−z| − (1/(2n²))ΣᵢΣⱼ|xᵢ−xⱼ|`.
///
/// The pairwise term is computed from the sorted sample in O(n log n); the
/// summed terms are identical to the double loop.
pub fn crps_ensemble(members: &[f64], obs: f64) -> Result<f64, MetricsError> {
    if members.is_empty() {
        return Err(MetricsError::EmptyEnsemble);
    }
    let n = members.len();
    let mae: f64 = members.iter().map(|x| (x - obs).abs()).sum::<f64>() / n as f64;
    let mut sorted: Vec<f64> = members.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    // ΣᵢΣⱼ|xᵢ−xⱼ| = 2·Σᵢ (2i+1−n)·x_(i) over the ascending order statistics.
    let half_pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| ((2 * i + 1) as f64 - n as f64) * x)
        .sum();
    Ok(mae - half_pair_sum / (n * n) as f64)
}

/// Field CRPS: mean of the cell-wise ensemble CRPS over every cell.
pub fn crps_field(members: &[DMatrix<f64>], truth: &DMatrix<f64>) -> Result<f64, MetricsError> {
    if members.is_empty() {
        return Err(MetricsError::EmptyEnsemble);
    }
    for m in members {
        check_shapes(m, truth)?;
    }
    let (rows, cols) = truth.shape();
    let mut cell = Vec::with_capacity(members.len());
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            cell.clear();
            cell.extend(members.iter().map(|m| m[(i, j)]));
            total += crps_ensemble(&cell, truth[(i, j)])?;
        }
    }
    Ok(total / (rows * cols) as f64)
}

/// Fraction of cells with `lower ≤ truth ≤ upper`.
pub fn interval_coverage(
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    truth: &DMatrix<f64>,
) -> Result<f64, MetricsError> {
    check_shapes(lower, truth)?;
    check_shapes(upper, truth)?;
    let (rows, cols) = truth.shape();
    for i in 0..rows {
        for j in 0..cols {
            if lower[(i, j)] > upper[(i, j)] {
                return Err(MetricsError::InvertedInterval { row: i, col: j });
            }
        }
    }
    let mut hits = 0usize;
    for i in 0..rows {
        for j in 0..cols {
            let t = truth[(i, j)];
            if lower[(i, j)] <= t && t <= upper[(i, j)] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (rows * cols) as f64)
}

/// Scores for one slice of a verification set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SliceScores {
    /// Forecast row (per-lead breakdown) or location id (per-location).
    pub index: usize,
    pub mspe: f64,
    pub crps: f64,
    pub coverage: f64,
}

/// Aggregate verification of an ensemble forecast against observed fields.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreReport {
    pub mspe: f64,
    pub crps_mean: f64,
    pub coverage: f64,
    pub per_lead: Vec<SliceScores>,
    pub per_location: Vec<SliceScores>,
}

impl ScoreReport {
    /// Score a forecast's members, mean, and interval against the truth.
    /// `per_lead` is indexed by forecast row, `per_location` by column.
    pub fn compute(
        forecast: &EnsembleForecast,
        truth: &DMatrix<f64>,
    ) -> Result<Self, MetricsError> {
        let overall_mspe = mspe(&forecast.mean, truth)?;
        let crps_mean = crps_field(&forecast.member_values, truth)?;
        let coverage = interval_coverage(&forecast.lower, &forecast.upper, truth)?;

        let (rows, cols) = truth.shape();
        let mut per_lead = Vec::with_capacity(rows);
        for i in 0..rows {
            per_lead.push(slice_scores(forecast, truth, i, RowOrCol::Row)?);
        }
        let mut per_location = Vec::with_capacity(cols);
        for j in 0..cols {
            per_location.push(slice_scores(forecast, truth, j, RowOrCol::Col)?);
        }
        Ok(ScoreReport {
            mspe: overall_mspe,
            crps_mean,
            coverage,
            per_lead,
            per_location,
        })
    }
}

enum RowOrCol {
    Row,
    Col,
}

fn slice_scores(
    forecast: &EnsembleForecast,
    truth: &DMatrix<f64>,
    index: usize,
    axis: RowOrCol,
) -> Result<SliceScores, MetricsError> {
    let cells: Vec<(usize, usize)> = match axis {
        RowOrCol::Row => (0..truth.ncols()).map(|j| (index, j)).collect(),
        RowOrCol::Col => (0..truth.nrows()).map(|i| (i, index)).collect(),
    };
    let mut sq = 0.0;
    let mut crps = 0.0;
    let mut hits = 0usize;
    let mut members = Vec::with_capacity(forecast.member_values.len());
    for &(i, j) in &cells {
        let t = truth[(i, j)];
        let d = forecast.mean[(i, j)] - t;
        sq += d * d;
        members.clear();
        members.extend(forecast.member_values.iter().map(|m| m[(i, j)]));
        crps += crps_ensemble(&members, t)?;
        if forecast.lower[(i, j)] <= t && t <= forecast.upper[(i, j)] {
            hits += 1;
        }
    }
    let n = cells.len() as f64;
    Ok(SliceScores {
        index,
        mspe: sq / n,
        crps: crps / n,
        coverage: hits as f64 / n,
    })
}
