//! Design and response containers.
//!
//! A [`DesignMatrix`] stores `N` input rows of dimension `q` contiguously so
//! that distance computations touch one cache line per row. A
//! [`ResponseMatrix`] is `L x N`: column `j` is the time series produced at
//! design row `j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl DesignMatrix {
    /// Builds a design from row-major data. Bounds default to the observed
    /// per-column range.
    pub fn from_row_major(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{dim} design, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        let bounds = (0..dim)
            .map(|j| {
                (0..rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = data[i * dim + j];
                    (lo.min(v), hi.max(v))
                })
            })
            .collect();
        Ok(Self {
            rows,
            dim,
            data,
            bounds,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} entries, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::from_row_major(rows.len(), dim, rows.concat())
    }

    /// Replaces the bounds (e.g. with the sampling domain).
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{} bounds for a {}-dimensional design",
                bounds.len(),
                self.dim
            )));
        }
        self.bounds = bounds;
        Ok(self)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New design holding the given rows in the given order; bounds are kept.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            dim: self.dim,
            data,
            bounds: self.bounds.clone(),
        }
    }

    /// Largest squared Euclidean distance between any two rows.
    pub fn max_sq_distance(&self) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.rows {
                best = best.max(sq_distance(self.row(i), self.row(j)));
            }
        }
        best
    }
}

#[inline]
pub fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `L x N` matrix of time-series responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix(DMatrix<f64>);

impl ResponseMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for (col, c) in values.column_iter().enumerate() {
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self(values))
    }

    /// Builds the matrix from per-input series, one column per series.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let len = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != len) {
            return Err(Error::Dimension(format!(
                "series {bad} has length {}, expected {len}",
                columns[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(len, columns.len(), |t, j| columns[j][t]))
    }

    /// Series length `L`.
    #[inline]
    pub fn len_series(&self) -> usize {
        self.0.nrows()
    }

    /// Number of series `N`.
    #[inline]
    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.0.column(j).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self(self.0.select_columns(idx))
    }
}
