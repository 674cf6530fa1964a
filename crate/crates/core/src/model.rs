//! Linear systems assembled from dictionaries, and sparse models fitted to them.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of one row of a [`LinearSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTag {
    /// Equation (dictionary LHS) this row belongs to.
    pub equation: usize,
    /// Sample point index (strong form) or subdomain index (weak form).
    pub sample: usize,
}

/// `theta * c ~ b`, with unit-norm columns.
///
/// The raw (unnormalized) column `j` equals `theta[:, j] * column_scales[j]`.
/// Columns that were identically zero keep a scale of 1 and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub theta: Array2<f64>,
    pub b: Array1<f64>,
    pub column_scales: Array1<f64>,
    pub row_map: Vec<RowTag>,
}

impl LinearSystem {
    pub fn from_raw(mut theta: Array2<f64>, b: Array1<f64>, row_map: Vec<RowTag>) -> Result<Self> {
        let (m, p) = theta.dim();
        if b.len() != m || row_map.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "theta has {m} rows, b has {}, row map has {}",
                b.len(),
                row_map.len()
            )));
        }
        if theta.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "linear system contains non-finite entries".into(),
            ));
        }
        if m < p {
            log::warn!("underdetermined system: {m} rows for {p} columns");
        }
        let mut scales = Array1::zeros(p);
        for (j, mut col) in theta.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
                scales[j] = norm;
            } else {
                log::warn!("column {j} is identically zero");
                scales[j] = 1.0;
            }
        }
        Ok(LinearSystem {
            theta,
            b,
            column_scales: scales,
            row_map,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.theta.ncols()
    }

    /// Raw column `j` before normalization.
    pub fn raw_column(&self, j: usize) -> Array1<f64> {
        self.theta.column(j).mapv(|v| v * self.column_scales[j])
    }

    /// Restricts to a subset of columns (keeps rows and scales of the kept columns).
    pub fn select_columns(&self, cols: &[usize]) -> LinearSystem {
        LinearSystem {
            theta: self.theta.select(Axis(1), cols),
            b: self.b.clone(),
            column_scales: self.column_scales.select(Axis(0), cols),
            row_map: self.row_map.clone(),
        }
    }

    /// Relative residual `||theta_raw c - b|| / ||b||` for coefficients in raw units.
    pub fn relative_residual_raw(&self, coeffs_raw: &[f64]) -> f64 {
        let scaled: Array1<f64> = Array1::from_iter(
            coeffs_raw
                .iter()
                .zip(self.column_scales.iter())
                .map(|(c, s)| c * s),
        );
        let r = self.theta.dot(&scaled) - &self.b;
        r.dot(&r).sqrt() / self.b.dot(&self.b).sqrt()
    }
}

/// A sparse coefficient vector over a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    /// Strictly increasing term indices.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`, in unscaled units.
    pub coefficients: Vec<f64>,
    /// Squared residual on the normalized system.
    pub residual_sq: f64,
    pub sparsity: usize,
}

impl SparseModel {
    /// Builds a model, sorting the support and dropping exact zeros.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>, residual_sq: f64) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().filter(|(_, c)| *c != 0.0).collect();
        pairs.sort_by_key(|(i, _)| *i);
        pairs.dedup_by_key(|(i, _)| *i);
        let (support, coefficients): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        SparseModel {
            sparsity: support.len(),
            support,
            coefficients,
            residual_sq: residual_sq.max(0.0),
        }
    }

    pub fn empty() -> Self {
        SparseModel::new(std::iter::empty(), 0.0)
    }

    pub fn coefficient(&self, term: usize) -> Option<f64> {
        self.support
            .iter()
            .position(|&i| i == term)
            .map(|k| self.coefficients[k])
    }

    /// Dense length-`p` coefficient vector with zeros off the support.
    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; p];
        for (&i, &c) in self.support.iter().zip(&self.coefficients) {
            if i < p {
                v[i] = c;
            }
        }
        v
    }

    pub fn check_invariants(&self) -> bool {
        self.coefficients.len() == self.support.len()
            && self.sparsity == self.support.len()
            && self.support.windows(2).all(|w| w[0] < w[1])
            && self.residual_sq >= 0.0
    }
}
