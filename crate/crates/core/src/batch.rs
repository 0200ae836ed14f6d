//! Row-major batches of `d`-dimensional points.

use crate::error::{Error, Result};

/// `len() x dim()` matrix of particle states stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    dim: usize,
    data: Vec<f64>,
}

impl Batch {
    /// Empty batch of `dim`-dimensional points.
    ///
    /// # Panics
    /// If `dim == 0`.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "batch dimension must be positive");
        Batch {
            dim,
            data: Vec::new(),
        }
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        assert!(dim > 0, "batch dimension must be positive");
        Batch {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::input(format!(
                "flat buffer of length {} is not a whole number of {dim}-dimensional rows",
                data.len()
            )));
        }
        Ok(Batch { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::input("cannot infer dimension from zero rows"))?;
        let mut batch = Batch::new(first.as_ref().len().max(1));
        for row in rows {
            batch.push(row.as_ref())?;
        }
        Ok(batch)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::input(format!(
                "row of length {} pushed into a {}-dimensional batch",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Appends all rows of `other` (concatenation along the batch axis).
    pub fn extend(&mut self, other: &Batch) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::input(format!(
                "cannot concatenate a {}-dimensional batch onto a {}-dimensional one",
                other.dim, self.dim
            )));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// New batch holding copies of the listed rows, in order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Batch {
            dim: self.dim,
            data,
        }
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Unbiased sample covariance, row-major `dim x dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for row in self.rows() {
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in 0..d {
                    cov[a * d + b] += da * (row[b] - mean[b]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        cov.iter_mut().for_each(|c| *c /= denom);
        cov
    }
}
