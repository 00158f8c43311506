use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// Dense row-major matrix of `f64`. Dimensions are fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows_data: &[Vec<f64>]) -> Result<Self> {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, Vec::len);
        for row in rows_data {
            if row.len() != cols {
                return Err(NnError::DimMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: row.len(),
                });
            }
        }
        Ok(Matrix {
            rows,
            cols,
            data: rows_data.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `y = self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(NnError::DimMismatch {
                context: "matvec",
                expected: self.cols,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// `y = self^T * x`, used when propagating gradients back through a layer.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(NnError::DimMismatch {
                context: "t_matvec",
                expected: self.rows,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xv = x[r];
            if xv != 0.0 {
                for (yc, w) in y.iter_mut().zip(row) {
                    *yc += w * xv;
                }
            }
        }
        Ok(y)
    }

    /// Accumulates the outer product `a * b^T` into `self`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != self.rows || b.len() != self.cols {
            return Err(NnError::DimMismatch {
                context: "add_outer",
                expected: self.rows * self.cols,
                actual: a.len() * b.len(),
            });
        }
        for (r, av) in a.iter().enumerate() {
            if *av == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, bv) in row.iter_mut().zip(b) {
                *w += av * bv;
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}
