//! Sample containers: a dense column-major data matrix and the paired
//! `(x, y)` dataset the conditional statistics operate on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N x d` matrix of observations, stored column-major so each variable is
/// a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    n_samples: usize,
    n_vars: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn from_column_major(n_samples: usize, n_vars: usize, values: Vec<f64>) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::InvalidData("data matrix needs at least one variable".into()));
        }
        if n_samples < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                found: n_samples,
            });
        }
        if values.len() != n_samples * n_vars {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: n_samples * n_vars,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos % n_samples,
                pos / n_samples
            )));
        }
        Ok(Self {
            n_samples,
            n_vars,
            values,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * columns.len());
        for col in columns {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    left: col.len(),
                    right: n,
                });
            }
            values.extend_from_slice(col);
        }
        Self::from_column_major(n, columns.len(), values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut values = vec![0.0; n * d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                values[j * n + i] = *v;
            }
        }
        Self::from_column_major(n, d, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_samples..(j + 1) * self.n_samples]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_samples)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n_samples + row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_vars).map(|j| self.get(i, j)).collect()
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.values
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_vars);
        for col in self.columns() {
            values.extend(rows.iter().map(|&r| col[r]));
        }
        Self::from_column_major(rows.len(), self.n_vars, values)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(cols.len() * self.n_samples);
        for &c in cols {
            values.extend_from_slice(self.column(c));
        }
        Self::from_column_major(self.n_samples, cols.len(), values)
    }

    /// Appends one column on the right.
    pub fn with_column(&self, extra: &[f64]) -> Result<Self> {
        if extra.len() != self.n_samples {
            return Err(Error::LengthMismatch {
                left: extra.len(),
                right: self.n_samples,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(extra);
        Self::from_column_major(self.n_samples, self.n_vars + 1, values)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<Self> {
        if other.n_vars != self.n_vars {
            return Err(Error::DimMismatch {
                expected: self.n_vars,
                found: other.n_vars,
            });
        }
        let n = self.n_samples + other.n_samples;
        let mut values = Vec::with_capacity(n * self.n_vars);
        for (a, b) in self.columns().zip(other.columns()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Self::from_column_major(n, self.n_vars, values)
    }
}

/// `N` observations of `(x in R^p, y in R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    x: DataMatrix,
    y: Vec<f64>,
}

impl PairedDataset {
    pub fn new(x: DataMatrix, y: Vec<f64>) -> Result<Self> {
        if x.n_samples() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.n_samples(),
                right: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite target value".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DataMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_vars()
    }

    /// `[x | y]`: coordinates `0..p` are x, coordinate `p` is y.
    pub fn joint(&self) -> DataMatrix {
        self.x
            .with_column(&self.y)
            .expect("lengths validated at construction")
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows)?;
        let y = rows.iter().map(|&r| self.y[r]).collect();
        Self::new(x, y)
    }

    pub fn concat(&self, other: &PairedDataset) -> Result<Self> {
        let x = self.x.vstack(&other.x)?;
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Self::new(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_columns_agree() {
        let m = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.column(0), &[1.0, 3.0, 5.0]);
        assert_eq!(m.column(1), &[2.0, 4.0, 6.0]);
        assert_eq!(m.row(1), vec![3.0, 4.0]);
        let s = m.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.row(0), vec![5.0, 6.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DataMatrix::from_rows(&[vec![1.0]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        let x = DataMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(PairedDataset::new(x, vec![1.0]).is_err());
    }

    #[test]
    fn joint_puts_target_last() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let ds = PairedDataset::new(x, vec![9.0, 8.0]).unwrap();
        let j = ds.joint();
        assert_eq!(j.n_vars(), 3);
        assert_eq!(j.column(2), &[9.0, 8.0]);
    }
}
