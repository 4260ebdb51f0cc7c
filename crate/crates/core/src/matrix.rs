//! Dense `d × m` item matrices stored column-major, so that the latent
//! vector of item `j` is the contiguous slice `col(j)`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMatrix {
    d: usize,
    m: usize,
    data: Vec<f64>,
}

impl ItemMatrix {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            data: vec![0.0; d * m],
        }
    }

    /// Builds a matrix from column-major data (`data[j * d + k]` is row `k`
    /// of column `j`).
    pub fn from_col_major(d: usize, m: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != d * m {
            return Err(ModelError::Shape {
                expected: format!("{} entries ({d}x{m})", d * m),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { d, m, data })
    }

    /// Builds a matrix from `d` rows of length `m`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let d = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut out = Self::zeros(d, m);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::Shape {
                    expected: format!("row of length {m}"),
                    found: format!("row {k} of length {}", row.len()),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                out.data[j * d + k] = x;
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.d, self.m)
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[j * self.d + k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, j: usize, value: f64) {
        self.data[j * self.d + k] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// `‖self − other‖²_F`.
    pub fn dist_sq(&self, other: &ItemMatrix) -> Result<f64, ModelError> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_same_shape(&self, other: &ItemMatrix) -> Result<(), ModelError> {
        if self.shape() != other.shape() {
            return Err(ModelError::Shape {
                expected: format!("{}x{}", self.d, self.m),
                found: format!("{}x{}", other.d, other.m),
            });
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ItemMatrix) -> Result<(), ModelError> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_is_column_major() {
        let m = ItemMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.col(1), &[2.0, 5.0]);
        assert_eq!(m.get(1, 2), 6.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(ItemMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn dist_sq_checks_shape() {
        let a = ItemMatrix::zeros(2, 3);
        let b = ItemMatrix::zeros(3, 2);
        assert!(a.dist_sq(&b).is_err());
    }
}
