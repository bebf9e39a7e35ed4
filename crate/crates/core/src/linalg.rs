//! Small dense kernel: row-major matrices and LU with partial pivoting.
//!
//! Block sizes in this crate stay in the low hundreds, so a straightforward
//! `O(n^3)` factorization is all that is needed.

use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Pivots with magnitude below this are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry produced")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_values(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copies `block` into `self` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &Self) {
        assert!(
            row + block.rows <= self.rows && col + block.cols <= self.cols,
            "block out of range"
        );
        for i in 0..block.rows {
            let dst = (row + i) * self.cols + col;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `P A = L U` with unit lower `L`, packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    packed: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "LU of a non-square {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)]))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty range");
            if pivot.is_nan() || pivot.abs() < PIVOT_FLOOR {
                return Err(LinalgError::Singular { column: k, pivot });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self { packed: lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.packed.rows
    }

    /// Solves `A x = b` in place.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        let lu = &self.packed;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / lu[(i, i)];
        }
        finite(x)
    }

    /// Solves `x A = b` for a row vector `x`.
    pub fn solve_vec_left(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "left-hand side of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        // A^T = U^T L^T P, so solve U^T y = b, L^T z = y, x = P^T z.
        let lu = &self.packed;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| lu[(j, i)] * y[j]).sum();
            y[i] = (y[i] - s) / lu[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| lu[(j, i)] * y[j]).sum();
            y[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        finite(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if b.rows != self.dim() {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side with {} rows for a {}x{} system",
                b.rows,
                self.dim(),
                self.dim()
            )));
        }
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col = self.solve_vec(&b.col_values(j))?;
            for (i, v) in col.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// Solves `X A = B` row by row.
    pub fn solve_left(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if b.cols != self.dim() {
            return Err(LinalgError::DimensionMismatch(format!(
                "left-hand side with {} columns for a {}x{} system",
                b.cols,
                self.dim(),
                self.dim()
            )));
        }
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for i in 0..b.rows {
            let row = self.solve_vec_left(b.row(i))?;
            out.data[i * b.cols..(i + 1) * b.cols].copy_from_slice(&row);
        }
        Ok(out)
    }
}

fn finite(x: Vec<f64>) -> Result<Vec<f64>, LinalgError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// `X` with `A X = B`.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Lu::factor(a)?.solve(b)
}

pub fn invert(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Lu::factor(a)?.solve(&DenseMatrix::identity(a.rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_solve_returns_rhs() {
        let b = DenseMatrix::from_rows(&[&[1.0, -2.0], &[3.5, 0.0], &[7.0, 1e-3]]);
        assert_eq!(solve(&DenseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = solve(&a, &DenseMatrix::column(&[1.0, 1.0])).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.25]);
    }

    #[test]
    fn two_state_subgenerator_solve() {
        // S for lambda = 1, mu_1 = 0.9084218 with two transient states.
        let mu1 = 0.9084218;
        let s = DenseMatrix::from_rows(&[&[-(1.0 + mu1), mu1], &[2.0, -2.0]]);
        let x = solve(&s, &DenseMatrix::column(&[-1.0, -1.0])).unwrap();
        assert!((x[(0, 0)] - 1.4542109).abs() < 1e-12);
        assert!((x[(1, 0)] - 1.9542109).abs() < 1e-12);
    }

    #[test]
    fn invert_scalar_and_identity() {
        assert_eq!(
            invert(&DenseMatrix::identity(4)).unwrap(),
            DenseMatrix::identity(4)
        );
        let inv = invert(&DenseMatrix::from_rows(&[&[-2.0]])).unwrap();
        assert_eq!(inv[(0, 0)], -0.5);
    }

    #[test]
    fn singular_is_reported() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(invert(&a), Err(LinalgError::Singular { .. })));
        assert!(matches!(
            solve(&DenseMatrix::zeros(2, 2), &DenseMatrix::column(&[1.0, 1.0])),
            Err(LinalgError::Singular { column: 0, .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            Lu::factor(&DenseMatrix::zeros(2, 3)),
            Err(LinalgError::DimensionMismatch(_))
        ));
        assert!(matches!(
            solve(&DenseMatrix::identity(2), &DenseMatrix::column(&[1.0])),
            Err(LinalgError::DimensionMismatch(_))
        ));
        assert!(DenseMatrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(
            DenseMatrix::from_row_major(1, 1, vec![f64::NAN]),
            Err(LinalgError::NonFinite)
        );
    }

    #[test]
    fn left_solve_matches_transpose() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, -3.0, 0.5], &[4.0, 1.0, -2.0]]);
        let b = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.0, 5.0]]);
        let x = Lu::factor(&a).unwrap().solve_left(&b).unwrap();
        let back = x.matmul(&a).unwrap();
        assert!(back.sub(&b).unwrap().max_abs() < 1e-13);
    }

    fn well_conditioned(n: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |mut v| {
            // Strict diagonal dominance keeps the condition number modest.
            for i in 0..n {
                v[i * n + i] += if v[i * n + i] >= 0.0 {
                    n as f64 + 1.0
                } else {
                    -(n as f64 + 1.0)
                };
            }
            DenseMatrix::from_row_major(n, n, v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn solve_residual_is_small(
            (a, b) in (1usize..9).prop_flat_map(|n| (
                well_conditioned(n),
                proptest::collection::vec(-10.0f64..10.0, n * 2)
                    .prop_map(move |v| DenseMatrix::from_row_major(n, 2, v).unwrap()),
            ))
        ) {
            let x = solve(&a, &b).unwrap();
            let r = a.matmul(&x).unwrap().sub(&b).unwrap().max_abs();
            prop_assert!(r <= 1e-9 * b.max_abs().max(1.0));
        }

        #[test]
        fn double_inversion_is_identity(a in (1usize..9).prop_flat_map(well_conditioned)) {
            let back = invert(&invert(&a).unwrap()).unwrap();
            prop_assert!(back.sub(&a).unwrap().max_abs() <= 1e-8 * a.max_abs());
        }
    }
}
