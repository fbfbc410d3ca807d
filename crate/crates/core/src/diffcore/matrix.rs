use serde::{Deserialize, Serialize};

use crate::error::{CdmError, Result};

/// Dense row-major matrix of `f64`.
///
/// The product kernels accumulate every output element over the inner
/// dimension in ascending order, independently of the other rows. Two equal
/// input rows therefore always produce bit-identical output rows, whatever
/// batch they are evaluated in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(CdmError::dim(
                "from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(CdmError::dim(
                    "from_rows",
                    format!("row {i} has {} values, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Scalar value of a 1x1 matrix.
    pub fn scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Checked product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(CdmError::dim(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(matmul(self, other))
    }
}

/// `a * b`. Zero entries of `a` are skipped, which makes one-hot selection
/// matrices and sparse response vectors cheap.
pub(crate) fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.rows);
    let (m, n) = (a.rows, b.cols);
    let mut out = Matrix::zeros(m, n);
    let axpy = |orow: &mut [f64], av: f64, brow: &[f64]| {
        for (o, &bv) in orow.iter_mut().zip(brow) {
            *o += av * bv;
        }
    };
    // Both loop orders accumulate every element in the order k = 0, 1, ...
    // so results do not depend on which one runs or on the other rows.
    if m * n <= b.data.len() {
        // small output: keep it resident and stream the rows of `b`
        for k in 0..a.cols {
            let brow = b.row(k);
            for i in 0..m {
                let av = a.data[i * a.cols + k];
                if av != 0.0 {
                    axpy(&mut out.data[i * n..(i + 1) * n], av, brow);
                }
            }
        }
    } else {
        // small `b`: keep it resident and finish one output row at a time
        for i in 0..m {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (k, &av) in a.row(i).iter().enumerate() {
                if av != 0.0 {
                    axpy(orow, av, b.row(k));
                }
            }
        }
    }
    out
}

/// `a^T * b`.
pub(crate) fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows, b.rows);
    matmul(&a.transpose(), b)
}

/// `a * b^T`.
pub(crate) fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.cols);
    matmul(a, &b.transpose())
}

const SIGMOID_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Overflow-safe logistic function. Saturated outputs are held one ulp inside
/// the open interval so the result is always strictly in (0, 1).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&Matrix::identity(3)).unwrap(), a);
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![-1.0, 4.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(matmul_tn(&a, &b), matmul(&a.transpose(), &b));
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert_eq!(matmul_nt(&a, &c), matmul(&a, &c.transpose()));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Matrix::zeros(2, 3);
        let err = a.matmul(&Matrix::zeros(2, 3)).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-800.0, -30.0, -5.0, -1e-3, 1e-3, 5.0, 30.0, 40.0, 800.0] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn equal_rows_give_identical_products_in_any_batch() {
        let w = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let x = vec![0.3, -1.0, 1.0];
        let alone = matmul(&Matrix::row_vector(&x), &w);
        let batch = Matrix::from_rows(&[vec![1.0, 0.0, -1.0], x.clone(), vec![0.7, 0.2, 0.1]]).unwrap();
        let many = matmul(&batch, &w);
        assert_eq!(alone.row(0), many.row(1));
    }
}
