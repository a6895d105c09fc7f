//! Row-major dense storage and the forward kernels shared by the tape and
//! by gradient-free inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Plain vector of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense1 {
    data: Vec<f64>,
}

impl Dense2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. Panics on ragged input; meant
    /// for literals in tests and fixtures.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::row_vector(vec![v])
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
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

    /// Value of a `1 × 1` matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Dense2 {
        let mut out = Dense2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Dense2) {
        debug_assert_eq!(self.shape(), other.shape());
        axpy(1.0, &other.data, &mut self.data);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn to_dense1(&self) -> Dense1 {
        Dense1::new(self.data.clone())
    }
}

impl Dense1 {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// As a `1 × len` row.
    pub fn to_row(&self) -> Dense2 {
        Dense2::row_vector(self.data.clone())
    }
}

impl From<Vec<f64>> for Dense1 {
    fn from(data: Vec<f64>) -> Self {
        Self::new(data)
    }
}

impl std::ops::Index<usize> for Dense1 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

/// Inner product with four independent accumulators. Every matrix kernel
/// goes through this so that a row computed alone and the same row computed
/// inside a stacked batch are bitwise equal.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = 4 * i;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dim_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension {
        op,
        left: a,
        right: b,
    }
}

/// `y = x Wᵀ + b` applied to every row of `x`; `W` is `out × in`, `b` is
/// `1 × out`.
pub fn affine_rows(x: &Dense2, w: &Dense2, b: &Dense2) -> Result<Dense2> {
    if x.cols != w.cols {
        return Err(dim_err("affine", x.shape(), w.shape()));
    }
    if b.rows != 1 || b.cols != w.rows {
        return Err(dim_err("affine", w.shape(), b.shape()));
    }
    let mut out = Dense2::zeros(x.rows, w.rows);
    for r in 0..x.rows {
        let xr = x.row(r);
        let yr = out.row_mut(r);
        for (j, y) in yr.iter_mut().enumerate() {
            *y = dot(xr, w.row(j)) + b.data[j];
        }
    }
    Ok(out)
}

/// Single-vector affine map `W x + b`.
pub fn affine(x: &Dense1, w: &Dense2, b: &Dense1) -> Result<Dense1> {
    let out = affine_rows(&x.to_row(), w, &b.to_row())?;
    Ok(out.to_dense1())
}

/// `a · b`.
pub fn matmul(a: &Dense2, b: &Dense2) -> Result<Dense2> {
    if a.cols != b.rows {
        return Err(dim_err("matmul", a.shape(), b.shape()));
    }
    let mut out = Dense2::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik != 0.0 {
                axpy(aik, b.row(k), orow);
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_t(a: &Dense2, b: &Dense2) -> Result<Dense2> {
    if a.cols != b.cols {
        return Err(dim_err("matmul_t", a.shape(), b.shape()));
    }
    let mut out = Dense2::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    Ok(out)
}

pub fn tanh_map(x: &Dense2) -> Dense2 {
    Dense2 {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|v| v.tanh()).collect(),
    }
}

pub fn relu_map(x: &Dense2) -> Dense2 {
    Dense2 {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Dense2) -> Dense2 {
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Column means, as a `1 × cols` row.
pub fn mean_rows(x: &Dense2) -> Dense2 {
    let mut out = Dense2::zeros(1, x.cols);
    for r in 0..x.rows {
        axpy(1.0, x.row(r), &mut out.data);
    }
    let inv = 1.0 / x.rows as f64;
    out.data.iter_mut().for_each(|v| *v *= inv);
    out
}

/// Smallest norm accepted by [`l2_normalize`].
pub const MIN_NORM: f64 = 1e-12;

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn l2_normalize(x: &Dense1) -> Result<Dense1> {
    let norm = x.norm();
    if !(norm >= MIN_NORM) {
        return Err(Error::DegenerateVector { norm });
    }
    Ok(Dense1::new(x.data.iter().map(|v| v / norm).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_bias() {
        let y = affine(
            &Dense1::new(vec![1.0, 2.0]),
            &Dense2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            &Dense1::zeros(2),
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let y = affine(
            &Dense1::new(vec![1.0, 1.0]),
            &Dense2::from_rows(&[vec![2.0, 3.0]]),
            &Dense1::new(vec![1.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(
            &Dense1::new(vec![1.0, 2.0, 3.0]),
            &Dense2::zeros(2, 2),
            &Dense1::zeros(2),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x3") && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn tanh_values() {
        assert_eq!(tanh_map(&Dense2::scalar(0.0)).item(), 0.0);
        assert!((tanh_map(&Dense2::scalar(1e6)).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&Dense2::from_rows(&[
            vec![0.0, 0.0],
            vec![2f64.ln(), 0.0],
            vec![1000.0, 1000.0],
        ]));
        assert_eq!(s.row(0), &[0.5, 0.5]);
        assert!((s.get(1, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.get(1, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.row(2), &[0.5, 0.5]);
    }

    #[test]
    fn l2_normalize_examples() {
        let v = l2_normalize(&Dense1::new(vec![3.0, 4.0])).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let w = l2_normalize(&v).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-12);
        assert!((w[0] - 0.6).abs() < 1e-12);
        assert!(matches!(
            l2_normalize(&Dense1::zeros(2)),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn stacked_rows_match_single_row_bitwise() {
        let w = Dense2::from_rows(&[vec![0.3, -1.7, 2.2], vec![1e-3, 5.5, -0.25]]);
        let b = Dense2::row_vector(vec![0.1, -0.2]);
        let x = Dense2::from_rows(&[vec![1.1, 2.3, -0.7], vec![0.9, 0.4, 8.0]]);
        let stacked = affine_rows(&x, &w, &b).unwrap();
        for r in 0..2 {
            let single = affine_rows(&Dense2::row_vector(x.row(r).to_vec()), &w, &b).unwrap();
            assert_eq!(single.row(0), stacked.row(r));
        }
    }
}
