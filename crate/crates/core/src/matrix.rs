//! Dense row-major `f64` matrix with just the products the network needs.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self · wᵀ + bias`, where `w` is `out × in` and `self` is `n × in`.
    pub fn affine(&self, w: &Matrix, bias: &[f64]) -> Matrix {
        assert_eq!(self.cols, w.cols, "affine inner dimension");
        assert_eq!(bias.len(), w.rows, "affine bias length");
        let mut out = Matrix::zeros(self.rows, w.rows);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(bias);
        }
        // wᵀ is read through strides (row stride 1, column stride `in`)
        gemm(self, (self.cols, 1), w, (1, w.cols), self.cols, 1.0, &mut out);
        out
    }

    /// `self · w`, where `self` is `n × out` and `w` is `out × in`.
    pub fn matmul(&self, w: &Matrix) -> Matrix {
        assert_eq!(self.cols, w.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, w.cols);
        gemm(self, (self.cols, 1), w, (w.cols, 1), self.cols, 0.0, &mut out);
        out
    }

    /// `selfᵀ · x`, where `self` is `n × out` and `x` is `n × in`; result is `out × in`.
    pub fn t_matmul(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.rows, x.rows, "t_matmul row count");
        let mut out = Matrix::zeros(self.cols, x.cols);
        gemm(self, (1, self.cols), x, (x.cols, 1), self.rows, 0.0, &mut out);
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (sj, &v) in s.iter_mut().zip(r) {
                *sj += v;
            }
        }
        s
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

/// `out = a·b + beta·out` with inner dimension `k`; `a` and `b` are addressed by
/// (row, column) strides so either may be read transposed. `out` is `m × n` row-major.
fn gemm(
    a: &Matrix,
    (rsa, csa): (usize, usize),
    b: &Matrix,
    (rsb, csb): (usize, usize),
    k: usize,
    beta: f64,
    out: &mut Matrix,
) {
    let (m, n) = out.shape();
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: strides and extents describe views that stay inside each buffer;
    // `out` is a distinct, exclusively borrowed m × n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
/// Summation order is fixed (eight interleaved lanes, then the tail), so results are
/// reproducible across runs.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
