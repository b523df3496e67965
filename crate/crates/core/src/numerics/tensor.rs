use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// Scalars have shape `[1]`, vectors `[n]`, matrices `[rows, cols]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(Error::DimensionMismatch(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Row count of a matrix; a vector counts as a single row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn scale_assign(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    fn same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `M x` for an `r x c` matrix and a `c` vector.
    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        let (r, c) = self.dims2("matvec")?;
        if x.len() != c {
            return Err(Error::DimensionMismatch(format!("matvec: {r}x{c} by {}", x.len())));
        }
        let out = (0..r).map(|i| dot(self.row(i), &x.data)).collect();
        Ok(Tensor::vector(out))
    }

    /// `M^T p` for an `r x c` matrix and an `r` vector: the `p`-weighted sum of rows.
    pub fn vecmat(&self, p: &Tensor) -> Result<Tensor> {
        let (r, c) = self.dims2("vecmat")?;
        if p.len() != r {
            return Err(Error::DimensionMismatch(format!("vecmat: {} by {r}x{c}", p.len())));
        }
        let mut out = vec![0.0; c];
        for i in 0..r {
            axpy(p.data[i], self.row(i), &mut out);
        }
        Ok(Tensor::vector(out))
    }

    /// `A B^T` for `A: m x k` and `B: n x k`.
    pub fn matmul_nt(&self, b: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul_nt")?;
        let (n, k2) = b.dims2("matmul_nt")?;
        if k != k2 {
            return Err(Error::DimensionMismatch(format!("matmul_nt: {m}x{k} by ({n}x{k2})^T")));
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a = self.row(i);
            out.extend((0..n).map(|j| dot(a, b.row(j))));
        }
        Tensor::matrix(m, n, out)
    }

    /// `A B` for `A: m x k` and `B: k x n`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = b.dims2("matmul")?;
        if k != k2 {
            return Err(Error::DimensionMismatch(format!("matmul: {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let dst = &mut out[i * n..(i + 1) * n];
            for (l, &a) in self.row(i).iter().enumerate() {
                axpy(a, b.row(l), dst);
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `A^T B` for `A: k x m` and `B: k x n`.
    pub fn matmul_tn(&self, b: &Tensor) -> Result<Tensor> {
        let (k, m) = self.dims2("matmul_tn")?;
        let (k2, n) = b.dims2("matmul_tn")?;
        if k != k2 {
            return Err(Error::DimensionMismatch(format!("matmul_tn: ({k}x{m})^T by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        for l in 0..k {
            let brow = b.row(l);
            for (i, &a) in self.row(l).iter().enumerate() {
                axpy(a, brow, &mut out[i * n..(i + 1) * n]);
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub fn outer(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Vec::with_capacity(a.len() * b.len());
        for &x in &a.data {
            out.extend(b.data.iter().map(|&y| x * y));
        }
        Tensor { shape: vec![a.len(), b.len()], data: out }
    }

    /// Adds the vector `v` to every row.
    pub fn add_row(&self, v: &Tensor) -> Result<Tensor> {
        let (r, c) = self.dims2("add_row")?;
        if v.len() != c {
            return Err(Error::DimensionMismatch(format!("add_row: {r}x{c} + {}", v.len())));
        }
        let mut out = self.clone();
        for i in 0..r {
            out.row_mut(i).iter_mut().zip(&v.data).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }

    /// Multiplies row `i` by `s[i]`.
    pub fn scale_rows(&self, s: &Tensor) -> Result<Tensor> {
        let (r, c) = self.dims2("scale_rows")?;
        if s.len() != r {
            return Err(Error::DimensionMismatch(format!("scale_rows: {r}x{c} by {}", s.len())));
        }
        let mut out = self.clone();
        for i in 0..r {
            out.row_mut(i).iter_mut().for_each(|a| *a *= s.data[i]);
        }
        Ok(out)
    }

    /// Column sums: `r x c -> c`.
    pub fn sum_rows(&self) -> Tensor {
        let mut out = vec![0.0; self.cols()];
        for i in 0..self.rows() {
            axpy(1.0, self.row(i), &mut out);
        }
        Tensor::vector(out)
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.dims2("gather_rows")?;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::DimensionMismatch(format!("row {i} of {r}")));
            }
            out.extend_from_slice(self.row(i));
        }
        Tensor::matrix(indices.len(), c, out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    pub(crate) fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::DimensionMismatch(format!("{what}: expected a matrix, got {s:?}"))),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Four independent partial sums so the loop vectorizes.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}
