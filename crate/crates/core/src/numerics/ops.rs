//! Elementwise activations and normalizers shared by the eager and taped paths.

use rand::Rng;

use super::tensor::{dot, Tensor};
use crate::error::{Error, Result};

/// Norms at or below this are reported as [`Error::NearZeroNorm`].
pub const NORM_EPS: f64 = 1e-6;

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Parametric ReLU with one slope per column (last axis).
pub fn prelu(x: &Tensor, slopes: &Tensor) -> Result<Tensor> {
    let c = x.cols();
    if slopes.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "prelu: {} slopes for {c} columns",
            slopes.len()
        )));
    }
    let mut out = x.clone();
    let s = slopes.data();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if *v < 0.0 {
            *v *= s[i % c];
        }
    }
    Ok(out)
}

pub fn softmax(scores: &Tensor) -> Tensor {
    let max = scores.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = scores.map(|v| (v - max).exp());
    let z = exps.sum();
    exps.map(|v| v / z)
}

pub fn log_softmax(scores: &Tensor) -> Tensor {
    let max = scores.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = scores.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    scores.map(|v| v - lse)
}

pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    let n = v.norm();
    if n <= NORM_EPS {
        return Err(Error::NearZeroNorm { norm: n, eps: NORM_EPS });
    }
    Ok(v.map(|x| x / n))
}

/// Rescales each row to unit L2 norm. Also returns the pre-normalization norms.
pub fn normalize_rows(x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let n = dot(row, row).sqrt();
        if n <= NORM_EPS {
            return Err(Error::NearZeroNorm { norm: n, eps: NORM_EPS });
        }
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    for n in [na, nb] {
        if n <= NORM_EPS {
            return Err(Error::NearZeroNorm { norm: n, eps: NORM_EPS });
        }
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(shape);
    for v in mask.data_mut() {
        *v = if rng.random::<f64>() < rate { 0.0 } else { keep };
    }
    Ok(mask)
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    x.mul(&dropout_mask(x.shape(), rate, rng)?)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
