//! Dense row-major `f64` tensors and the forward kernels used by the
//! models. The differentiable versions of these kernels live in
//! [`crate::graph`]; the functions here are value-level and shared with it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are floored at this value before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Largest dropout rate accepted anywhere in the crate.
pub const MAX_DROPOUT: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that every dimension is positive and that
    /// the data length equals the product of the shape. An empty shape is a
    /// scalar holding exactly one value.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Precondition(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Precondition(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// A rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Precondition("ragged rows".into()));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                if bound > 0.0 {
                    rng.gen_range(-bound..=bound)
                } else {
                    0.0
                }
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element `(i, j)` of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols: usize = self.shape[1..].iter().product();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols: usize = self.shape[1..].iter().product();
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn require_rank(t: &Tensor, rank: usize, op: &'static str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Precondition(format!(
            "{op} expects a rank-{rank} tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Matrix product of `[m×k]` and `[k×p]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank(a, 2, "matmul")?;
    require_rank(b, 2, "matmul")?;
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, p) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let out_row = &mut out[i * p..(i + 1) * p];
        for t in 0..k {
            let av = a.data[i * k + t];
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[t * p..(t + 1) * p];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, p], out)
}

/// `W x` for `W: [K×F]`, `x: [F]`.
pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    require_rank(w, 2, "matvec")?;
    let (rows, cols) = (w.shape[0], w.shape[1]);
    if x.len() != cols || x.rank() != 1 {
        return Err(Error::shape("matvec", &w.shape, &x.shape));
    }
    let out = (0..rows)
        .map(|i| dot_slices(w.row(i), &x.data))
        .collect::<Vec<_>>();
    Tensor::new(vec![rows], out)
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Valid (unpadded) convolution of a bank of `m` filters of shape `[h×d]`
/// over an instance matrix `[n×d]`. Output is `[m × (n−h+1)]`; row `k`
/// is the feature map of filter `k`.
pub fn conv1d_bank(instance: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    require_rank(instance, 2, "conv1d")?;
    require_rank(filters, 3, "conv1d")?;
    let (n, d) = (instance.shape[0], instance.shape[1]);
    let (m, h, fd) = (filters.shape[0], filters.shape[1], filters.shape[2]);
    if fd != d {
        return Err(Error::shape("conv1d", &instance.shape, &filters.shape));
    }
    if bias.len() != m {
        return Err(Error::shape("conv1d bias", &filters.shape, &bias.shape));
    }
    if h > n {
        return Err(Error::Precondition(format!(
            "filter height {h} exceeds instance length {n}; pad upstream"
        )));
    }
    let len = n - h + 1;
    let window = h * d;
    let mut out = vec![0.0; m * len];
    for k in 0..m {
        let w = &filters.data[k * window..(k + 1) * window];
        let b = bias.data[k];
        for j in 0..len {
            // rows j..j+h are contiguous in row-major storage
            let x = &instance.data[j * d..j * d + window];
            out[k * len + j] = dot_slices(w, x) + b;
        }
    }
    Tensor::new(vec![m, len], out)
}

/// Single-filter valid convolution: `filter: [h×d]` over `instance: [n×d]`.
pub fn conv1d_valid(instance: &Tensor, filter: &Tensor, bias: f64) -> Result<Tensor> {
    require_rank(filter, 2, "conv1d_valid")?;
    let bank = Tensor::new(
        vec![1, filter.shape[0], filter.shape[1]],
        filter.data.clone(),
    )?;
    let out = conv1d_bank(instance, &bank, &Tensor::vector(vec![bias]))?;
    let len = out.len();
    out.reshape(vec![len])
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Maximum and its position; ties resolve to the lowest index.
pub fn max_pool_1(values: &[f64]) -> Result<(f64, usize)> {
    let first = *values
        .first()
        .ok_or_else(|| Error::Precondition("max pooling over an empty feature map".into()))?;
    let mut best = (first, 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// Numerically stable softmax over a non-empty vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Precondition("softmax over an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("softmax input {logits:?}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `−ln(max(probs[label], 1e−12))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs.get(label).ok_or(Error::Index {
        what: "class label",
        index: label,
        len: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..=MAX_DROPOUT).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate {rate} outside [0, {MAX_DROPOUT}]"
        )));
    }
    Ok(())
}

/// Inverted-dropout multipliers: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 − rate)`. Returns `None` when dropout is the identity.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    check_dropout_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
    Ok(match dropout_mask(x.len(), rate, mode, rng)? {
        None => x.clone(),
        Some(mask) => Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().zip(&mask).map(|(v, m)| v * m).collect(),
        },
    })
}
