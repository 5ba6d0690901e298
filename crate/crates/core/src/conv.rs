//! Dense N-dimensional count tensors on integer lattices and their convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major tensor whose entry `idx` sits at lattice point `origin + idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetTensor<T> {
    origin: Vec<i64>,
    shape: Vec<usize>,
    data: Vec<T>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

impl<T: Scalar> OffsetTensor<T> {
    pub fn zeros(origin: Vec<i64>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        OffsetTensor { origin, shape, data: vec![T::zero(); n] }
    }

    /// The convolution identity: a single one at the lattice origin.
    pub fn delta(ndim: usize) -> Self {
        OffsetTensor { origin: vec![0; ndim], shape: vec![1; ndim], data: vec![T::one()] }
    }

    pub fn from_parts(origin: Vec<i64>, shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if origin.len() != shape.len() || data.len() != shape.iter().product::<usize>() {
            return Err(Error::Contract("tensor parts disagree in size".into()));
        }
        Ok(OffsetTensor { origin, shape, data })
    }

    /// Count lattice points; duplicates accumulate.
    pub fn histogram(points: &[Vec<i64>]) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Contract("histogram of no points".into()));
        };
        let nd = first.len();
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            if p.len() != nd {
                return Err(Error::Contract("points of mixed dimension".into()));
            }
            for d in 0..nd {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let shape = (0..nd).map(|d| (hi[d] - lo[d] + 1) as usize).collect();
        let mut t = OffsetTensor::zeros(lo, shape);
        for p in points {
            let k = t.flat(p).expect("inside bounding box");
            t.data[k] += T::one();
        }
        Ok(t)
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != T::zero()).count()
    }

    pub fn total(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Flat position of an absolute lattice point.
    pub fn flat(&self, point: &[i64]) -> Option<usize> {
        let st = strides(&self.shape);
        let mut k = 0;
        for d in 0..self.ndim() {
            let i = point[d] - self.origin[d];
            if i < 0 || i as usize >= self.shape[d] {
                return None;
            }
            k += i as usize * st[d];
        }
        Some(k)
    }

    pub fn at(&self, point: &[i64]) -> T {
        self.flat(point).map_or(T::zero(), |k| self.data[k])
    }

    /// Absolute lattice point of a flat position.
    pub fn point(&self, mut k: usize) -> Vec<i64> {
        let st = strides(&self.shape);
        let mut p = vec![0; self.ndim()];
        for d in 0..self.ndim() {
            p[d] = self.origin[d] + (k / st[d]) as i64;
            k %= st[d];
        }
        p
    }

    /// Nonzero entries as `(point, value)`, row-major.
    pub fn entries(&self) -> Vec<(Vec<i64>, T)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(k, &v)| (self.point(k), v))
            .collect()
    }

    /// Sum out every axis from `keep` on.
    pub fn sum_trailing(&self, keep: usize) -> Self {
        let inner: usize = self.shape[keep..].iter().product();
        let data = self.data.chunks(inner.max(1)).map(|c| c.iter().copied().sum()).collect();
        OffsetTensor {
            origin: self.origin[..keep].to_vec(),
            shape: self.shape[..keep].to_vec(),
            data,
        }
    }

    /// Copy into a frame with the given origin and shape; entries outside are dropped.
    pub fn reframe(&self, origin: &[i64], shape: &[usize]) -> Self {
        let mut out = OffsetTensor::zeros(origin.to_vec(), shape.to_vec());
        for (p, v) in self.entries() {
            if let Some(k) = out.flat(&p) {
                out.data[k] = v;
            }
        }
        out
    }

    /// Zero every entry whose lattice point fails `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&[i64]) -> bool) {
        for k in 0..self.data.len() {
            if self.data[k] != T::zero() && !keep(&self.point(k)) {
                self.data[k] = T::zero();
            }
        }
    }

    /// Smallest frame holding every nonzero entry; an all-zero tensor keeps one zero cell.
    pub fn trimmed(&self) -> Self {
        let entries = self.entries();
        if entries.is_empty() {
            return OffsetTensor::zeros(self.origin.clone(), vec![1; self.ndim()]);
        }
        let nd = self.ndim();
        let mut lo = entries[0].0.clone();
        let mut hi = lo.clone();
        for (p, _) in &entries {
            for d in 0..nd {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let shape: Vec<usize> = (0..nd).map(|d| (hi[d] - lo[d] + 1) as usize).collect();
        self.reframe(&lo, &shape)
    }

    pub fn cast<U: Scalar>(&self) -> OffsetTensor<U> {
        OffsetTensor {
            origin: self.origin.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Full discrete convolution; the result's origin is the sum of the origins.
///
/// Loops over the nonzero entries of the sparser operand and adds shifted,
/// scaled rows of the other one.
pub fn convolve<T: Scalar>(a: &OffsetTensor<T>, b: &OffsetTensor<T>) -> Result<OffsetTensor<T>> {
    if a.ndim() != b.ndim() {
        return Err(Error::Contract(format!(
            "convolving {}-D with {}-D tensor",
            a.ndim(),
            b.ndim()
        )));
    }
    let (dense, sparse) = if a.nnz() >= b.nnz() { (a, b) } else { (b, a) };
    let nd = a.ndim();
    let origin: Vec<i64> = (0..nd).map(|d| a.origin[d] + b.origin[d]).collect();
    let shape: Vec<usize> = (0..nd).map(|d| a.shape[d] + b.shape[d] - 1).collect();
    let mut out = OffsetTensor::zeros(origin, shape);
    if nd == 0 {
        out.data[0] = a.data[0] * b.data[0];
        return Ok(out);
    }
    let ost = strides(&out.shape);
    let row = dense.shape[nd - 1];
    // output offset and slice of each nonzero row of the dense operand
    let rows: Vec<(usize, &[T])> = dense
        .data
        .chunks(row)
        .enumerate()
        .filter(|(_, r)| r.iter().any(|v| *v != T::zero()))
        .map(|(r, slice)| {
            let mut rem = r * row;
            let dst = strides(&dense.shape);
            let mut off = 0;
            for d in 0..nd {
                off += (rem / dst[d]) * ost[d];
                rem %= dst[d];
            }
            (off, slice)
        })
        .collect();
    let sst = strides(&sparse.shape);
    for (k, &v) in sparse.data.iter().enumerate() {
        if v == T::zero() {
            continue;
        }
        let mut rem = k;
        let mut shift = 0;
        for d in 0..nd {
            shift += (rem / sst[d]) * ost[d];
            rem %= sst[d];
        }
        for &(off, slice) in &rows {
            let dst = &mut out.data[shift + off..shift + off + row];
            for (o, x) in dst.iter_mut().zip(slice) {
                *o += v * *x;
            }
        }
    }
    Ok(out)
}

/// Convolve a sequence; the empty sequence gives the identity.
pub fn convolve_all<'a, T: Scalar>(
    ndim: usize,
    tensors: impl IntoIterator<Item = &'a OffsetTensor<T>>,
) -> Result<OffsetTensor<T>> {
    tensors
        .into_iter()
        .try_fold(OffsetTensor::delta(ndim), |acc, t| convolve(&acc, t))
}
