//! Tensor-train compression by sequential truncated SVD.

use nalgebra::{DMatrix, RealField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Chain of 3-way cores `G_k` of shape `(r_{k-1}, n_k, r_k)` with `r_0 = r_d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtTensor<T> {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Core `k` stored row-major over `(r_{k-1}, n_k, r_k)`.
    pub cores: Vec<Vec<T>>,
    pub epsilon: f64,
}

impl<T: Scalar> TtTensor<T> {
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn core_shape(&self, k: usize) -> (usize, usize, usize) {
        (self.ranks[k], self.shape[k], self.ranks[k + 1])
    }

    /// Stored scalars across all cores.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    pub fn dense_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.ndim();
        if self.ranks.len() != d + 1 || self.cores.len() != d || self.ranks[0] != 1 || self.ranks[d] != 1 {
            return Err(Error::Bundle("tensor train ranks do not chain".into()));
        }
        for k in 0..d {
            let (a, n, b) = self.core_shape(k);
            if self.cores[k].len() != a * n * b {
                return Err(Error::Bundle(format!("core {k} has {} entries, expected {}", self.cores[k].len(), a * n * b)));
            }
        }
        Ok(())
    }
}

/// Column-major matrix from row-major data.
fn matrix<T: Scalar + RealField>(rows: usize, cols: usize, data: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn row_major<T: Scalar + RealField>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Smallest rank whose discarded singular values have norm at most `delta`.
fn truncation_rank<T: Scalar + RealField>(sigma: &[T], delta: T) -> usize {
    let mut tail = T::zero();
    let mut r = sigma.len();
    while r > 1 {
        let s = sigma[r - 1];
        let next = tail + s * s;
        if num_traits::Float::sqrt(next) > delta {
            break;
        }
        tail = next;
        r -= 1;
    }
    r
}

/// TT-SVD of a row-major dense tensor with relative accuracy `epsilon`.
pub fn tt_decompose<T: Scalar + RealField>(data: &[T], shape: &[usize], epsilon: f64) -> Result<TtTensor<T>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("tt epsilon {epsilon} outside (0, 1)")));
    }
    let d = shape.len();
    if d == 0 || data.len() != shape.iter().product::<usize>() || data.is_empty() {
        return Err(Error::Contract("tensor data does not match its shape".into()));
    }
    if d == 1 {
        return Ok(TtTensor { shape: shape.to_vec(), ranks: vec![1, 1], cores: vec![data.to_vec()], epsilon });
    }
    let norm = num_traits::Float::sqrt(data.iter().map(|&x| x * x).sum::<T>());
    let delta = <T as Scalar>::of(epsilon / ((d - 1) as f64).sqrt()) * norm;
    let mut ranks = vec![1];
    let mut cores = Vec::with_capacity(d);
    let mut rest = data.to_vec();
    let mut r_prev = 1;
    for &n in &shape[..d - 1] {
        let rows = r_prev * n;
        let cols = rest.len() / rows;
        let svd = matrix(rows, cols, &rest).svd(true, true);
        let (u, s, vt) = (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());
        // nalgebra does not sort singular values
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
        let sigma: Vec<T> = order.iter().map(|&i| s[i]).collect();
        let r = truncation_rank(&sigma, delta);
        let mut core = DMatrix::zeros(rows, r);
        let mut next = DMatrix::zeros(r, cols);
        for (k, &i) in order[..r].iter().enumerate() {
            core.set_column(k, &u.column(i));
            next.set_row(k, &(vt.row(i) * sigma[k]));
        }
        cores.push(row_major(&core));
        ranks.push(r);
        rest = row_major(&next);
        r_prev = r;
    }
    cores.push(rest);
    ranks.push(1);
    Ok(TtTensor { shape: shape.to_vec(), ranks, cores, epsilon })
}

/// Contract the cores back into a row-major dense tensor.
pub fn tt_reconstruct<T: Scalar + RealField>(tt: &TtTensor<T>) -> Result<Vec<T>> {
    tt.check()?;
    // accumulate with the first index fastest so every reshape is free
    let mut acc = DMatrix::from_element(1, 1, T::one());
    for k in 0..tt.ndim() {
        let (a, n, b) = tt.core_shape(k);
        let core = &tt.cores[k];
        let g = DMatrix::from_fn(a, n * b, |r, c| core[r * n * b + (c % n) * b + c / n]);
        let prod = &acc * g;
        let rows = prod.nrows() * n;
        acc = prod.reshape_generic(nalgebra::Dyn(rows), nalgebra::Dyn(b));
    }
    Ok(to_row_major(acc.as_slice(), &tt.shape))
}

/// Contract the last mode with `weights` without forming the dense tensor.
/// Returns the row-major tensor over the remaining modes.
pub fn tt_contract_last<T: Scalar + RealField>(tt: &TtTensor<T>, weights: &[T]) -> Result<Vec<T>> {
    tt.check()?;
    let d = tt.ndim();
    if d == 0 || weights.len() != tt.shape[d - 1] {
        return Err(Error::Contract(format!("{} weights for a last mode of {:?}", weights.len(), tt.shape.last())));
    }
    let (a, n, _) = tt.core_shape(d - 1);
    let last = &tt.cores[d - 1];
    let w: Vec<T> = (0..a).map(|r| (0..n).map(|j| last[r * n + j] * weights[j]).sum()).collect();
    if d == 1 {
        return Ok(w);
    }
    let (a, n, b) = tt.core_shape(d - 2);
    let prev = &tt.cores[d - 2];
    let folded: Vec<T> = (0..a * n).map(|i| (0..b).map(|k| prev[i * b + k] * w[k]).sum()).collect();
    let mut cores = tt.cores[..d - 1].to_vec();
    cores[d - 2] = folded;
    let mut ranks = tt.ranks[..d].to_vec();
    ranks[d - 1] = 1;
    tt_reconstruct(&TtTensor { shape: tt.shape[..d - 1].to_vec(), ranks, cores, epsilon: tt.epsilon })
}

/// Reorder a first-index-fastest tensor into last-index-fastest order.
fn to_row_major<T: Scalar>(data: &[T], shape: &[usize]) -> Vec<T> {
    let d = shape.len();
    if d < 2 {
        return data.to_vec();
    }
    let mut strides = vec![1usize; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * shape[k - 1];
    }
    let last = shape[d - 1];
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; d];
    for _ in 0..data.len() / last.max(1) {
        let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.extend((0..last).map(|j| data[base + j * strides[d - 1]]));
        for k in (0..d - 1).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Relative Frobenius error of an approximation.
pub fn relative_error<T: Scalar>(exact: &[T], approx: &[T]) -> f64 {
    let num: f64 = exact.iter().zip(approx).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    let den: f64 = exact.iter().map(|a| a.as_f64().powi(2)).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
