use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::SparseMatrix;

pub(super) struct Solution {
    pub voltage: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Newton-Raphson on the polar power mismatch equations.
///
/// Every non-slack bus in `pq` is a PQ bus; buses outside `pq` other than
/// the slack are de-energized and held at zero voltage.
pub(super) fn solve(
    ybus: &SparseMatrix,
    s_spec: &[Complex64],
    slack: usize,
    v_slack: f64,
    pq: &[usize],
    tol: f64,
    max_iter: usize,
) -> Solution {
    let n = ybus.dim();
    let m = pq.len();
    let mut pos = vec![usize::MAX; n];
    for (k, &bus) in pq.iter().enumerate() {
        pos[bus] = k;
    }
    let mut vm = vec![0.0; n];
    let mut va = vec![0.0; n];
    vm[slack] = v_slack;
    for &bus in pq {
        vm[bus] = 1.0;
    }

    let voltage = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter()
            .zip(va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    };

    let mut v = voltage(&vm, &va);
    let mut iterations = 0;
    loop {
        let current = ybus.mul_vec(&v);
        let mut f = DVector::zeros(2 * m);
        for (k, &bus) in pq.iter().enumerate() {
            let mis = v[bus] * current[bus].conj() - s_spec[bus];
            f[k] = mis.re;
            f[m + k] = mis.im;
        }
        let max_mismatch = f.amax();
        if !max_mismatch.is_finite() {
            return Solution {
                voltage: v,
                converged: false,
                iterations,
                max_mismatch: f64::INFINITY,
            };
        }
        if max_mismatch <= tol {
            return Solution {
                voltage: v,
                converged: true,
                iterations,
                max_mismatch,
            };
        }
        if iterations >= max_iter {
            return Solution {
                voltage: v,
                converged: false,
                iterations,
                max_mismatch,
            };
        }

        // dS/dVa and dS/dVm restricted to the PQ rows and columns
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            let vi = v[i];
            let unit_i = if vm[i] > 0.0 { vi / vm[i] } else { Complex64::new(1.0, 0.0) };
            for (k, y) in ybus.row(i) {
                let c = pos[k];
                if c == usize::MAX {
                    continue;
                }
                let unit_k = if vm[k] > 0.0 { v[k] / vm[k] } else { Complex64::new(1.0, 0.0) };
                let mut ds_dva = Complex64::i() * vi * (-(y * v[k])).conj();
                let mut ds_dvm = vi * (y * unit_k).conj();
                if k == i {
                    ds_dva += Complex64::i() * vi * current[i].conj();
                    ds_dvm += current[i].conj() * unit_i;
                }
                jac[(r, c)] = ds_dva.re;
                jac[(r, m + c)] = ds_dvm.re;
                jac[(m + r, c)] = ds_dva.im;
                jac[(m + r, m + c)] = ds_dvm.im;
            }
        }
        let Some(dx) = jac.lu().solve(&(-f)) else {
            return Solution {
                voltage: v,
                converged: false,
                iterations,
                max_mismatch,
            };
        };
        for (k, &bus) in pq.iter().enumerate() {
            va[bus] += dx[k];
            vm[bus] += dx[m + k];
        }
        v = voltage(&vm, &va);
        iterations += 1;
    }
}
