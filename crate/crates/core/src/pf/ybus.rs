use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{ComponentId, Network};

/// Square complex matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r)
            .find(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::default(); self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }
}

/// How a branch's loading percentage is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Rating {
    /// Line: current magnitude against rated current.
    Current { i_base_ka: f64, max_i_ka: f64 },
    /// Transformer: apparent power against rated power.
    Apparent { sn_mva: f64 },
}

/// Per-unit pi model of an in-service branch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BranchModel {
    pub id: ComponentId,
    pub from: usize,
    pub to: usize,
    pub y_series: Complex64,
    /// Shunt admittance at each end (half the total charging).
    pub y_shunt_half: Complex64,
    pub rating: Rating,
}

impl BranchModel {
    pub fn z_series(&self) -> Complex64 {
        1.0 / self.y_series
    }
}

pub(crate) fn branch_models(net: &Network, base_mva: f64, freq_hz: f64) -> Vec<BranchModel> {
    let index = net.bus_index_map();
    let mut out = Vec::new();
    for (i, line) in net.lines.iter().enumerate() {
        if !net.line_in_service(i) {
            continue;
        }
        let from = index[&line.from_bus];
        let to = index[&line.to_bus];
        let vn = net.buses[from].vn_kv;
        let z_base = vn * vn / base_mva;
        let z = Complex64::new(line.r_ohm_per_km, line.x_ohm_per_km) * line.length_km / z_base;
        let b = 2.0 * std::f64::consts::PI * freq_hz * line.c_nf_per_km * 1e-9 * line.length_km * z_base;
        out.push(BranchModel {
            id: ComponentId::Line(i),
            from,
            to,
            y_series: 1.0 / z,
            y_shunt_half: Complex64::new(0.0, b / 2.0),
            rating: Rating::Current {
                i_base_ka: base_mva / (3f64.sqrt() * vn),
                max_i_ka: line.max_i_ka,
            },
        });
    }
    for (i, t) in net.trafos.iter().enumerate() {
        let zk = t.vk_percent / 100.0 * base_mva / t.sn_mva;
        let r = t.vkr_percent / 100.0 * base_mva / t.sn_mva;
        let x = (zk * zk - r * r).max(0.0).sqrt();
        out.push(BranchModel {
            id: ComponentId::Trafo(i),
            from: index[&t.hv_bus],
            to: index[&t.lv_bus],
            y_series: 1.0 / Complex64::new(r, x),
            y_shunt_half: Complex64::default(),
            rating: Rating::Apparent { sn_mva: t.sn_mva },
        });
    }
    out
}

/// Bus admittance matrix in per unit on `base_mva`.
pub fn build_ybus(net: &Network, base_mva: f64) -> Result<SparseMatrix> {
    build_ybus_with(net, base_mva, super::DEFAULT_FREQ_HZ)
}

pub(crate) fn build_ybus_with(net: &Network, base_mva: f64, freq_hz: f64) -> Result<SparseMatrix> {
    let branches = branch_models(net, base_mva, freq_hz);
    let slack = net.slack_index();
    let slack_connected = branches.iter().any(|b| b.from == slack || b.to == slack);
    let has_injection = net.loads.iter().chain(&net.sgens).any(|e| e.p() != 0.0 || e.q() != 0.0);
    if !slack_connected && net.buses.len() > 1 && has_injection {
        return Err(Error::Singular(format!(
            "slack bus {} has no in-service branch",
            net.buses[slack].id
        )));
    }
    let mut triplets = Vec::with_capacity(branches.len() * 4);
    for b in &branches {
        let ys = b.y_series;
        triplets.push((b.from, b.from, ys + b.y_shunt_half));
        triplets.push((b.to, b.to, ys + b.y_shunt_half));
        triplets.push((b.from, b.to, -ys));
        triplets.push((b.to, b.from, -ys));
    }
    Ok(SparseMatrix::from_triplets(net.buses.len(), triplets))
}
