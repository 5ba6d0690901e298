#![allow(dead_code)]

use fa_core::network::Network;
use fa_core::pf::{PfOptions, PfResult, PowerFlow};
use num_complex::Complex64;

/// Net specified injection per bus in p.u., built straight from the element lists.
pub fn specified(net: &Network, base_mva: f64) -> Vec<Complex64> {
    let mut s = vec![Complex64::default(); net.buses.len()];
    let pos = |id: usize| net.buses.iter().position(|b| b.id == id).unwrap();
    for l in &net.loads {
        s[pos(l.bus)] -= Complex64::new(l.p(), l.q()) / base_mva;
    }
    for g in &net.sgens {
        s[pos(g.bus)] += Complex64::new(g.p(), g.q()) / base_mva;
    }
    s
}

/// Gauss-Seidel power flow on the dense admittance matrix.
pub fn gauss_seidel(net: &Network, opts: PfOptions, energized: &[bool]) -> Vec<Complex64> {
    let pf = PowerFlow::new(net, opts).unwrap();
    let y = pf.ybus().to_dense();
    let s = specified(net, opts.base_mva);
    let slack = net.slack_index();
    let n = net.buses.len();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| if energized[i] { Complex64::new(1.0, 0.0) } else { Complex64::default() })
        .collect();
    v[slack] = Complex64::new(net.ext_grid[0].vm_pu, 0.0);
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            if i == slack || !energized[i] {
                continue;
            }
            let mut sum = Complex64::default();
            for k in 0..n {
                if k != i {
                    sum += y[i][k] * v[k];
                }
            }
            let new = (s[i].conj() / v[i].conj() - sum) / y[i][i];
            let acc = v[i] + (new - v[i]) * 1.5;
            change = change.max((acc - v[i]).norm());
            v[i] = acc;
        }
        if change < 1e-13 {
            break;
        }
    }
    v
}

pub fn largest_voltage_gap(r: &PfResult, v: &[Complex64]) -> f64 {
    (0..v.len())
        .filter(|&i| r.energized[i])
        .map(|i| (Complex64::from_polar(r.vm_pu[i], r.va_rad[i]) - v[i]).norm())
        .fold(0.0, f64::max)
}

/// Largest nodal power mismatch of a solution in p.u., slack bus excluded.
pub fn nodal_mismatch(net: &Network, opts: PfOptions, r: &PfResult) -> f64 {
    let pf = PowerFlow::new(net, opts).unwrap();
    let y = pf.ybus().to_dense();
    let s = specified(net, opts.base_mva);
    let v: Vec<Complex64> = (0..r.vm_pu.len()).map(|i| Complex64::from_polar(r.vm_pu[i], r.va_rad[i])).collect();
    let slack = net.slack_index();
    (0..v.len())
        .filter(|&i| i != slack && r.energized[i])
        .map(|i| {
            let inj: Complex64 = (0..v.len()).map(|k| y[i][k] * v[k]).sum();
            (v[i] * inj.conj() - s[i]).norm()
        })
        .fold(0.0, f64::max)
}

/// External-grid supply plus generation minus consumption and losses, MW.
pub fn active_balance(net: &Network, r: &PfResult) -> f64 {
    let gen: f64 = net.sgens.iter().map(|g| g.p()).sum();
    let load: f64 = net.loads.iter().map(|l| l.p()).sum();
    r.p_pcc_mw + gen - load - r.losses_mw
}

/// Receiving-end voltage of a lossless two-bus line with load P + jQ, x in p.u.
pub fn two_bus_voltage(x: f64, p: f64, q: f64) -> f64 {
    let b = 1.0 - 2.0 * q * x;
    ((b + (b * b - 4.0 * x * x * (p * p + q * q)).sqrt()) / 2.0).sqrt()
}

pub fn two_bus_network(x: f64, p: f64, q: f64) -> Network {
    Network::from_json(&format!(
        r#"{{
        "name": "two-bus",
        "buses": [{{"id": 0, "vn_kv": 1.0, "slack": true}}, {{"id": 1, "vn_kv": 1.0}}],
        "lines": [{{"from_bus": 0, "to_bus": 1, "r_ohm_per_km": 0.0, "x_ohm_per_km": {x}, "c_nf_per_km": 0.0, "length_km": 1.0, "max_i_ka": 1.0}}],
        "loads": [{{"bus": 1, "p_mw": {p}, "q_mvar": {q}, "sn_mva": 1.0}}],
        "ext_grid": [{{"bus": 0, "vm_pu": 1.0}}]
    }}"#
    ))
    .unwrap()
}

/// Lattice points of an Smax offer counted row by row, P' in [0, S].
pub fn smax_lattice_count(p: f64, q: f64, s: f64, dp: f64, dq: f64) -> usize {
    const EPS: f64 = 1e-9;
    let kmin = ((-p) / dp - EPS).ceil() as i64;
    let kmax = ((s - p) / dp + EPS).floor() as i64;
    let mut n = 0;
    for k in kmin..=kmax {
        let pk = p + k as f64 * dp;
        let h = (s * s - pk * pk).max(0.0).sqrt();
        let lo = ((-h - q) / dq - EPS).ceil() as i64;
        let hi = ((h - q) / dq + EPS).floor() as i64;
        if hi >= lo {
            n += (hi - lo + 1) as usize;
        }
    }
    n
}

pub fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by the monotone chain, counter-clockwise.
pub fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn inside(h: &[(f64, f64)], p: (f64, f64)) -> bool {
    (0..h.len()).all(|i| cross(h[i], h[(i + 1) % h.len()], p) >= -1e-12)
}
