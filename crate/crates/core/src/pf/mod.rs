//! AC power flow: admittance matrix, Newton-Raphson solver, constraint checks.

mod limits;
mod newton;
mod ybus;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{ComponentId, Network};

pub use limits::{check_constraints, ConstraintReport, Quantity, Violation};
pub use ybus::{build_ybus, SparseMatrix};

pub(crate) use ybus::BranchModel;
use ybus::{branch_models, build_ybus_with, Rating};

pub const DEFAULT_FREQ_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfOptions {
    /// Convergence tolerance on the largest P/Q mismatch, p.u.
    pub pf_tol: f64,
    pub pf_max_iter: usize,
    pub base_mva: f64,
    pub freq_hz: f64,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            pf_tol: 1e-8,
            pf_max_iter: 30,
            base_mva: 1.0,
            freq_hz: DEFAULT_FREQ_HZ,
        }
    }
}

/// Element setpoints in MW / MVAr (after scaling), indexed like the network arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    pub sgen_p: Vec<f64>,
    pub sgen_q: Vec<f64>,
}

impl Injections {
    pub fn from_network(net: &Network) -> Self {
        Injections {
            load_p: net.loads.iter().map(|l| l.p()).collect(),
            load_q: net.loads.iter().map(|l| l.q()).collect(),
            sgen_p: net.sgens.iter().map(|g| g.p()).collect(),
            sgen_q: net.sgens.iter().map(|g| g.q()).collect(),
        }
    }
}

/// Outcome of one power flow solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfResult {
    pub vm_pu: Vec<f64>,
    pub va_rad: Vec<f64>,
    /// Zero for lines taken out of service by an open switch.
    pub line_loading_percent: Vec<f64>,
    pub trafo_loading_percent: Vec<f64>,
    /// Active power drawn from the external grid.
    pub p_pcc_mw: f64,
    pub q_pcc_mvar: f64,
    pub losses_mw: f64,
    pub losses_mvar: f64,
    pub energized: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PfResult {
    /// Loading (%) or voltage (p.u.) of a monitored component.
    pub fn value(&self, c: ComponentId) -> f64 {
        match c {
            ComponentId::Line(i) => self.line_loading_percent[i],
            ComponentId::Trafo(i) => self.trafo_loading_percent[i],
            ComponentId::Bus(i) => self.vm_pu[i],
        }
    }
}

/// A network prepared for repeated solves with varying element setpoints.
///
/// The admittance matrix and branch models are built once; every call to
/// [`PowerFlow::solve`] starts flat and shares no mutable state, so one
/// instance can serve many threads.
#[derive(Debug, Clone)]
pub struct PowerFlow {
    opts: PfOptions,
    n_bus: usize,
    slack: usize,
    v_slack: f64,
    ybus: SparseMatrix,
    branches: Vec<BranchModel>,
    energized: Vec<bool>,
    /// Energized non-slack buses, the Newton unknowns.
    pq: Vec<usize>,
    load_bus: Vec<usize>,
    sgen_bus: Vec<usize>,
    n_lines: usize,
    n_trafos: usize,
    base: Injections,
}

impl PowerFlow {
    pub fn new(net: &Network, opts: PfOptions) -> Result<Self> {
        let ybus = build_ybus_with(net, opts.base_mva, opts.freq_hz)?;
        let branches = branch_models(net, opts.base_mva, opts.freq_hz);
        let energized = net.energized();
        let slack = net.slack_index();
        let index = net.bus_index_map();
        let pq = (0..net.buses.len())
            .filter(|&i| i != slack && energized[i])
            .collect();
        Ok(PowerFlow {
            opts,
            n_bus: net.buses.len(),
            slack,
            v_slack: net.ext_grid[0].vm_pu,
            ybus,
            branches,
            energized,
            pq,
            load_bus: net.loads.iter().map(|l| index[&l.bus]).collect(),
            sgen_bus: net.sgens.iter().map(|g| index[&g.bus]).collect(),
            n_lines: net.lines.len(),
            n_trafos: net.trafos.len(),
            base: Injections::from_network(net),
        })
    }

    pub fn options(&self) -> &PfOptions {
        &self.opts
    }

    pub fn ybus(&self) -> &SparseMatrix {
        &self.ybus
    }

    pub(crate) fn branches(&self) -> &[BranchModel] {
        &self.branches
    }

    /// Setpoints of the network this solver was prepared from.
    pub fn base_injections(&self) -> &Injections {
        &self.base
    }

    pub fn solve_base(&self) -> PfResult {
        self.solve(&self.base)
    }

    /// Net complex power injection per bus in p.u.
    pub(crate) fn bus_injections(&self, inj: &Injections) -> Vec<Complex64> {
        let mut s = vec![Complex64::default(); self.n_bus];
        let b = self.opts.base_mva;
        for (k, &bus) in self.load_bus.iter().enumerate() {
            s[bus] -= Complex64::new(inj.load_p[k], inj.load_q[k]) / b;
        }
        for (k, &bus) in self.sgen_bus.iter().enumerate() {
            s[bus] += Complex64::new(inj.sgen_p[k], inj.sgen_q[k]) / b;
        }
        s
    }

    /// Solve from a flat start. Non-convergence is reported, never raised.
    pub fn solve(&self, inj: &Injections) -> PfResult {
        let s_spec = self.bus_injections(inj);
        let sol = newton::solve(
            &self.ybus,
            &s_spec,
            self.slack,
            self.v_slack,
            &self.pq,
            self.opts.pf_tol,
            self.opts.pf_max_iter,
        );
        self.post_process(sol, s_spec[self.slack])
    }

    fn post_process(&self, sol: newton::Solution, s_slack_elements: Complex64) -> PfResult {
        let v = &sol.voltage;
        let base = self.opts.base_mva;
        let mut line_loading = vec![0.0; self.n_lines];
        let mut trafo_loading = vec![0.0; self.n_trafos];
        let mut losses = Complex64::default();
        for b in &self.branches {
            let (vf, vt) = (v[b.from], v[b.to]);
            let i_from = (vf - vt) * b.y_series + vf * b.y_shunt_half;
            let i_to = (vt - vf) * b.y_series + vt * b.y_shunt_half;
            let s_from = vf * i_from.conj();
            let s_to = vt * i_to.conj();
            losses += s_from + s_to;
            let loading = match b.rating {
                Rating::Current { i_base_ka, max_i_ka } => {
                    i_from.norm().max(i_to.norm()) * i_base_ka / max_i_ka * 100.0
                }
                Rating::Apparent { sn_mva } => s_from.norm().max(s_to.norm()) * base / sn_mva * 100.0,
            };
            match b.id {
                ComponentId::Line(i) => line_loading[i] = loading,
                ComponentId::Trafo(i) => trafo_loading[i] = loading,
                ComponentId::Bus(_) => unreachable!("branches are lines or trafos"),
            }
        }
        let i_slack: Complex64 = self.ybus.row(self.slack).map(|(c, y)| y * v[c]).sum();
        // external grid supplies what the slack bus elements do not
        let s_slack = (v[self.slack] * i_slack.conj() - s_slack_elements) * base;
        PfResult {
            vm_pu: v.iter().map(|x| x.norm()).collect(),
            va_rad: v.iter().map(|x| if x.norm() > 0.0 { x.arg() } else { 0.0 }).collect(),
            line_loading_percent: line_loading,
            trafo_loading_percent: trafo_loading,
            p_pcc_mw: s_slack.re,
            q_pcc_mvar: s_slack.im,
            losses_mw: losses.re * base,
            losses_mvar: losses.im * base,
            energized: self.energized.clone(),
            converged: sol.converged,
            iterations: sol.iterations,
            max_mismatch: sol.max_mismatch,
        }
    }
}

/// Build the solver and run the base case of `net`.
pub fn solve_pf(net: &Network, opts: PfOptions) -> Result<PfResult> {
    Ok(PowerFlow::new(net, opts)?.solve_base())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::network::{fixture, fixture_names, Bus, ExtGrid, Line, PowerElement};

    pub(crate) fn two_bus(x_pu: f64, p_load: f64, q_load: f64) -> Network {
        Network {
            name: "two-bus".into(),
            buses: vec![
                Bus { id: 0, vn_kv: 1.0, slack: true },
                Bus { id: 1, vn_kv: 1.0, slack: false },
            ],
            lines: vec![Line {
                from_bus: 0,
                to_bus: 1,
                r_ohm_per_km: 0.0,
                x_ohm_per_km: x_pu,
                c_nf_per_km: 0.0,
                length_km: 1.0,
                max_i_ka: 1.0,
            }],
            trafos: vec![],
            loads: vec![PowerElement {
                bus: 1,
                p_mw: p_load,
                q_mvar: q_load,
                sn_mva: 1.0,
                scaling: 1.0,
            }],
            sgens: vec![],
            ext_grid: vec![ExtGrid { bus: 0, vm_pu: 1.0 }],
            switches: vec![],
        }
    }

    #[test]
    fn two_bus_matches_quartic() {
        // receiving-end voltage of a lossless line: V^4 - V^2 (1 - 2 Q x) + x^2 (P^2 + Q^2) = 0
        let (x, p, q) = (0.1f64, 0.5f64, 0.0f64);
        let b = 1.0 - 2.0 * q * x;
        let v = ((b + (b * b - 4.0 * x * x * (p * p + q * q)).sqrt()) / 2.0).sqrt();
        let r = solve_pf(&two_bus(x, p, q), PfOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.vm_pu[1] - v).abs() < 1e-8, "{} vs {v}", r.vm_pu[1]);
        assert!((r.p_pcc_mw - p).abs() < 1e-8);
    }

    #[test]
    fn zero_load_is_flat() {
        let mut net = fixture("feeder4").unwrap();
        for e in net.loads.iter_mut().chain(net.sgens.iter_mut()) {
            e.scaling = 0.0;
        }
        net.lines.iter_mut().for_each(|l| l.c_nf_per_km = 0.0);
        let r = solve_pf(&net, PfOptions::default()).unwrap();
        assert!(r.converged);
        for vm in &r.vm_pu {
            assert!((vm - 1.02).abs() < 1e-10);
        }
        assert!(r.p_pcc_mw.abs() < 1e-10);
    }

    #[test]
    fn feeder4_converges_quickly() {
        let r = solve_pf(&fixture("feeder4").unwrap(), PfOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 6, "{} iterations", r.iterations);
        assert!(r.max_mismatch <= 1e-8);
    }

    #[test]
    fn power_balance_holds() {
        for name in fixture_names() {
            let net = fixture(name).unwrap();
            let r = solve_pf(&net, PfOptions::default()).unwrap();
            assert!(r.converged, "{name}");
            let gen: f64 = net.sgens.iter().map(|g| g.p()).sum::<f64>() + r.p_pcc_mw;
            let load: f64 = net.loads.iter().map(|l| l.p()).sum();
            assert!((gen - load - r.losses_mw).abs() < 1e-6, "{name}");
            assert!(r.line_loading_percent.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn deterministic() {
        let net = fixture("mv-oberrhein-like").unwrap();
        let a = solve_pf(&net, PfOptions::default()).unwrap();
        let b = solve_pf(&net, PfOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_convergence_is_a_value() {
        // far beyond the maximum transferable power of a 0.1 p.u. line
        let r = solve_pf(&two_bus(0.1, 8.0, 2.0), PfOptions::default()).unwrap();
        assert!(!r.converged);
    }
}
