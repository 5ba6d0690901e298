//! FA boundary tracing by weighted PCC maximization.
//!
//! Each instance maximizes `w_p * P_PCC + w_q * Q_PCC` over the FSP shifts by
//! successive linear programming: PCC power and every monitored component are
//! linearized with central differences around the current point, the LP is
//! solved inside a trust region, and the LP optimum is accepted only if a full
//! AC power flow confirms it is feasible and no worse.

use std::f64::consts::PI;
use std::time::Instant;

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ComponentId;
use crate::offers::{FspOffer, Shift};
use crate::pf::{check_constraints, PfResult};
use crate::report::Report;
use crate::settings::FlexShape;
use crate::study::Study;

/// Edges of the polygon inscribed in an Smax circle.
pub const CIRCLE_EDGES: usize = 256;
/// Finite-difference step as a fraction of each offer's range.
pub const FD_FRACTION: f64 = 0.01;
/// Smallest trust region, as a fraction of each offer's range.
pub const MIN_STEP: f64 = 1e-4;
pub const MAX_OUTER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub p: f64,
    pub q: f64,
}

impl Weights {
    /// Objective `id` in 1..=4 at `alpha`: signs (+,+), (+,-), (-,+), (-,-) on (P, Q).
    pub fn of(id: u8, alpha: f64) -> Result<Weights> {
        let (sp, sq) = match id {
            1 => (1.0, 1.0),
            2 => (1.0, -1.0),
            3 => (-1.0, 1.0),
            4 => (-1.0, -1.0),
            _ => return Err(Error::Contract(format!("objective {id} outside 1..=4"))),
        };
        Ok(Weights { p: sp * alpha, q: sq * (1.0 - alpha) })
    }

    pub fn value(&self, p: f64, q: f64) -> f64 {
        self.p * p + self.q * q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfBoundaryPoint {
    pub objective: u8,
    pub alpha: f64,
    pub p_pcc_mw: f64,
    pub q_pcc_mvar: f64,
    pub converged: bool,
    pub shifts: Vec<Shift>,
    /// Objective value of the accepted point after each outer iteration.
    pub trace: Vec<f64>,
    pub power_flows: usize,
    pub diagnostic: Option<String>,
}

impl OpfBoundaryPoint {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// One decision variable: a P or Q shift of a continuous offer.
#[derive(Debug, Clone, Copy)]
struct Var {
    offer: usize,
    is_q: bool,
    range: f64,
}

struct Eval {
    result: PfResult,
    feasible: bool,
}

fn evaluate(study: &Study, shifts: &[Shift]) -> Eval {
    let result = study.solve(shifts);
    let feasible = result.converged
        && check_constraints(&result, &study.limits).map(|r| r.feasible).unwrap_or(false);
    Eval { result, feasible }
}

fn shifted(base: &[Shift], vars: &[Var], x: &[f64]) -> Vec<Shift> {
    let mut s = base.to_vec();
    for (v, &dx) in vars.iter().zip(x) {
        if v.is_q {
            s[v.offer].q += dx;
        } else {
            s[v.offer].p += dx;
        }
    }
    s
}

/// Linear model of PCC power and component values around a point.
struct Linearization {
    values: Vec<f64>,
    d_pcc: Vec<(f64, f64)>,
    d_values: Vec<Vec<f64>>,
}

fn linearize(study: &Study, components: &[ComponentId], at: &[Shift], here: &PfResult, vars: &[Var], flows: &mut usize) -> Option<Linearization> {
    let mut d_pcc = Vec::with_capacity(vars.len());
    let mut d_values = Vec::with_capacity(vars.len());
    let probes: Vec<(PfResult, PfResult)> = vars
        .par_iter()
        .enumerate()
        .map(|(k, v)| {
            let h = FD_FRACTION * v.range;
            let mut e = vec![0.0; vars.len()];
            e[k] = h;
            let up = study.solve(&shifted(at, vars, &e));
            e[k] = -h;
            let down = study.solve(&shifted(at, vars, &e));
            (up, down)
        })
        .collect();
    *flows += 2 * vars.len();
    for ((up, down), v) in probes.iter().zip(vars) {
        if !up.converged || !down.converged {
            return None;
        }
        let h2 = 2.0 * FD_FRACTION * v.range;
        d_pcc.push(((up.p_pcc_mw - down.p_pcc_mw) / h2, (up.q_pcc_mvar - down.q_pcc_mvar) / h2));
        d_values.push(components.iter().map(|&c| (up.value(c) - down.value(c)) / h2).collect());
    }
    Some(Linearization {
        values: components.iter().map(|&c| here.value(c)).collect(),
        d_pcc,
        d_values,
    })
}

/// Envelope of one continuous offer as linear constraints on its output (P', Q').
fn add_envelope(lp: &mut Problem, o: &FspOffer, at: Shift, p: Option<Variable>, q: Option<Variable>) {
    let (lo, hi) = o.p_band();
    let (p0, q0) = (o.p + at.p, o.q + at.q);
    if let Some(pv) = p {
        lp.add_constraint(&[(pv, 1.0)], ComparisonOp::Ge, lo - p0);
        lp.add_constraint(&[(pv, 1.0)], ComparisonOp::Le, hi - p0);
    }
    let Some(qv) = q else { return };
    match o.shape {
        FlexShape::PQmax => {
            lp.add_constraint(&[(qv, 1.0)], ComparisonOp::Ge, -o.s_max - q0);
            lp.add_constraint(&[(qv, 1.0)], ComparisonOp::Le, o.s_max - q0);
        }
        FlexShape::Smax => {
            let r = o.s_max * (PI / CIRCLE_EDGES as f64).cos();
            for k in 0..CIRCLE_EDGES {
                let th = 2.0 * PI * (k as f64 + 0.5) / CIRCLE_EDGES as f64;
                let (c, s) = (th.cos(), th.sin());
                let rhs = r - c * p0 - s * q0;
                match p {
                    Some(pv) => lp.add_constraint(&[(pv, c), (qv, s)], ComparisonOp::Le, rhs),
                    None => lp.add_constraint(&[(qv, s)], ComparisonOp::Le, rhs),
                }
            }
        }
    }
}

/// Trust-region LP step from `at`, `None` if the LP is infeasible.
fn lp_step(study: &Study, vars: &[Var], at: &[Shift], lin: &Linearization, w: Weights, radius: f64, components: &[ComponentId]) -> Option<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<Variable> = vars
        .iter()
        .zip(&lin.d_pcc)
        .map(|(v, d)| lp.add_var(w.value(d.0, d.1), (-radius * v.range, radius * v.range)))
        .collect();
    for (i, o) in study.offers.iter().enumerate() {
        let p = vars.iter().position(|v| v.offer == i && !v.is_q).map(|k| xs[k]);
        let q = vars.iter().position(|v| v.offer == i && v.is_q).map(|k| xs[k]);
        if p.is_some() || q.is_some() {
            add_envelope(&mut lp, o, at[i], p, q);
        }
    }
    let limits = &study.limits;
    for (c, &id) in components.iter().enumerate() {
        let row: Vec<(Variable, f64)> = xs.iter().zip(&lin.d_values).map(|(&x, d)| (x, d[c])).collect();
        if row.iter().all(|(_, g)| *g == 0.0) {
            continue;
        }
        let v = lin.values[c];
        match id {
            ComponentId::Bus(_) => {
                lp.add_constraint(row.as_slice(), ComparisonOp::Le, limits.max_voltage_pu - v);
                lp.add_constraint(row.as_slice(), ComparisonOp::Ge, limits.min_voltage_pu - v);
            }
            _ => lp.add_constraint(row.as_slice(), ComparisonOp::Le, limits.max_loading_percent - v),
        }
    }
    let sol = lp.solve().ok()?;
    Some(xs.iter().map(|&x| *sol.var_value(x)).collect())
}

/// Maximize `w` with the discrete offers held at `fixed` and the continuous ones free.
fn slp(study: &Study, w: Weights, fixed: &[Shift]) -> (OpfBoundaryPoint, usize) {
    let components = study.net.monitored_components();
    let vars: Vec<Var> = study
        .offers
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.discrete)
        .flat_map(|(i, o)| {
            let (rp, rq) = o.ranges();
            [Var { offer: i, is_q: false, range: rp }, Var { offer: i, is_q: true, range: rq }]
        })
        .filter(|v| v.range > 0.0)
        .collect();
    let mut flows = 1;
    let mut at = fixed.to_vec();
    let mut cur = evaluate(study, &at);
    let point = |at: &[Shift], e: &Eval, trace: Vec<f64>, converged: bool, diagnostic: Option<String>| OpfBoundaryPoint {
        objective: 0,
        alpha: 0.0,
        p_pcc_mw: e.result.p_pcc_mw,
        q_pcc_mvar: e.result.q_pcc_mvar,
        converged,
        shifts: at.to_vec(),
        trace,
        power_flows: 0,
        diagnostic,
    };
    if !cur.result.converged {
        return (point(&at, &cur, vec![], false, Some("power flow at the start point did not converge".into())), flows);
    }
    let obj = |e: &Eval| w.value(e.result.p_pcc_mw, e.result.q_pcc_mvar);
    let mut trace = vec![obj(&cur)];
    if vars.is_empty() {
        let diag = (!cur.feasible).then(|| "start point violates the limits and nothing can move".to_string());
        return (point(&at, &cur, trace, cur.feasible, diag), flows);
    }
    let mut radius = 1.0;
    for _ in 0..MAX_OUTER {
        let Some(lin) = linearize(study, &components, &at, &cur.result, &vars, &mut flows) else {
            return (point(&at, &cur, trace, false, Some("sensitivity power flow did not converge".into())), flows);
        };
        let mut accepted = false;
        while radius >= MIN_STEP {
            let Some(dx) = lp_step(study, &vars, &at, &lin, w, radius, &components) else {
                radius /= 2.0;
                continue;
            };
            let next_at = shifted(&at, &vars, &dx);
            let next = evaluate(study, &next_at);
            flows += 1;
            let better = next.feasible && (!cur.feasible || obj(&next) >= obj(&cur));
            if better {
                let step = vars.iter().zip(&dx).map(|(v, d)| d.abs() / v.range).fold(0.0, f64::max);
                at = next_at;
                cur = next;
                trace.push(obj(&cur));
                accepted = true;
                if step < MIN_STEP {
                    return (point(&at, &cur, trace, true, None), flows);
                }
                break;
            }
            radius /= 2.0;
        }
        if !accepted {
            return if cur.feasible {
                (point(&at, &cur, trace, true, None), flows)
            } else {
                (point(&at, &cur, trace, false, Some("trust region collapsed without a feasible step".into())), flows)
            };
        }
    }
    let diag = format!("no convergence within {MAX_OUTER} outer iterations");
    (point(&at, &cur, trace, false, Some(diag)), flows)
}

/// One boundary point. Discrete offers are tried at both setpoints.
pub fn solve_single_opf(study: &Study, objective: u8, alpha: f64) -> Result<OpfBoundaryPoint> {
    let w = Weights::of(objective, alpha)?;
    let discrete: Vec<usize> = (0..study.offers.len()).filter(|&i| study.offers[i].discrete).collect();
    if discrete.len() > 12 {
        return Err(Error::Config(format!("{} discrete FSPs are too many to enumerate", discrete.len())));
    }
    let mut best: Option<OpfBoundaryPoint> = None;
    let mut flows = 0;
    for mask in 0..1u32 << discrete.len() {
        let mut fixed = vec![Shift::ZERO; study.offers.len()];
        for (b, &i) in discrete.iter().enumerate() {
            if mask >> b & 1 == 1 {
                fixed[i] = study.offers[i].full_reduction();
            }
        }
        let (pt, n) = slp(study, w, &fixed);
        flows += n;
        let score = |p: &OpfBoundaryPoint| (p.converged, w.value(p.p_pcc_mw, p.q_pcc_mvar));
        if best.as_ref().map_or(true, |b| score(&pt) > score(b)) {
            best = Some(pt);
        }
    }
    let mut pt = best.expect("at least one setting");
    pt.objective = objective;
    pt.alpha = alpha;
    pt.power_flows = flows;
    Ok(pt)
}

/// Alpha values `0, step, 2 step, ..., 1`: `floor(1 / step) + 1` of them.
pub fn alphas(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("opf_step must be in (0, 1], got {step}")));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| (k as f64 * step).min(1.0)).collect())
}

#[derive(Debug, Clone)]
pub struct OpfSweep {
    pub points: Vec<OpfBoundaryPoint>,
    /// Converged points ordered by angle around their centroid.
    pub polygon: Vec<(f64, f64)>,
    pub report: Report,
}

impl OpfSweep {
    pub fn attempted(&self) -> usize {
        self.points.len()
    }

    pub fn converged(&self) -> usize {
        self.points.iter().filter(|p| p.converged).count()
    }
}

pub fn boundary_polygon(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut out = points.to_vec();
    out.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb).then(a.0.total_cmp(&b.0)).then(a.1.total_cmp(&b.1))
    });
    out.dedup();
    out
}

/// Four objectives at every alpha of the sweep, solved in parallel.
pub fn opf_boundary_sweep(study: &Study, step: f64) -> Result<OpfSweep> {
    let t0 = Instant::now();
    let alphas = alphas(step)?;
    let jobs: Vec<(u8, f64)> = (1..=4u8).flat_map(|id| alphas.iter().map(move |&a| (id, a))).collect();
    let points = jobs
        .par_iter()
        .map(|&(id, a)| solve_single_opf(study, id, a))
        .collect::<Result<Vec<_>>>()?;
    let ok: Vec<(f64, f64)> = points.iter().filter(|p| p.converged).map(|p| (p.p_pcc_mw, p.q_pcc_mvar)).collect();
    let polygon = boundary_polygon(&ok);

    let mut report = Report::new("opf");
    report.push("opf_step", step);
    report.push("attempted solves", points.len());
    report.push("converged solves", ok.len());
    report.push("power_flows", points.iter().map(|p| p.power_flows).sum::<usize>());
    for p in &points {
        let mut line = format!(
            "objective {} alpha {:.4} P {:.6} Q {:.6} converged {} iterations {}",
            p.objective,
            p.alpha,
            p.p_pcc_mw,
            p.q_pcc_mvar,
            p.converged,
            p.iterations()
        );
        if let Some(d) = &p.diagnostic {
            line.push_str(&format!(" ({d})"));
        }
        report.push("point", line);
    }
    report.push("base_pcc_mw", study.base.p_pcc_mw);
    report.push("base_pcc_mvar", study.base.q_pcc_mvar);
    report.push("wall_time_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    Ok(OpfSweep { points, polygon, report })
}
