//! Power-flow based FA estimation: Monte-Carlo sampling and exhaustive lattice search.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{normalize, FaGrid};
use crate::offers::{build_shift_grid, sample_shifts, Shift};
use crate::report::Report;
use crate::settings::{Distribution, SamplingParams};
use crate::study::{SampleOutcome, Study};

pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 1_000_000;

pub const SIGN_CONVENTION: &str =
    "load shifts add to consumption, generator shifts add to injection, PCC power is drawn from the external grid";

/// FA counts with the per-sample record and run report.
#[derive(Debug, Clone)]
pub struct Estimate {
    /// Feasible samples per PCC cell.
    pub counts: FaGrid<f64>,
    pub outcomes: Vec<SampleOutcome>,
    pub report: Report,
}

impl Estimate {
    pub fn fa(&self) -> Result<FaGrid<f64>> {
        normalize(&self.counts)
    }

    pub fn feasible(&self) -> usize {
        self.outcomes.iter().filter(|o| o.feasible).count()
    }
}

fn run(
    study: &Study,
    algorithm: &str,
    n: usize,
    vector: impl Fn(usize) -> Vec<Shift> + Sync,
    dp: f64,
    dq: f64,
) -> Estimate {
    let t0 = Instant::now();
    let outcomes: Vec<SampleOutcome> = (0..n)
        .into_par_iter()
        .map(|i| study.evaluate(i, vector(i)))
        .collect();
    let all: Vec<(f64, f64)> = outcomes
        .iter()
        .filter(|o| o.converged)
        .map(|o| (o.p_pcc_mw, o.q_pcc_mvar))
        .collect();
    let feasible: Vec<(f64, f64)> = outcomes
        .iter()
        .filter(|o| o.feasible)
        .map(|o| (o.p_pcc_mw, o.q_pcc_mvar))
        .collect();
    let counts = FaGrid::histogram(study.base_pcc(), (dp, dq), &all, &feasible);
    let mut report = Report::new(algorithm);
    report.push("power_flows", outcomes.len());
    report.push("feasible", feasible.len());
    report.push("non_converged", outcomes.iter().filter(|o| !o.converged).count());
    report.push("wall_time_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    report.push("base_pcc_mw", study.base.p_pcc_mw);
    report.push("base_pcc_mvar", study.base.q_pcc_mvar);
    report.push("sign_convention", SIGN_CONVENTION);
    Estimate { counts, outcomes, report }
}

/// One power flow per distribution-drawn joint shift vector.
pub fn monte_carlo_pf(
    study: &Study,
    n: usize,
    dist: Distribution,
    params: &SamplingParams,
    seed: u64,
    dp: f64,
    dq: f64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Config("no_samples must be at least 1".into()));
    }
    let vectors = sample_shifts(&study.offers, n, dist, params, seed);
    let mut est = run(study, "monte-carlo", n, |i| vectors[i].clone(), dp, dq);
    est.report.push("samples", n);
    est.report.push("distribution", dist);
    est.report.push("seed", seed);
    Ok(est)
}

/// Admissible lattice shifts of every offer.
pub fn lattice_points(study: &Study) -> Result<Vec<Vec<Shift>>> {
    study.offers.iter().map(|o| Ok(build_shift_grid(o)?.points())).collect()
}

/// Number of joint lattice combinations.
pub fn combination_count(points: &[Vec<Shift>]) -> u128 {
    points.iter().map(|p| p.len() as u128).product()
}

/// The `k`-th joint vector in mixed radix order, last offer fastest.
fn nth_combination(points: &[Vec<Shift>], mut k: u128) -> Vec<Shift> {
    let mut v = vec![Shift::ZERO; points.len()];
    for (i, p) in points.iter().enumerate().rev() {
        let n = p.len() as u128;
        v[i] = p[(k % n) as usize];
        k /= n;
    }
    v
}

/// One power flow per combination of the offers' lattice points.
pub fn exhaustive_pf(study: &Study, cap: u128) -> Result<Estimate> {
    let points = lattice_points(study)?;
    let count = combination_count(&points);
    if count > cap {
        return Err(Error::Intractable { count, cap });
    }
    let dp = study.offers.first().map_or(1.0, |o| o.dp);
    let dq = study.offers.first().map_or(1.0, |o| o.dq);
    let mut est = run(study, "exhaustive", count as usize, |k| nth_combination(&points, k as u128), dp, dq);
    let per: Vec<String> = points.iter().map(|p| p.len().to_string()).collect();
    est.report.push("lattice_points_per_fsp", per.join(" x "));
    est.report.push("tractability_cap", cap);
    Ok(est)
}
