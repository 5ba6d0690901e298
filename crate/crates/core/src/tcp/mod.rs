//! Convolution-based FA estimation from single-FSP power flow impacts.
//!
//! Each FSP's lattice shifts are run through one power flow each. Their PCC
//! and component impacts are binned, and joint combinations are counted by
//! convolution under the superposition model: a combination's impact is the
//! sum of its members' impacts.

mod adapt;
mod bundle;
mod component;
mod impacts;
mod merge;
mod sensitivity;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{convolve, convolve_all, OffsetTensor};
use crate::error::{Error, Result};
use crate::grid::{bilinear_upsample, min_combine, normalize, Axis, FaGrid};
use crate::offers::{classify_small, FspOffer};
use crate::report::Report;
use crate::scalar::Scalar;
use crate::study::Study;

pub use adapt::{tc_plus_adapt, AdaptRun};
pub use bundle::{load_bundle, save_tensors, Fingerprint, TensorBundle};
pub use component::{
    build_component_tensor, build_xi, component_kernel, estimate_bytes, pcc_kernel, reduce, upsilon,
    ComponentTensor,
};
pub use impacts::{compute_fsp_impacts, FspImpact, ImpactRecord};
pub use merge::{electrical_distance, merge_groups, offer_bus, ElectricalDistance, MergeEvent};
pub use sensitivity::{
    classify_sensitivity, reach, Band, ComponentPlan, SensitivityPartition, Thresholds, LOADING_BIN_FLOOR,
    VOLTAGE_BIN_FLOOR,
};

pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;
pub const MAX_REFINE: usize = 16;

pub const SUPERPOSITION_NOTE: &str =
    "joint impacts are sums of single-FSP impacts binned on the FA lattice";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcpOptions {
    pub thresholds: Thresholds,
    /// Largest dense component tensor allowed, in bytes.
    pub memory_budget: u64,
    /// Fuse impactful FSPs of a component down to this many groups.
    pub max_fsps: Option<usize>,
}

impl Default for TcpOptions {
    fn default() -> Self {
        TcpOptions { thresholds: Thresholds::default(), memory_budget: DEFAULT_MEMORY_BUDGET, max_fsps: None }
    }
}

/// PCC cell range of the FA, relative to the base PCC point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Vec<i64>,
    pub shape: Vec<usize>,
    pub anchor: (f64, f64),
    pub step: (f64, f64),
}

impl Frame {
    /// The unconstrained support padded by one cell on every side.
    pub fn around(ufa: &OffsetTensor<impl Scalar>, anchor: (f64, f64), step: (f64, f64)) -> Self {
        Frame {
            origin: ufa.origin().iter().map(|o| o - 1).collect(),
            shape: ufa.shape().iter().map(|s| s + 2).collect(),
            anchor,
            step,
        }
    }

    pub fn parts(&self) -> (&[i64], &[usize]) {
        (&self.origin, &self.shape)
    }

    pub fn axes<T: Scalar>(&self) -> (Axis<T>, Axis<T>) {
        let ax = |a: f64, s: f64, o: i64, n: usize| Axis::around(T::of(a), T::of(s), o, o + n as i64 - 1);
        (
            ax(self.anchor.0, self.step.0, self.origin[0], self.shape[0]),
            ax(self.anchor.1, self.step.1, self.origin[1], self.shape[1]),
        )
    }

    pub fn grid<T: Scalar>(&self, t: &OffsetTensor<T>) -> FaGrid<T> {
        let t = t.reframe(&self.origin, &self.shape);
        let (p, q) = self.axes();
        FaGrid::from_values(p, q, t.data().to_vec()).expect("frame sized tensor")
    }
}

/// Outcome of a convolution estimate.
#[derive(Debug, Clone)]
pub struct TcpRun<T> {
    /// Normalized FA, refined if sub-resolution FSPs exist.
    pub fa: FaGrid<T>,
    /// Unconstrained combination counts on the frame.
    pub ufa: FaGrid<T>,
    /// Constrained counts before normalization.
    pub counts: FaGrid<T>,
    pub frame: Frame,
    pub record: ImpactRecord,
    pub partition: SensitivityPartition,
    pub components: Vec<ComponentTensor<T>>,
    pub merges: Vec<MergeEvent>,
    pub refine: usize,
    pub report: Report,
}

/// Refinement factor resolving every sub-resolution FSP with at least two lattice points.
pub fn refine_factor(offers: &[FspOffer], small: &[usize]) -> usize {
    let mut f = 2usize;
    for &i in small {
        let o = &offers[i];
        let (rp, rq) = o.ranges();
        for (step, range) in [(o.dp, rp), (o.dq, rq)] {
            if range > 0.0 {
                f = f.max((step / range).ceil() as usize);
            }
        }
    }
    f.min(MAX_REFINE)
}

/// Unconstrained combination counts of the regular FSPs.
pub fn unconstrained_fa<T: Scalar>(record: &ImpactRecord) -> Result<OffsetTensor<T>> {
    let kernels = record.regular.iter().map(pcc_kernel).collect::<Result<Vec<OffsetTensor<T>>>>()?;
    convolve_all(2, &kernels)
}

/// Convolve a normalized FA with the sub-resolution FSPs on a lattice `refine` times finer.
pub fn refine_with_small<T: Scalar>(fa: &FaGrid<T>, frame: &Frame, record: &ImpactRecord, refine: usize) -> Result<FaGrid<T>> {
    let up = bilinear_upsample(fa, refine)?;
    let r = refine as i64;
    let mut t = OffsetTensor::from_parts(
        vec![frame.origin[0] * r, frame.origin[1] * r],
        vec![up.p.len, up.q.len],
        up.into_values(),
    )?;
    for f in &record.small {
        t = convolve(&t, &pcc_kernel(f)?)?;
    }
    let fine = Frame {
        origin: t.origin().to_vec(),
        shape: t.shape().to_vec(),
        anchor: frame.anchor,
        step: (frame.step.0 / refine as f64, frame.step.1 / refine as f64),
    };
    normalize(&fine.grid(&t))
}

/// Impactful FSP groups per retained component, merging when asked to.
fn plan_groups(study: &Study, record: &ImpactRecord, partition: &SensitivityPartition, max_fsps: Option<usize>) -> Result<(Vec<Vec<Vec<usize>>>, Vec<MergeEvent>)> {
    let singletons = |p: &ComponentPlan| p.impactful.iter().map(|&f| vec![f]).collect::<Vec<_>>();
    let Some(max) = max_fsps else {
        return Ok((partition.retained.iter().map(singletons).collect(), Vec::new()));
    };
    let ed = ElectricalDistance::new(&study.pf);
    let buses = record
        .regular
        .iter()
        .map(|f| offer_bus(&study.net, &study.offers[f.offer]))
        .collect::<Result<Vec<_>>>()?;
    let mut all_groups = Vec::new();
    let mut events = Vec::new();
    for plan in &partition.retained {
        if plan.impactful.len() <= max {
            all_groups.push(singletons(plan));
            continue;
        }
        let dist: Vec<Vec<f64>> = plan
            .impactful
            .iter()
            .map(|&a| plan.impactful.iter().map(|&b| ed.between(buses[a], buses[b])).collect())
            .collect();
        let label = |f: usize| study.offers[record.regular[f].offer].to_string();
        let (groups, ev) = merge_groups(&plan.impactful, &dist, max, label, &plan.component.to_string());
        all_groups.push(groups);
        events.extend(ev);
    }
    Ok((all_groups, events))
}

/// Full estimate: impacts, unconstrained counts, per-component tensors,
/// cell-wise minimum, normalization and sub-resolution refinement.
pub fn tc_plus<T: Scalar>(study: &Study, opts: &TcpOptions) -> Result<TcpRun<T>> {
    let t0 = Instant::now();
    let (regular, small) = classify_small(&study.offers);
    let refine = if small.is_empty() { 1 } else { refine_factor(&study.offers, &small) };
    let record = compute_fsp_impacts(study, &regular, &small, refine)?;
    let step = study.offers.first().map_or((1.0, 1.0), |o| (o.dp, o.dq));
    let ufa_t = unconstrained_fa::<T>(&record)?;
    let frame = Frame::around(&ufa_t, record.base_pcc, step);
    let partition = classify_sensitivity(&record, &study.limits, &opts.thresholds);

    let mut report = Report::new(if opts.max_fsps.is_some() { "tc_plus_merge" } else { "tc_plus" });
    for plan in &partition.retained {
        let needed = estimate_bytes::<T>(&record, plan);
        report.push("memory", format!("{} needs {needed} bytes", plan.component));
        if needed > opts.memory_budget as u128 {
            return Err(Error::MemoryBudget {
                component: plan.component.to_string(),
                needed,
                budget: opts.memory_budget as u128,
            });
        }
    }
    let (groups, merges) = plan_groups(study, &record, &partition, opts.max_fsps)?;
    let components = partition
        .retained
        .par_iter()
        .zip(&groups)
        .map(|(plan, g)| build_component_tensor::<T>(&record, plan, g, frame.parts()))
        .collect::<Result<Vec<_>>>()?;

    let ufa = frame.grid(&ufa_t);
    let counts = if components.is_empty() {
        ufa.clone()
    } else {
        min_combine(&components.iter().map(|c| frame.grid(&c.upsilon)).collect::<Vec<_>>())?
    };
    let mut fa = normalize(&counts)?;
    if !record.small.is_empty() {
        fa = refine_with_small(&fa, &frame, &record, refine)?;
    }

    report.push("power_flows", record.power_flows);
    report.push("non_converged", record.failed());
    report.push("fsps", study.offers.len());
    report.push("small_fsps", small.len());
    report.push("refine_factor", refine);
    report.push("monitored_components", record.components.len());
    report.push("constrained_components", partition.retained.len());
    report.push("pruned_components", partition.pruned.len());
    report.push("memory_budget", opts.memory_budget);
    for (plan, g) in partition.retained.iter().zip(&groups) {
        let names: Vec<String> = plan.impactful.iter().map(|&f| study.offers[record.regular[f].offer].to_string()).collect();
        report.push(
            "impactful",
            format!("{} <- [{}] in {} groups, bin {:.6}", plan.component, names.join(", "), g.len(), plan.width),
        );
    }
    for m in &merges {
        report.push("merge", m);
    }
    report.push("ufa_combinations", ufa.total());
    report.push("feasible_combinations", counts.total());
    report.push("superposition", SUPERPOSITION_NOTE);
    report.push("base_pcc_mw", record.base_pcc.0);
    report.push("base_pcc_mvar", record.base_pcc.1);
    report.push("wall_time_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    Ok(TcpRun { fa, ufa, counts, frame, record, partition, components, merges, refine, report })
}

/// [`tc_plus`] with impactful FSPs fused by electrical distance down to `max_fsps` per component.
pub fn tc_plus_merge<T: Scalar>(study: &Study, opts: &TcpOptions, max_fsps: usize) -> Result<TcpRun<T>> {
    if max_fsps == 0 {
        return Err(Error::Config("max_fsps must be at least 1".into()));
    }
    tc_plus(study, &TcpOptions { max_fsps: Some(max_fsps), ..*opts })
}
