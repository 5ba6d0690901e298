use std::path::Path;
use std::time::Instant;

use nalgebra::RealField;
use rayon::prelude::*;

use super::bundle::{load_bundle, Fingerprint, TensorBundle};
use super::component::upsilon;
use super::sensitivity::{reach, Band, LOADING_BIN_FLOOR, VOLTAGE_BIN_FLOOR};
use super::{refine_with_small, Frame};
use crate::conv::OffsetTensor;
use crate::error::{Error, Result};
use crate::grid::{min_combine, normalize, FaGrid};
use crate::network::ComponentId;
use crate::report::Report;
use crate::scalar::Scalar;
use crate::study::Study;
use crate::tt::tt_contract_last;

#[derive(Debug, Clone)]
pub struct AdaptRun<T> {
    pub fa: FaGrid<T>,
    pub counts: FaGrid<T>,
    pub frame: Frame,
    /// Components whose stored pruning or headroom no longer holds.
    pub stale: Vec<String>,
    pub report: Report,
}

/// Re-estimate the FA for a new operating condition from stored tensors.
///
/// Only the base case is solved; stored impacts and tensors are reused and
/// each component's band is re-applied around its new base value by
/// contracting the value mode of the stored train.
pub fn tc_plus_adapt<T: Scalar + RealField>(study: &Study, dir: &Path) -> Result<AdaptRun<T>> {
    let t0 = Instant::now();
    let bundle: TensorBundle<T> = load_bundle(dir)?;
    if let Some(reason) = bundle.fingerprint.mismatch(&Fingerprint::of(study)) {
        return Err(Error::FingerprintMismatch { path: dir.to_path_buf(), reason });
    }
    let mut record = bundle.record.clone();
    let new_values: Vec<f64> = record.components.iter().map(|&c| study.base.value(c)).collect();
    let stale = staleness(&bundle, &new_values);
    record.base_values = new_values;
    record.base_pcc = study.base_pcc();
    let frame = Frame { anchor: study.base_pcc(), ..bundle.frame.clone() };

    let upsilons = bundle
        .components
        .par_iter()
        .zip(&bundle.tensors)
        .zip(&bundle.partition.retained)
        .map(|((stored, tt), plan)| {
            let base = record.base_values[plan.index];
            let g0 = stored.origin[2];
            let keep: Vec<T> = (0..tt.shape[2])
                .map(|g| if plan.admits(base, g0 + g as i64) { T::one() } else { T::zero() })
                .collect();
            let reduced: Vec<T> = tt_contract_last(tt, &keep)?
                .into_iter()
                .map(|v| num_traits::Float::max(num_traits::Float::round(v), T::zero()))
                .collect();
            let a = OffsetTensor::from_parts(stored.origin[..2].to_vec(), tt.shape[..2].to_vec(), reduced)?;
            Ok(frame.grid(&upsilon(&a, &record, plan, frame.parts())?))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = if upsilons.is_empty() { frame.grid(&bundle.ufa) } else { min_combine(&upsilons)? };
    let mut fa = normalize(&counts)?;
    if !record.small.is_empty() {
        fa = refine_with_small(&fa, &frame, &record, bundle.refine)?;
    }

    let mut report = Report::new("tc_plus_adapt");
    report.push("power_flows", 1);
    report.push("store", dir.display());
    report.push("tt_epsilon", bundle.epsilon);
    report.push("constrained_components", bundle.components.len());
    report.push("pruned_components", bundle.partition.pruned.len());
    report.push("base_pcc_mw", record.base_pcc.0);
    report.push("base_pcc_mvar", record.base_pcc.1);
    for s in &stale {
        report.push("staleness_warning", s);
    }
    report.push("wall_time_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    Ok(AdaptRun { fa, counts, frame, stale, report })
}

/// Pruned components the stored impacts could now push out of band, and
/// components whose headroom changed sign.
fn staleness<T>(bundle: &TensorBundle<T>, new_values: &[f64]) -> Vec<String> {
    let record = &bundle.record;
    let mut out = Vec::new();
    for (c, &id) in record.components.iter().enumerate() {
        let band = Band::of(id, &bundle.limits);
        let (old, new) = (record.base_values[c], new_values[c]);
        let headroom = |v: f64| (band.hi - v).min(v - band.lo);
        if (headroom(old) > 0.0) != (headroom(new) > 0.0) {
            out.push(format!("{id}: headroom {:.4} -> {:.4}", headroom(old), headroom(new)));
        } else if bundle.partition.pruned.contains(&id) {
            let width = match id {
                ComponentId::Bus(_) => VOLTAGE_BIN_FLOOR,
                _ => LOADING_BIN_FLOOR,
            };
            let (up, down) = reach(record, c, width);
            if new + up > band.hi || new + down < band.lo {
                out.push(format!("{id}: pruned when stored but now reachable by the FSPs"));
            }
        }
    }
    out
}
