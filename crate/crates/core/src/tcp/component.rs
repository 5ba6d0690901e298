use serde::{Deserialize, Serialize};

use super::impacts::{FspImpact, ImpactRecord};
use super::sensitivity::ComponentPlan;
use crate::conv::{convolve, convolve_all, OffsetTensor};
use crate::error::Result;
use crate::scalar::Scalar;

/// Histogram of one FSP's shifts over PCC cell offsets.
pub fn pcc_kernel<T: Scalar>(f: &FspImpact) -> Result<OffsetTensor<T>> {
    let pts: Vec<Vec<i64>> = f.pcc_offsets().into_iter().map(|(p, q)| vec![p, q]).collect();
    OffsetTensor::histogram(&pts)
}

/// Histogram of one FSP's shifts over (PCC P cell, PCC Q cell, component-value bin).
pub fn component_kernel<T: Scalar>(f: &FspImpact, plan: &ComponentPlan) -> Result<OffsetTensor<T>> {
    let pts: Vec<Vec<i64>> = f
        .pcc_offsets()
        .into_iter()
        .zip(&f.values)
        .map(|((p, q), v)| vec![p, q, plan.bin(v[plan.index])])
        .collect();
    OffsetTensor::histogram(&pts)
}

/// Bytes of the dense component tensor, from the kernels' extents.
pub fn estimate_bytes<T>(record: &ImpactRecord, plan: &ComponentPlan) -> u128 {
    let mut extent = [1u128; 3];
    for &f in &plan.impactful {
        let imp = &record.regular[f];
        let offs = imp.pcc_offsets();
        let bins: Vec<i64> = imp.values.iter().map(|v| plan.bin(v[plan.index])).collect();
        let span = |xs: &mut dyn Iterator<Item = i64>| {
            let (lo, hi) = xs.fold((i64::MAX, i64::MIN), |(a, b), x| (a.min(x), b.max(x)));
            if lo > hi { 0 } else { (hi - lo) as u128 }
        };
        extent[0] += span(&mut offs.iter().map(|o| o.0));
        extent[1] += span(&mut offs.iter().map(|o| o.1));
        extent[2] += span(&mut bins.iter().copied());
    }
    extent.iter().product::<u128>() * std::mem::size_of::<T>() as u128
}

/// Per-component tensors: the feasibility tensor, its PCC reduction and
/// the reduction convolved with the remaining FSPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTensor<T> {
    pub plan: ComponentPlan,
    /// Unmasked; the band is applied when reducing.
    pub xi: OffsetTensor<T>,
    pub a: OffsetTensor<T>,
    pub upsilon: OffsetTensor<T>,
}

/// Convolve the kernels of each group, then the groups together.
pub fn build_xi<T: Scalar>(record: &ImpactRecord, plan: &ComponentPlan, groups: &[Vec<usize>]) -> Result<OffsetTensor<T>> {
    let mut merged = Vec::with_capacity(groups.len());
    for g in groups {
        let kernels = g
            .iter()
            .map(|&f| component_kernel(&record.regular[f], plan))
            .collect::<Result<Vec<OffsetTensor<T>>>>()?;
        merged.push(convolve_all(3, &kernels)?);
    }
    convolve_all(3, &merged)
}

/// Sum over the value axis of the entries whose value stays inside the band.
pub fn reduce<T: Scalar>(xi: &OffsetTensor<T>, plan: &ComponentPlan, base: f64) -> OffsetTensor<T> {
    let shape = xi.shape();
    let g0 = xi.origin()[2];
    let keep: Vec<bool> = (0..shape[2]).map(|g| plan.admits(base, g0 + g as i64)).collect();
    let data = xi
        .data()
        .chunks(shape[2])
        .map(|row| row.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).sum())
        .collect();
    OffsetTensor::from_parts(xi.origin()[..2].to_vec(), shape[..2].to_vec(), data).expect("consistent parts")
}

/// Convolve the reduction with the non-impactful FSPs and place it in the FA frame.
pub fn upsilon<T: Scalar>(
    a: &OffsetTensor<T>,
    record: &ImpactRecord,
    plan: &ComponentPlan,
    frame: (&[i64], &[usize]),
) -> Result<OffsetTensor<T>> {
    let mut acc = a.clone();
    for &f in &plan.others {
        acc = convolve(&acc, &pcc_kernel(&record.regular[f])?)?;
    }
    Ok(acc.reframe(frame.0, frame.1))
}

pub fn build_component_tensor<T: Scalar>(
    record: &ImpactRecord,
    plan: &ComponentPlan,
    groups: &[Vec<usize>],
    frame: (&[i64], &[usize]),
) -> Result<ComponentTensor<T>> {
    let xi = build_xi(record, plan, groups)?;
    let a = reduce(&xi, plan, record.base_values[plan.index]);
    let upsilon = upsilon(&a, record, plan, frame)?;
    Ok(ComponentTensor { plan: plan.clone(), xi, a, upsilon })
}
