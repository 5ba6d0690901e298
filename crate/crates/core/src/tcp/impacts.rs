use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::ComponentId;
use crate::offers::{build_shift_grid, FspOffer, Shift};
use crate::study::Study;

/// Effect of each lattice shift of one FSP, all other FSPs at zero shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspImpact {
    /// Position in the study's offer list.
    pub offer: usize,
    /// Lattice the shifts and PCC offsets are measured on.
    pub dp: f64,
    pub dq: f64,
    pub shifts: Vec<Shift>,
    /// Change of PCC (P, Q) per shift, MW / MVAr.
    pub pcc: Vec<(f64, f64)>,
    /// Change of every monitored value per shift, `[shift][component]`.
    pub values: Vec<Vec<f64>>,
    /// Shifts dropped because their power flow did not converge.
    pub failed: Vec<Shift>,
}

impl FspImpact {
    /// Integer PCC cell offsets per shift.
    pub fn pcc_offsets(&self) -> Vec<(i64, i64)> {
        self.pcc
            .iter()
            .map(|&(p, q)| ((p / self.dp).round() as i64, (q / self.dq).round() as i64))
            .collect()
    }

    /// Largest |change| of component `c` over all shifts.
    pub fn max_abs(&self, c: usize) -> f64 {
        self.values.iter().map(|v| v[c].abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRecord {
    pub components: Vec<ComponentId>,
    /// Base-case value per component: loading % or voltage p.u.
    pub base_values: Vec<f64>,
    pub base_pcc: (f64, f64),
    /// Regular FSPs on the FA lattice.
    pub regular: Vec<FspImpact>,
    /// Sub-resolution FSPs on the refined lattice.
    pub small: Vec<FspImpact>,
    pub power_flows: usize,
}

impl ImpactRecord {
    pub fn failed(&self) -> usize {
        self.regular.iter().chain(&self.small).map(|f| f.failed.len()).sum()
    }
}

/// One power flow per nonzero lattice shift of every FSP.
pub fn compute_fsp_impacts(study: &Study, regular: &[usize], small: &[usize], refine: usize) -> Result<ImpactRecord> {
    let components = study.net.monitored_components();
    let base_values: Vec<f64> = components.iter().map(|&c| study.base.value(c)).collect();
    let mut jobs: Vec<(usize, bool, Shift)> = Vec::new();
    let mut lattices = Vec::new();
    for (&i, is_small) in regular.iter().map(|i| (i, false)).chain(small.iter().map(|i| (i, true))) {
        let mut o: FspOffer = study.offers[i].clone();
        if is_small {
            o.dp /= refine as f64;
            o.dq /= refine as f64;
        }
        let pts = build_shift_grid(&o)?.points();
        jobs.extend(pts.iter().filter(|s| **s != Shift::ZERO).map(|&s| (i, is_small, s)));
        lattices.push((i, is_small, o.dp, o.dq, pts));
    }
    let n_offers = study.offers.len();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(i, _, s)| {
            let mut v = vec![Shift::ZERO; n_offers];
            v[i] = s;
            study.solve(&v)
        })
        .collect();
    let mut solved = jobs.iter().zip(&results);
    let (mut reg, mut sm) = (Vec::new(), Vec::new());
    for (offer, is_small, dp, dq, pts) in lattices {
        let mut imp = FspImpact {
            offer,
            dp,
            dq,
            shifts: Vec::with_capacity(pts.len()),
            pcc: Vec::with_capacity(pts.len()),
            values: Vec::with_capacity(pts.len()),
            failed: Vec::new(),
        };
        for s in pts {
            if s == Shift::ZERO {
                imp.shifts.push(s);
                imp.pcc.push((0.0, 0.0));
                imp.values.push(vec![0.0; components.len()]);
                continue;
            }
            let (_, r) = solved.next().expect("one result per job");
            if !r.converged {
                imp.failed.push(s);
                continue;
            }
            imp.shifts.push(s);
            imp.pcc.push((r.p_pcc_mw - study.base.p_pcc_mw, r.q_pcc_mvar - study.base.q_pcc_mvar));
            imp.values.push(components.iter().zip(&base_values).map(|(&c, b)| r.value(c) - b).collect());
        }
        if is_small {
            sm.push(imp);
        } else {
            reg.push(imp);
        }
    }
    Ok(ImpactRecord {
        components,
        base_values,
        base_pcc: study.base_pcc(),
        regular: reg,
        small: sm,
        power_flows: jobs.len(),
    })
}
