//! A network, its FSP offers and limits, prepared for repeated evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::offers::{ElementKind, FspOffer, Shift};
use crate::pf::{check_constraints, Injections, PfOptions, PfResult, PowerFlow, Violation};
use crate::settings::Constraints;

#[derive(Debug, Clone)]
pub struct Study {
    pub net: Network,
    pub offers: Vec<FspOffer>,
    pub limits: Constraints,
    pub pf: PowerFlow,
    pub base: PfResult,
}

/// Result of evaluating one joint shift vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    pub shifts: Vec<Shift>,
    pub p_pcc_mw: f64,
    pub q_pcc_mvar: f64,
    pub converged: bool,
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl Study {
    /// Solve the base case; a diverging base case is fatal for every estimator.
    pub fn new(net: Network, offers: Vec<FspOffer>, limits: Constraints, opts: PfOptions) -> Result<Self> {
        for o in &offers {
            let n = match o.kind {
                ElementKind::Load => net.loads.len(),
                ElementKind::Generator => net.sgens.len(),
            };
            if o.element >= n {
                return Err(Error::Config(format!("{o} does not exist in {}", net.name)));
            }
        }
        let pf = PowerFlow::new(&net, opts)?;
        let base = pf.solve_base();
        if !base.converged {
            return Err(Error::BaseCaseDiverged { mismatch: base.max_mismatch });
        }
        Ok(Study { net, offers, limits, pf, base })
    }

    pub fn base_pcc(&self) -> (f64, f64) {
        (self.base.p_pcc_mw, self.base.q_pcc_mvar)
    }

    /// Base setpoints with every offer moved by its shift.
    pub fn injections(&self, shifts: &[Shift]) -> Injections {
        let mut inj = self.pf.base_injections().clone();
        for (o, s) in self.offers.iter().zip(shifts) {
            match o.kind {
                ElementKind::Load => {
                    inj.load_p[o.element] += s.p;
                    inj.load_q[o.element] += s.q;
                }
                ElementKind::Generator => {
                    inj.sgen_p[o.element] += s.p;
                    inj.sgen_q[o.element] += s.q;
                }
            }
        }
        inj
    }

    pub fn solve(&self, shifts: &[Shift]) -> PfResult {
        self.pf.solve(&self.injections(shifts))
    }

    pub fn evaluate(&self, index: usize, shifts: Vec<Shift>) -> SampleOutcome {
        let r = self.solve(&shifts);
        let (feasible, violations) = if r.converged {
            let rep = check_constraints(&r, &self.limits).expect("converged");
            (rep.feasible, rep.violations)
        } else {
            (false, Vec::new())
        };
        SampleOutcome {
            index,
            shifts,
            p_pcc_mw: r.p_pcc_mw,
            q_pcc_mvar: r.q_pcc_mvar,
            converged: r.converged,
            feasible,
            violations,
        }
    }
}
