use serde::{Deserialize, Serialize};

use super::PfResult;
use crate::error::{Error, Result};
use crate::network::ComponentId;
use crate::settings::Constraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Loading,
    Voltage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub component: ComponentId,
    pub quantity: Quantity,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Compare a converged solution with the system limits.
pub fn check_constraints(result: &PfResult, limits: &Constraints) -> Result<ConstraintReport> {
    if !result.converged {
        return Err(Error::Contract(
            "check_constraints called on a non-converged power flow".into(),
        ));
    }
    let mut violations = Vec::new();
    let loadings = result
        .line_loading_percent
        .iter()
        .enumerate()
        .map(|(i, &v)| (ComponentId::Line(i), v))
        .chain(
            result
                .trafo_loading_percent
                .iter()
                .enumerate()
                .map(|(i, &v)| (ComponentId::Trafo(i), v)),
        );
    for (component, value) in loadings {
        if value > limits.max_loading_percent {
            violations.push(Violation {
                component,
                quantity: Quantity::Loading,
                value,
                limit: limits.max_loading_percent,
            });
        }
    }
    for (i, &vm) in result.vm_pu.iter().enumerate() {
        if !result.energized[i] {
            continue;
        }
        let limit = if vm > limits.max_voltage_pu {
            limits.max_voltage_pu
        } else if vm < limits.min_voltage_pu {
            limits.min_voltage_pu
        } else {
            continue;
        };
        violations.push(Violation {
            component: ComponentId::Bus(i),
            quantity: Quantity::Voltage,
            value: vm,
            limit,
        });
    }
    Ok(ConstraintReport {
        feasible: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(loadings: &[f64], voltages: &[f64]) -> PfResult {
        PfResult {
            vm_pu: voltages.to_vec(),
            va_rad: vec![0.0; voltages.len()],
            line_loading_percent: loadings.to_vec(),
            trafo_loading_percent: vec![],
            p_pcc_mw: 0.0,
            q_pcc_mvar: 0.0,
            losses_mw: 0.0,
            losses_mvar: 0.0,
            energized: vec![true; voltages.len()],
            converged: true,
            iterations: 1,
            max_mismatch: 0.0,
        }
    }

    #[test]
    fn all_within_limits() {
        let r = check_constraints(&result(&[40.0, 40.0], &[1.0, 1.0]), &Constraints::default()).unwrap();
        assert!(r.feasible);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn one_overloaded_line() {
        let r = check_constraints(&result(&[40.0, 101.0], &[1.0, 1.0]), &Constraints::default()).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].component, ComponentId::Line(1));
        assert_eq!(r.violations[0].quantity, Quantity::Loading);
    }

    #[test]
    fn undervoltage() {
        let r = check_constraints(&result(&[10.0], &[1.0, 0.94]), &Constraints::default()).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.violations[0].quantity, Quantity::Voltage);
        assert_eq!(r.violations[0].limit, 0.95);
    }

    #[test]
    fn limit_itself_is_feasible() {
        let r = check_constraints(&result(&[100.0], &[1.05, 0.95]), &Constraints::default()).unwrap();
        assert!(r.feasible);
    }

    #[test]
    fn non_converged_is_contract_error() {
        let mut r = result(&[10.0], &[1.0]);
        r.converged = false;
        assert!(matches!(
            check_constraints(&r, &Constraints::default()),
            Err(Error::Contract(_))
        ));
    }
}
