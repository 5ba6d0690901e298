use serde::{Deserialize, Serialize};

use super::impacts::ImpactRecord;
use crate::network::ComponentId;
use crate::settings::Constraints;

/// Minimum |change| that makes an FSP count as impactful for a component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub loading_percent: f64,
    pub voltage_pu: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { loading_percent: 0.5, voltage_pu: 0.001 }
    }
}

/// Smallest bin width of the component-value axis.
pub const LOADING_BIN_FLOOR: f64 = 0.1;
pub const VOLTAGE_BIN_FLOOR: f64 = 1e-4;

/// Admissible value band of a component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn of(c: ComponentId, limits: &Constraints) -> Band {
        match c {
            ComponentId::Bus(_) => Band { lo: limits.min_voltage_pu, hi: limits.max_voltage_pu },
            _ => Band { lo: f64::MIN, hi: limits.max_loading_percent },
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

fn threshold(c: ComponentId, t: &Thresholds) -> f64 {
    match c {
        ComponentId::Bus(_) => t.voltage_pu,
        _ => t.loading_percent,
    }
}

fn bin_floor(c: ComponentId) -> f64 {
    match c {
        ComponentId::Bus(_) => VOLTAGE_BIN_FLOOR,
        _ => LOADING_BIN_FLOOR,
    }
}

/// How one retained component enters the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPlan {
    pub component: ComponentId,
    /// Position in `ImpactRecord::components`.
    pub index: usize,
    /// Positions in `ImpactRecord::regular`.
    pub impactful: Vec<usize>,
    pub others: Vec<usize>,
    /// Bin width of the component-value axis.
    pub width: f64,
    pub band: Band,
}

impl ComponentPlan {
    pub fn bin(&self, delta: f64) -> i64 {
        (delta / self.width).round() as i64
    }

    /// Whether the base value moved by `g` bins stays inside the band.
    pub fn admits(&self, base: f64, g: i64) -> bool {
        self.band.contains(base + g as f64 * self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPartition {
    pub retained: Vec<ComponentPlan>,
    pub pruned: Vec<ComponentId>,
}

/// Largest possible increase and decrease of component `c`, taking each
/// shift's raw and binned change, summed over all regular FSPs.
pub fn reach(record: &ImpactRecord, c: usize, width: f64) -> (f64, f64) {
    let mut up = 0.0;
    let mut down = 0.0;
    for f in &record.regular {
        let mut u: f64 = 0.0;
        let mut d: f64 = 0.0;
        for v in &f.values {
            let q = (v[c] / width).round() * width;
            u = u.max(v[c]).max(q);
            d = d.min(v[c]).min(q);
        }
        up += u;
        down += d;
    }
    (up, down)
}

/// Split FSPs into impactful and not per component, and drop components
/// that cannot leave their band.
pub fn classify_sensitivity(record: &ImpactRecord, limits: &Constraints, thresholds: &Thresholds) -> SensitivityPartition {
    let mut retained = Vec::new();
    let mut pruned = Vec::new();
    for (c, &id) in record.components.iter().enumerate() {
        let th = threshold(id, thresholds);
        let (impactful, others): (Vec<usize>, Vec<usize>) =
            (0..record.regular.len()).partition(|&f| record.regular[f].max_abs(c) >= th);
        let smallest = impactful
            .iter()
            .flat_map(|&f| record.regular[f].values.iter().map(move |v| v[c].abs()))
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min);
        let width = if smallest.is_finite() { smallest.max(bin_floor(id)) } else { bin_floor(id) };
        let band = Band::of(id, limits);
        let (up, down) = reach(record, c, width);
        let base = record.base_values[c];
        if base + up <= band.hi && base + down >= band.lo {
            pruned.push(id);
        } else {
            retained.push(ComponentPlan { component: id, index: c, impactful, others, width, band });
        }
    }
    SensitivityPartition { retained, pruned }
}
