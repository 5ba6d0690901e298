//! Distribution network data model and its JSON document format.
//!
//! Element powers are kept in MW / MVAr exactly as they appear in the
//! document. Per-unit conversion happens only inside the power flow engine.

mod fixtures;
mod scenario;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use fixtures::{fixture, fixture_names};
pub use scenario::{apply_scenario, scenario, scenario_names, Scenario};

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub vn_kv: f64,
    #[serde(default)]
    pub slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub c_nf_per_km: f64,
    pub length_km: f64,
    pub max_i_ka: f64,
}

/// Two-winding transformer; the ratio follows the nominal voltages of its buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trafo {
    pub hv_bus: usize,
    pub lv_bus: usize,
    pub sn_mva: f64,
    pub vk_percent: f64,
    pub vkr_percent: f64,
}

/// A load or static generator. Both carry the same fields; the sign
/// convention (consumption vs. injection) comes from the array they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerElement {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub sn_mva: f64,
    #[serde(default = "one")]
    pub scaling: f64,
}

impl PowerElement {
    /// Active power after scaling.
    pub fn p(&self) -> f64 {
        self.p_mw * self.scaling
    }

    /// Reactive power after scaling.
    pub fn q(&self) -> f64 {
        self.q_mvar * self.scaling
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtGrid {
    pub bus: usize,
    #[serde(default = "one")]
    pub vm_pu: f64,
}

/// Line switch. `element` is the index into `lines`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub element: usize,
    #[serde(default = "yes")]
    pub closed: bool,
}

/// A validated distribution network.
///
/// Construct through [`Network::from_json`], [`load_network`] or
/// [`Network::new`]; every constructor runs [`Network::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub trafos: Vec<Trafo>,
    #[serde(default)]
    pub loads: Vec<PowerElement>,
    #[serde(default)]
    pub sgens: Vec<PowerElement>,
    pub ext_grid: Vec<ExtGrid>,
    #[serde(default)]
    pub switches: Vec<Switch>,
}

/// A monitored network component: something that carries a limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum ComponentId {
    Line(usize),
    Trafo(usize),
    /// Bus position (not id) in `Network::buses`.
    Bus(usize),
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentId::Line(i) => write!(f, "line {i}"),
            ComponentId::Trafo(i) => write!(f, "trafo {i}"),
            ComponentId::Bus(i) => write!(f, "bus {i}"),
        }
    }
}

impl ComponentId {
    /// Short file-system friendly label, e.g. `line_3`.
    pub fn slug(&self) -> String {
        self.to_string().replace(' ', "_")
    }
}

/// Parse and validate a network document from a file path.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json(&text)
}

impl Network {
    pub fn new(net: Network) -> Result<Network> {
        net.validate()?;
        Ok(net)
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let net: Network = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Position of the bus with the given id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub(crate) fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    /// Position of the external grid (slack) bus.
    pub fn slack_index(&self) -> usize {
        self.bus_index(self.ext_grid[0].bus)
            .expect("validated network has a slack bus")
    }

    /// Whether line `i` is in service (no open switch on it).
    pub fn line_in_service(&self, i: usize) -> bool {
        !self.switches.iter().any(|s| s.element == i && !s.closed)
    }

    /// Buses reachable from the slack bus over closed branches.
    pub fn energized(&self) -> Vec<bool> {
        let index = self.bus_index_map();
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (i, line) in self.lines.iter().enumerate() {
            if self.line_in_service(i) {
                let (a, b) = (index[&line.from_bus], index[&line.to_bus]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for t in &self.trafos {
            let (a, b) = (index[&t.hv_bus], index[&t.lv_bus]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let start = self.slack_index();
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Check every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        let mut ids = BTreeMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if ids.insert(bus.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            positive(bus.vn_kv, || format!("bus {} vn_kv", bus.id))?;
        }
        let check_bus = |id: usize, what: String| -> Result<()> {
            if ids.contains_key(&id) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} references unknown bus {id}")))
            }
        };

        for (i, line) in self.lines.iter().enumerate() {
            check_bus(line.from_bus, format!("line {i} from_bus"))?;
            check_bus(line.to_bus, format!("line {i} to_bus"))?;
            if line.from_bus == line.to_bus {
                return Err(Error::Validation(format!("line {i} connects bus {} to itself", line.from_bus)));
            }
            positive(line.length_km, || format!("line {i} length_km"))?;
            positive(line.max_i_ka, || format!("line {i} max_i_ka"))?;
            non_negative(line.r_ohm_per_km, || format!("line {i} r_ohm_per_km"))?;
            non_negative(line.c_nf_per_km, || format!("line {i} c_nf_per_km"))?;
            if line.r_ohm_per_km == 0.0 && line.x_ohm_per_km == 0.0 {
                return Err(Error::Validation(format!("line {i} has zero impedance")));
            }
        }
        for (i, t) in self.trafos.iter().enumerate() {
            check_bus(t.hv_bus, format!("trafo {i} hv_bus"))?;
            check_bus(t.lv_bus, format!("trafo {i} lv_bus"))?;
            positive(t.sn_mva, || format!("trafo {i} sn_mva"))?;
            positive(t.vk_percent, || format!("trafo {i} vk_percent"))?;
            non_negative(t.vkr_percent, || format!("trafo {i} vkr_percent"))?;
            if t.vkr_percent > t.vk_percent {
                return Err(Error::Validation(format!("trafo {i} vkr_percent exceeds vk_percent")));
            }
        }
        for (kind, elements) in [("load", &self.loads), ("sgen", &self.sgens)] {
            for (i, e) in elements.iter().enumerate() {
                check_bus(e.bus, format!("{kind} {i} bus"))?;
                positive(e.sn_mva, || format!("{kind} {i} sn_mva"))?;
                non_negative(e.scaling, || format!("{kind} {i} scaling"))?;
                if !e.p_mw.is_finite() || !e.q_mvar.is_finite() {
                    return Err(Error::Validation(format!("{kind} {i} has non-finite power")));
                }
            }
        }
        for (i, s) in self.switches.iter().enumerate() {
            if s.element >= self.lines.len() {
                return Err(Error::Validation(format!(
                    "switch {i} references unknown line {}",
                    s.element
                )));
            }
        }

        if self.ext_grid.len() != 1 {
            return Err(Error::Validation(format!(
                "exactly one external grid required, found {}",
                self.ext_grid.len()
            )));
        }
        let eg = &self.ext_grid[0];
        check_bus(eg.bus, "ext_grid bus".into())?;
        positive(eg.vm_pu, || "ext_grid vm_pu".into())?;
        if let Some(b) = self.buses.iter().find(|b| b.slack && b.id != eg.bus) {
            return Err(Error::Validation(format!(
                "bus {} is flagged slack but the external grid sits on bus {}",
                b.id, eg.bus
            )));
        }

        let energized = self.energized();
        for (kind, elements) in [("load", &self.loads), ("sgen", &self.sgens)] {
            for (i, e) in elements.iter().enumerate() {
                if !energized[ids[&e.bus]] && (e.p() != 0.0 || e.q() != 0.0) {
                    return Err(Error::Validation(format!(
                        "{kind} {i} on bus {} is in an island without the slack bus",
                        e.bus
                    )));
                }
            }
        }
        Ok(())
    }

    /// Monitored components: in-service lines, all trafos, energized non-slack buses.
    pub fn monitored_components(&self) -> Vec<ComponentId> {
        let energized = self.energized();
        let slack = self.slack_index();
        let mut out: Vec<ComponentId> = (0..self.lines.len())
            .filter(|&i| self.line_in_service(i))
            .map(ComponentId::Line)
            .collect();
        out.extend((0..self.trafos.len()).map(ComponentId::Trafo));
        out.extend(
            (0..self.buses.len())
                .filter(|&i| energized[i] && i != slack)
                .map(ComponentId::Bus),
        );
        out
    }

    /// Hash of everything except the operating condition (element powers and scalings).
    pub fn topology_hash(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.buses {
            h.update(format!("b{}:{}:{};", b.id, b.vn_kv, b.slack));
        }
        for l in &self.lines {
            h.update(format!(
                "l{}:{}:{}:{}:{}:{}:{};",
                l.from_bus, l.to_bus, l.r_ohm_per_km, l.x_ohm_per_km, l.c_nf_per_km, l.length_km, l.max_i_ka
            ));
        }
        for t in &self.trafos {
            h.update(format!(
                "t{}:{}:{}:{}:{};",
                t.hv_bus, t.lv_bus, t.sn_mva, t.vk_percent, t.vkr_percent
            ));
        }
        for e in &self.loads {
            h.update(format!("L{};", e.bus));
        }
        for e in &self.sgens {
            h.update(format!("G{};", e.bus));
        }
        for g in &self.ext_grid {
            h.update(format!("e{};", g.bus));
        }
        for (i, _) in self.lines.iter().enumerate() {
            h.update(if self.line_in_service(i) { "1" } else { "0" });
        }
        hex::encode(h.finalize())
    }
}

fn positive(v: f64, what: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} must be > 0, got {v}", what())))
    }
}

fn non_negative(v: f64, what: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} must be >= 0, got {v}", what())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feeder4_shape() {
        let net = fixture("feeder4").unwrap();
        assert_eq!(net.buses.len(), 4);
        assert_eq!(net.lines.len(), 2);
        assert_eq!(net.trafos.len(), 1);
    }

    #[test]
    fn orphan_bus_is_named() {
        let mut net = fixture("feeder4").unwrap();
        net.lines[0].to_bus = 99;
        let err = Network::from_json(&net.to_json()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("bus 99"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let doc = r#"{"buses":[{"id":0}],"ext_grid":[{"bus":0}]}"#;
        let err = Network::from_json(doc).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("vn_kv"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = r#"{"buses":[{"id":0,"vn_kv":20,"colour":1}],"ext_grid":[{"bus":0}]}"#;
        let err = Network::from_json(doc).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn two_ext_grids_rejected() {
        let mut net = fixture("feeder4").unwrap();
        net.ext_grid.push(ExtGrid { bus: 1, vm_pu: 1.0 });
        assert!(net.validate().is_err());
    }

    #[test]
    fn islanded_load_rejected() {
        let mut net = fixture("feeder4").unwrap();
        net.switches.push(Switch { element: 1, closed: false });
        // bus 3 now islanded while carrying a load
        let err = net.validate().unwrap_err();
        assert!(err.to_string().contains("island"), "{err}");
    }

    #[test]
    fn non_positive_rating_rejected() {
        let mut net = fixture("feeder4").unwrap();
        net.lines[0].length_km = 0.0;
        assert!(net.validate().is_err());
        let mut net = fixture("feeder4").unwrap();
        net.trafos[0].sn_mva = -1.0;
        assert!(net.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        for name in fixture_names() {
            let net = fixture(name).unwrap();
            let back = Network::from_json(&net.to_json()).unwrap();
            assert_eq!(net, back);
        }
    }

    #[test]
    fn topology_hash_ignores_operating_condition() {
        let net = fixture("feeder4").unwrap();
        let mut other = net.clone();
        other.loads[0].p_mw *= 1.1;
        other.sgens[0].scaling = 0.5;
        assert_eq!(net.topology_hash(), other.topology_hash());
        other.lines[0].length_km += 1.0;
        assert_ne!(net.topology_hash(), other.topology_hash());
    }
}
