use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

/// Operating-condition scenario: element scalings and switch overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Multiplies every load's scaling.
    pub load_scaling: f64,
    /// Multiplies every static generator's scaling.
    pub sgen_scaling: f64,
    /// Per-element load scaling overrides, applied after `load_scaling`.
    #[serde(default)]
    pub load_overrides: Vec<(usize, f64)>,
    #[serde(default)]
    pub sgen_overrides: Vec<(usize, f64)>,
    /// `(switch index, closed)`; `None` in place of an index closes every switch.
    #[serde(default)]
    pub switch_overrides: Vec<(Option<usize>, bool)>,
}

impl Scenario {
    pub fn identity(name: &str) -> Self {
        Scenario {
            name: name.to_string(),
            load_scaling: 1.0,
            sgen_scaling: 1.0,
            load_overrides: Vec::new(),
            sgen_overrides: Vec::new(),
            switch_overrides: Vec::new(),
        }
    }
}

const NAMES: [&str; 4] = ["base", "high-load", "low-load", "all-switches-closed"];

pub fn scenario_names() -> &'static [&'static str] {
    &NAMES
}

/// Look up a named scenario from the registry.
pub fn scenario(name: &str) -> Result<Scenario> {
    let mut s = Scenario::identity(name);
    match name {
        "base" => {}
        "high-load" => s.load_scaling = 1.2,
        "low-load" => s.load_scaling = 0.6,
        "all-switches-closed" => s.switch_overrides.push((None, true)),
        other => {
            return Err(Error::Config(format!(
                "unknown scenario_type '{other}', expected one of: {}",
                NAMES.join(", ")
            )))
        }
    }
    Ok(s)
}

/// Return a copy of `net` with the scenario applied. The input is untouched.
pub fn apply_scenario(net: &Network, scenario: &Scenario) -> Result<Network> {
    if !(scenario.load_scaling >= 0.0 && scenario.sgen_scaling >= 0.0) {
        return Err(Error::Validation(format!(
            "scenario {} has negative scaling",
            scenario.name
        )));
    }
    let mut out = net.clone();
    for l in &mut out.loads {
        l.scaling *= scenario.load_scaling;
    }
    for g in &mut out.sgens {
        g.scaling *= scenario.sgen_scaling;
    }
    for &(i, f) in &scenario.load_overrides {
        let load = out.loads.get_mut(i).ok_or_else(|| {
            Error::Validation(format!("scenario {} references unknown load {i}", scenario.name))
        })?;
        if f < 0.0 {
            return Err(Error::Validation(format!("negative scaling for load {i}")));
        }
        load.scaling = f;
    }
    for &(i, f) in &scenario.sgen_overrides {
        let sgen = out.sgens.get_mut(i).ok_or_else(|| {
            Error::Validation(format!("scenario {} references unknown sgen {i}", scenario.name))
        })?;
        if f < 0.0 {
            return Err(Error::Validation(format!("negative scaling for sgen {i}")));
        }
        sgen.scaling = f;
    }
    for &(idx, closed) in &scenario.switch_overrides {
        match idx {
            None => out.switches.iter_mut().for_each(|s| s.closed = closed),
            Some(i) => {
                out.switches
                    .get_mut(i)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "scenario {} references unknown switch {i}",
                            scenario.name
                        ))
                    })?
                    .closed = closed
            }
        }
    }
    out.validate()?;
    Ok(out)
}
