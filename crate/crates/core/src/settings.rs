//! Estimation settings, their acceptable options, and validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{apply_scenario, scenario, Network};

/// System limits every feasible operating point must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Maximum component loading in percent.
    pub max_loading_percent: f64,
    pub max_voltage_pu: f64,
    pub min_voltage_pu: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            max_loading_percent: 100.0,
            max_voltage_pu: 1.05,
            min_voltage_pu: 0.95,
        }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_loading_percent > 0.0) {
            return Err(Error::Config(format!(
                "max_curr_per must be > 0, got {}",
                self.max_loading_percent
            )));
        }
        if !(self.min_voltage_pu < 1.0 && 1.0 < self.max_voltage_pu) {
            return Err(Error::Config(format!(
                "voltage limits must satisfy min_volt_pu < 1 < max_volt_pu, got [{}, {}]",
                self.min_voltage_pu, self.max_voltage_pu
            )));
        }
        Ok(())
    }
}

macro_rules! closed_option {
    ($(#[$meta:meta])* $name:ident, $what:literal, [$($variant:ident),+]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $(if s == stringify!($variant) {
                    return Ok($name::$variant);
                })+
                let options: Vec<&str> = Self::ALL.iter().map(|v| v.as_str()).collect();
                Err(Error::Config(format!(
                    "{} '{}' is not supported; acceptable options: {}",
                    $what,
                    s,
                    options.join(", ")
                )))
            }
        }
    };
}

closed_option!(
    /// Sampling distribution for Monte-Carlo power flow.
    Distribution,
    "distribution",
    [Uniform, Kumaraswamy, Hard]
);

closed_option!(
    /// Shape of an FSP's flexibility envelope.
    FlexShape,
    "flex_shape",
    [Smax, PQmax]
);

/// Tunable parameters of the sampling distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub kumaraswamy_a: f64,
    pub kumaraswamy_b: f64,
    /// Probability that a Hard draw lands on an envelope vertex.
    pub hard_vertex_probability: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            kumaraswamy_a: 0.5,
            kumaraswamy_b: 0.5,
            hard_vertex_probability: 0.8,
        }
    }
}

/// Raw, possibly incomplete estimation settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub fsp_load_indices: Vec<usize>,
    pub fsp_dg_indices: Vec<usize>,
    pub scenario_type: Option<String>,
    pub max_curr_per: Option<f64>,
    pub max_volt_pu: Option<f64>,
    pub min_volt_pu: Option<f64>,
    pub dp: Option<f64>,
    pub dq: Option<f64>,
    pub no_samples: Option<usize>,
    pub distribution: Option<String>,
    pub opf_step: Option<f64>,
    pub flex_shape: Option<String>,
    pub non_linear_fsps: Vec<usize>,
    pub max_fsps: Option<usize>,
    pub tt_epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub sampling: Option<SamplingParams>,
}

/// Settings after validation, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedSettings {
    pub fsp_load_indices: Vec<usize>,
    pub fsp_dg_indices: Vec<usize>,
    pub scenario_type: String,
    pub constraints: Constraints,
    pub dp: f64,
    pub dq: f64,
    pub no_samples: usize,
    pub distribution: Distribution,
    pub opf_step: f64,
    pub flex_shape: FlexShape,
    pub non_linear_fsps: Vec<usize>,
    pub max_fsps: usize,
    pub tt_epsilon: f64,
    pub seed: u64,
    pub sampling: SamplingParams,
}

impl ValidatedSettings {
    pub fn fsp_count(&self) -> usize {
        self.fsp_load_indices.len() + self.fsp_dg_indices.len()
    }
}

pub const DEFAULT_DP: f64 = 0.05;
pub const DEFAULT_DQ: f64 = 0.1;
pub const DEFAULT_NO_SAMPLES: usize = 6000;
pub const DEFAULT_OPF_STEP: f64 = 0.1;
pub const DEFAULT_TT_EPSILON: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 212;

/// Check settings against the acceptable options and fill defaults.
///
/// When `net` is given, FSP indices are also checked against it. The network
/// is never modified.
pub fn validate_settings(settings: &Settings, net: Option<&Network>) -> Result<ValidatedSettings> {
    let n_fsp = settings.fsp_load_indices.len() + settings.fsp_dg_indices.len();
    if n_fsp == 0 {
        return Err(Error::Config(
            "at least one FSP required: fsp_load_indices and fsp_dg_indices are both empty".into(),
        ));
    }
    for (what, list) in [
        ("fsp_load_indices", &settings.fsp_load_indices),
        ("fsp_dg_indices", &settings.fsp_dg_indices),
    ] {
        let mut sorted = list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != list.len() {
            return Err(Error::Config(format!("{what} contains duplicates")));
        }
    }

    let constraints = Constraints {
        max_loading_percent: settings.max_curr_per.unwrap_or(100.0),
        max_voltage_pu: settings.max_volt_pu.unwrap_or(1.05),
        min_voltage_pu: settings.min_volt_pu.unwrap_or(0.95),
    };
    constraints.validate()?;

    let dp = settings.dp.unwrap_or(DEFAULT_DP);
    let dq = settings.dq.unwrap_or(DEFAULT_DQ);
    for (name, v) in [("dp", dp), ("dq", dq)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} must be > 0, got {v}")));
        }
    }

    let no_samples = settings.no_samples.unwrap_or(DEFAULT_NO_SAMPLES);
    if no_samples == 0 {
        return Err(Error::Config("no_samples must be >= 1".into()));
    }

    let distribution = match &settings.distribution {
        Some(d) => d.parse()?,
        None => Distribution::Hard,
    };
    let flex_shape = match &settings.flex_shape {
        Some(s) => s.parse()?,
        None => FlexShape::Smax,
    };

    let opf_step = settings.opf_step.unwrap_or(DEFAULT_OPF_STEP);
    if !(opf_step > 0.0 && opf_step <= 1.0) {
        return Err(Error::Config(format!("opf_step must be in (0, 1], got {opf_step}")));
    }

    for idx in &settings.non_linear_fsps {
        if !settings.fsp_dg_indices.contains(idx) {
            return Err(Error::Config(format!(
                "non_linear_fsps entry {idx} is not listed in fsp_dg_indices"
            )));
        }
    }

    let max_fsps = settings.max_fsps.unwrap_or(n_fsp.saturating_sub(1).max(1));
    if max_fsps == 0 {
        return Err(Error::Config("max_fsps must be >= 1".into()));
    }

    let tt_epsilon = settings.tt_epsilon.unwrap_or(DEFAULT_TT_EPSILON);
    if !(tt_epsilon > 0.0 && tt_epsilon < 1.0) {
        return Err(Error::Config(format!("tt_epsilon must be in (0, 1), got {tt_epsilon}")));
    }

    let sampling = settings.sampling.unwrap_or_default();
    if !(sampling.kumaraswamy_a > 0.0 && sampling.kumaraswamy_b > 0.0) {
        return Err(Error::Config("Kumaraswamy parameters must be > 0".into()));
    }
    if !(0.0..=1.0).contains(&sampling.hard_vertex_probability) {
        return Err(Error::Config("hard_vertex_probability must be in [0, 1]".into()));
    }

    let scenario_type = settings.scenario_type.clone().unwrap_or_else(|| "base".into());
    let scen = scenario(&scenario_type)?;

    if let Some(net) = net {
        for &i in &settings.fsp_load_indices {
            if i >= net.loads.len() {
                return Err(Error::Config(format!(
                    "fsp_load_indices entry {i} out of range ({} loads)",
                    net.loads.len()
                )));
            }
        }
        for &i in &settings.fsp_dg_indices {
            if i >= net.sgens.len() {
                return Err(Error::Config(format!(
                    "fsp_dg_indices entry {i} out of range ({} sgens)",
                    net.sgens.len()
                )));
            }
        }
        // catches switch overrides that would island part of the network
        apply_scenario(net, &scen)?;
    }

    Ok(ValidatedSettings {
        fsp_load_indices: settings.fsp_load_indices.clone(),
        fsp_dg_indices: settings.fsp_dg_indices.clone(),
        scenario_type,
        constraints,
        dp,
        dq,
        no_samples,
        distribution,
        opf_step,
        flex_shape,
        non_linear_fsps: settings.non_linear_fsps.clone(),
        max_fsps,
        tt_epsilon,
        seed: settings.seed.unwrap_or(DEFAULT_SEED),
        sampling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_and_three() -> Settings {
        Settings {
            fsp_load_indices: vec![1, 2, 3],
            fsp_dg_indices: vec![1, 2, 3],
            ..Default::default()
        }
    }

    #[test]
    fn zero_fsps_rejected() {
        let err = validate_settings(&Settings::default(), None).unwrap_err();
        assert!(err.to_string().contains("at least one FSP required"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn max_fsps_defaults_to_count_minus_one() {
        let v = validate_settings(&three_and_three(), None).unwrap();
        assert_eq!(v.max_fsps, 5);
    }

    #[test]
    fn defaults_filled() {
        let v = validate_settings(&three_and_three(), None).unwrap();
        assert_eq!(v.flex_shape, FlexShape::Smax);
        assert_eq!(v.distribution, Distribution::Hard);
        assert_eq!(v.constraints, Constraints::default());
        assert_eq!(v.scenario_type, "base");
    }

    #[test]
    fn unknown_distribution_lists_options() {
        let s = Settings {
            distribution: Some("Gaussian".into()),
            ..three_and_three()
        };
        let msg = validate_settings(&s, None).unwrap_err().to_string();
        for opt in ["Uniform", "Kumaraswamy", "Hard"] {
            assert!(msg.contains(opt), "{msg}");
        }
    }

    #[test]
    fn non_positive_resolution_rejected() {
        for (dp, dq) in [(0.0, 0.1), (0.05, -0.1)] {
            let s = Settings {
                dp: Some(dp),
                dq: Some(dq),
                ..three_and_three()
            };
            assert!(validate_settings(&s, None).is_err());
        }
    }

    #[test]
    fn unknown_scenario_rejected() {
        let s = Settings {
            scenario_type: Some("xyz".into()),
            ..three_and_three()
        };
        assert!(validate_settings(&s, None).is_err());
    }

    #[test]
    fn indices_checked_against_network() {
        let net = crate::network::fixture("feeder4").unwrap();
        let s = Settings {
            fsp_dg_indices: vec![7],
            ..Default::default()
        };
        assert!(validate_settings(&s, Some(&net)).is_err());
    }

    #[test]
    fn discrete_fsp_must_be_a_dg_fsp() {
        let s = Settings {
            non_linear_fsps: vec![4],
            ..three_and_three()
        };
        assert!(validate_settings(&s, None).is_err());
    }

    #[test]
    fn bad_voltage_band_rejected() {
        let s = Settings {
            min_volt_pu: Some(1.01),
            ..three_and_three()
        };
        assert!(validate_settings(&s, None).is_err());
    }
}
