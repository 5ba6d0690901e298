//! Run configuration and dispatch to the estimators, with the artifact contract:
//! every successful run writes a figure, a CSV and a text report.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{exhaustive_pf, monte_carlo_pf, DEFAULT_EXHAUSTIVE_CAP};
use crate::grid::{write_csv, FaGrid};
use crate::network::{apply_scenario, fixture, load_network, scenario, Network};
use crate::offers::offers_from_settings;
use crate::opf::{opf_boundary_sweep, OpfSweep};
use crate::output::{fa_svg, polygon_svg, write_svg};
use crate::pf::PfOptions;
use crate::report::Report;
use crate::settings::{validate_settings, Settings, ValidatedSettings};
use crate::study::Study;
use crate::tcp::{save_tensors, tc_plus, tc_plus_adapt, tc_plus_merge, TcpOptions, DEFAULT_MEMORY_BUDGET};

pub const OUTPUT_DIR_ENV: &str = "FA_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "fa-output";
pub const DEFAULT_NETWORK: &str = "mv-oberrhein-like";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    MonteCarlo,
    Exhaustive,
    Opf,
    Tcp,
    TcpMerge,
    TcpSave,
    TcpAdapt,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::MonteCarlo,
        Command::Exhaustive,
        Command::Opf,
        Command::Tcp,
        Command::TcpMerge,
        Command::TcpSave,
        Command::TcpAdapt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::MonteCarlo => "monte-carlo",
            Command::Exhaustive => "exhaustive",
            Command::Opf => "opf",
            Command::Tcp => "tcp",
            Command::TcpMerge => "tcp-merge",
            Command::TcpSave => "tcp-save",
            Command::TcpAdapt => "tcp-adapt",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand '{s}'")))
    }
}

/// Everything a run needs. All fields are optional in a config file; flags
/// are layered on top with [`RunConfig::overlay`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Path to a network JSON document or the name of a built-in fixture.
    pub network: Option<String>,
    #[serde(flatten)]
    pub settings: Settings,
    pub output_dir: Option<PathBuf>,
    /// Tensor store written by tcp-save and read by tcp-adapt.
    pub store: Option<PathBuf>,
    pub memory_budget: Option<u64>,
    pub exhaustive_cap: Option<u128>,
}

macro_rules! overlay_fields {
    ($dst:expr, $src:expr, [$($f:ident),*]) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f.clone(); })*
    };
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: &RunConfig) -> RunConfig {
        overlay_fields!(self, flags, [network, output_dir, store, memory_budget, exhaustive_cap]);
        let (s, f) = (&mut self.settings, &flags.settings);
        if !f.fsp_load_indices.is_empty() {
            s.fsp_load_indices = f.fsp_load_indices.clone();
        }
        if !f.fsp_dg_indices.is_empty() {
            s.fsp_dg_indices = f.fsp_dg_indices.clone();
        }
        if !f.non_linear_fsps.is_empty() {
            s.non_linear_fsps = f.non_linear_fsps.clone();
        }
        overlay_fields!(
            s,
            f,
            [
                scenario_type, max_curr_per, max_volt_pu, min_volt_pu, dp, dq, no_samples, distribution, opf_step,
                flex_shape, max_fsps, tt_epsilon, seed, sampling
            ]
        );
        self
    }

    /// Explicit directory, else `$FA_OUTPUT_DIR`, else `./fa-output`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

pub fn resolve_network(source: Option<&str>) -> Result<Network> {
    let source = source.unwrap_or(DEFAULT_NETWORK);
    let path = Path::new(source);
    if path.exists() {
        load_network(path)
    } else {
        fixture(source)
    }
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub figure: PathBuf,
    pub csv: PathBuf,
    pub report: PathBuf,
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Artifacts,
    pub report: Report,
    pub fa: Option<FaGrid<f64>>,
    pub opf: Option<OpfSweep>,
}

/// Run id: first 8 hex digits of a hash over the subcommand, network and settings.
pub fn run_id(command: Command, net: &Network, settings: &ValidatedSettings) -> String {
    let mut h = Sha256::new();
    h.update(command.as_str());
    h.update(net.to_json());
    h.update(serde_json::to_string(settings).unwrap_or_default());
    hex::encode(h.finalize())[..8].to_string()
}

fn write_opf_csv(sweep: &OpfSweep, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["objective", "alpha", "p_mw", "q_mvar", "converged", "iterations"])?;
    for p in &sweep.points {
        w.write_record([
            p.objective.to_string(),
            p.alpha.to_string(),
            p.p_pcc_mw.to_string(),
            p.q_pcc_mvar.to_string(),
            p.converged.to_string(),
            p.iterations().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Validate, build the study, run the estimator and write the artifacts.
pub fn dispatch(command: Command, config: &RunConfig) -> Result<RunOutcome> {
    let net = resolve_network(config.network.as_deref())?;
    let settings = validate_settings(&config.settings, Some(&net))?;
    let net = apply_scenario(&net, &scenario(&settings.scenario_type)?)?;
    let store = match command {
        Command::TcpAdapt => Some(
            config
                .store
                .clone()
                .ok_or_else(|| Error::Config("tcp-adapt needs --store pointing at a tcp-save bundle".into()))?,
        ),
        _ => config.store.clone(),
    };
    let id = run_id(command, &net, &settings);
    let dir = config.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stem = format!("{command}-{id}");
    let artifacts = Artifacts {
        figure: dir.join(format!("{stem}.svg")),
        csv: dir.join(format!("{stem}.csv")),
        report: dir.join(format!("{stem}.txt")),
        store: None,
    };

    let offers = offers_from_settings(&net, &settings)?;
    let network_name = net.name.clone();
    let study = Study::new(net, offers, settings.constraints, PfOptions::default())?;
    let opts = TcpOptions {
        memory_budget: config.memory_budget.unwrap_or(DEFAULT_MEMORY_BUDGET),
        ..TcpOptions::default()
    };

    let mut artifacts = artifacts;
    let (fa, opf, mut report) = match command {
        Command::MonteCarlo => {
            let est = monte_carlo_pf(
                &study,
                settings.no_samples,
                settings.distribution,
                &settings.sampling,
                settings.seed,
                settings.dp,
                settings.dq,
            )?;
            (Some(est.fa()?), None, est.report)
        }
        Command::Exhaustive => {
            let est = exhaustive_pf(&study, config.exhaustive_cap.unwrap_or(DEFAULT_EXHAUSTIVE_CAP))?;
            (Some(est.fa()?), None, est.report)
        }
        Command::Opf => {
            let sweep = opf_boundary_sweep(&study, settings.opf_step)?;
            let report = sweep.report.clone();
            (None, Some(sweep), report)
        }
        Command::Tcp => {
            let run = tc_plus::<f64>(&study, &opts)?;
            (Some(run.fa), None, run.report)
        }
        Command::TcpMerge => {
            let run = tc_plus_merge::<f64>(&study, &opts, settings.max_fsps)?;
            (Some(run.fa), None, run.report)
        }
        Command::TcpSave => {
            let path = store.clone().unwrap_or_else(|| dir.join(format!("{stem}-tensors")));
            let (run, bundle) = save_tensors::<f64>(&study, &opts, settings.tt_epsilon, &path)?;
            bundle?;
            artifacts.store = Some(path);
            (Some(run.fa), None, run.report)
        }
        Command::TcpAdapt => {
            let run = tc_plus_adapt::<f64>(&study, store.as_deref().expect("checked above"))?;
            (Some(run.fa), None, run.report)
        }
    };

    match (&fa, &opf) {
        (Some(g), _) => {
            write_svg(&fa_svg(g)?, &artifacts.figure)?;
            write_csv(g, &artifacts.csv)?;
        }
        (None, Some(sweep)) => {
            write_svg(&polygon_svg(&sweep.polygon, study.base_pcc())?, &artifacts.figure)?;
            write_opf_csv(sweep, &artifacts.csv)?;
        }
        (None, None) => unreachable!("every estimator returns a grid or a boundary"),
    }
    report.push("run_id", &id);
    report.push("network", network_name);
    report.push("seed", settings.seed);
    report.push("config", serde_json::to_string(&settings).unwrap_or_default());
    report.push("figure", artifacts.figure.display());
    report.push("csv", artifacts.csv.display());
    report.write(&artifacts.report)?;
    Ok(RunOutcome { artifacts, report, fa, opf })
}
