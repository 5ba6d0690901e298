use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fa_core::run::{dispatch, Command, RunConfig};
use fa_core::settings::Settings;

/// Flexibility area estimation at the TSO-DSO interface.
#[derive(Parser)]
#[command(name = "fa", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo power flows over sampled FSP shifts.
    MonteCarlo(Common),
    /// Power flow for every combination of lattice shifts.
    Exhaustive(Common),
    /// Boundary tracing with four weighted PCC objectives.
    Opf(Common),
    /// Convolution estimate from single-FSP impacts.
    Tcp(Common),
    /// Convolution estimate with FSPs merged by electrical distance.
    TcpMerge(Common),
    /// Convolution estimate, storing compressed tensors for later adaptation.
    TcpSave(Common),
    /// Re-estimate from stored tensors under a new operating condition.
    TcpAdapt(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Network JSON file or built-in fixture name.
    #[arg(long)]
    network: Option<String>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "fsp-load", alias = "fsp-load-indices", value_delimiter = ',')]
    fsp_load_indices: Vec<usize>,
    #[arg(long = "fsp-dg", alias = "fsp-dg-indices", value_delimiter = ',')]
    fsp_dg_indices: Vec<usize>,
    #[arg(long)]
    scenario_type: Option<String>,
    #[arg(long)]
    max_curr_per: Option<f64>,
    #[arg(long)]
    max_volt_pu: Option<f64>,
    #[arg(long)]
    min_volt_pu: Option<f64>,
    #[arg(long)]
    dp: Option<f64>,
    #[arg(long)]
    dq: Option<f64>,
    #[arg(long)]
    no_samples: Option<usize>,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    opf_step: Option<f64>,
    #[arg(long)]
    flex_shape: Option<String>,
    #[arg(long, value_delimiter = ',')]
    non_linear_fsps: Vec<usize>,
    #[arg(long)]
    max_fsps: Option<usize>,
    #[arg(long)]
    tt_epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $FA_OUTPUT_DIR, then ./fa-output.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Tensor store for tcp-save / tcp-adapt.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Byte budget for one component tensor.
    #[arg(long)]
    memory_budget: Option<u64>,
    /// Most power flows the exhaustive search may run.
    #[arg(long)]
    exhaustive_cap: Option<u128>,
}

impl Common {
    fn into_config(self) -> Result<RunConfig, fa_core::Error> {
        let flags = RunConfig {
            network: self.network,
            settings: Settings {
                fsp_load_indices: self.fsp_load_indices,
                fsp_dg_indices: self.fsp_dg_indices,
                scenario_type: self.scenario_type,
                max_curr_per: self.max_curr_per,
                max_volt_pu: self.max_volt_pu,
                min_volt_pu: self.min_volt_pu,
                dp: self.dp,
                dq: self.dq,
                no_samples: self.no_samples,
                distribution: self.distribution,
                opf_step: self.opf_step,
                flex_shape: self.flex_shape,
                non_linear_fsps: self.non_linear_fsps,
                max_fsps: self.max_fsps,
                tt_epsilon: self.tt_epsilon,
                seed: self.seed,
                sampling: None,
            },
            output_dir: self.output_dir,
            store: self.store,
            memory_budget: self.memory_budget,
            exhaustive_cap: self.exhaustive_cap,
        };
        Ok(match &self.config {
            Some(path) => RunConfig::from_json_file(path)?.overlay(&flags),
            None => flags,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::MonteCarlo(c) => (Command::MonteCarlo, c),
        Cmd::Exhaustive(c) => (Command::Exhaustive, c),
        Cmd::Opf(c) => (Command::Opf, c),
        Cmd::Tcp(c) => (Command::Tcp, c),
        Cmd::TcpMerge(c) => (Command::TcpMerge, c),
        Cmd::TcpSave(c) => (Command::TcpSave, c),
        Cmd::TcpAdapt(c) => (Command::TcpAdapt, c),
    };
    let result = common.into_config().and_then(|config| dispatch(command, &config));
    match result {
        Ok(out) => {
            print!("{}", out.report);
            println!("wrote {}", out.artifacts.figure.display());
            println!("wrote {}", out.artifacts.csv.display());
            println!("wrote {}", out.artifacts.report.display());
            if let Some(store) = &out.artifacts.store {
                println!("wrote {}", store.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
