use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use odp_cert::cli::{
    certify_from_csv, check_pe, exit_code, run_network_sweep, run_offline_device, run_sigma_net, ScenarioConfig,
    ScenarioKind, StageResult, Outcome, EXIT_CONFIG,
};
use odp_cert::odp::Objective;

#[derive(Parser)]
#[command(name = "odp-cert", version, about = "Data-driven ODP certification and distributed stability checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// trace | minEig
    #[arg(long, global = true)]
    objective: Option<Objective>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate, average and certify a single device.
    CertifyDevice,
    /// Sweep the device indices of a network and classify each row.
    SweepNetwork,
    /// Certify a recorded trajectory CSV.
    CertifyCsv,
    /// Persistent-excitation check of a trajectory.
    CheckPe,
    /// Network coupling threshold only.
    SigmaNet,
}

fn run(cli: &Cli) -> StageResult<Outcome> {
    let stage = |error| odp_cert::cli::StageError { stage: "config", error };
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p).map_err(stage)?,
        None => ScenarioConfig::default(),
    };
    cfg.kind = match cli.command {
        Command::SweepNetwork | Command::SigmaNet => ScenarioKind::NetworkSweep,
        Command::CertifyCsv => ScenarioKind::CertifyFromCsv,
        Command::CertifyDevice | Command::CheckPe => cfg.kind,
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out_dir = cli.out.clone();
    }
    if let Some(o) = cli.objective {
        cfg.solver.objective = o;
    }
    let go = || match cli.command {
        Command::CertifyDevice => run_offline_device(&cfg),
        Command::SweepNetwork => run_network_sweep(&cfg),
        Command::CertifyCsv => certify_from_csv(&cfg),
        Command::CheckPe => check_pe(&cfg),
        Command::SigmaNet => run_sigma_net(&cfg),
    };
    match cli.workers {
        Some(0) => Err(stage(odp_cert::Error::Config("--workers must be at least 1".into()))),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| stage(odp_cert::Error::Config(e.to_string())))?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(o) => {
            print!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.error) as u8)
        }
    }
}
