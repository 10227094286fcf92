use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use teamsim::presets::{ExperimentPreset, PresetName};
use teamsim::runner::run_preset;
use teamsim_core::topology::{protocol_message_count, ConsistencyProtocol};

/// Deterministic simulator of team-replicated message-passing programs with
/// asynchronous heartbeats and inter-team task-outcome sharing.
#[derive(Parser)]
#[command(name = "teamsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and write metrics/summary files.
    Run(RunArgs),
    /// Print the message counts of the classical mirror and parallel
    /// consistency protocols.
    Protocols(ProtocolArgs),
}

#[derive(Args)]
struct RunArgs {
    /// pingpong | miniapp_grid | variable_delay | divergence | saved_tasks |
    /// scaling | consistency
    preset: PresetName,
    /// Number of teams (replication factor). Overrides the TEAMS env var.
    #[arg(long, env = "TEAMS")]
    teams: Option<usize>,
    #[arg(long)]
    ranks_per_team: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Divide the paper's schedule times by this factor (1 = paper timings).
    #[arg(long, default_value_t = 10.0)]
    scale: f64,
    /// on | off
    #[arg(long)]
    sharing: Option<String>,
    /// Charge one core per rank for the communication-progression thread.
    #[arg(long)]
    fair_baseline: bool,
    /// Also write trace.jsonl (one event per line).
    #[arg(long)]
    trace: bool,
    /// Output directory.
    #[arg(long, default_value = "teamsim-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ProtocolArgs {
    /// Application message count.
    #[arg(long)]
    m: u64,
    /// Replication factor.
    #[arg(long)]
    r: u64,
    /// Consistency control messages.
    #[arg(long, default_value_t = 0)]
    c: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let mut preset = ExperimentPreset::new(args.preset);
            if let Some(teams) = args.teams {
                preset.teams = teams;
            }
            if let Some(r) = args.ranks_per_team {
                preset.ranks_per_team = r;
            }
            preset.seed = args.seed;
            preset.scale = args.scale;
            preset.fair_baseline = args.fair_baseline;
            preset.trace = args.trace;
            match args.sharing.as_deref() {
                Some("on") => preset.sharing = true,
                Some("off") => preset.sharing = false,
                Some(other) => {
                    eprintln!("error code=cli msg=\"--sharing must be on or off, got '{other}'\"");
                    return ExitCode::from(2);
                }
                None => {}
            }
            match run_preset(&preset, &args.out) {
                Ok(run) => {
                    for name in run.files.keys() {
                        println!("wrote {}", args.out.join(name).display());
                    }
                    println!(
                        "preset={} seed={} end_time={} all_finished={}",
                        preset.name, preset.seed, run.summary.end_time, run.summary.all_finished
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Protocols(a) => {
            println!(
                "mirror={} parallel={}",
                protocol_message_count(a.m, a.r, a.c, ConsistencyProtocol::Mirror),
                protocol_message_count(a.m, a.r, a.c, ConsistencyProtocol::Parallel)
            );
            ExitCode::SUCCESS
        }
    }
}
