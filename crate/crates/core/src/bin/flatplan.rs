use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flatplan::io::{run, Command, Flags};
use flatplan::plan::{Method, MultiMode};

#[derive(Parser)]
#[command(name = "flatplan", version, about = "Collision-free B-spline trajectories among polygonal obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan and write plan.json and trace.csv
    Plan(Args),
    /// Check a plan by dense sampling and write report.json
    Verify(Args),
    /// Draw the scenario and plans to plot.svg
    Plot(Args),
    /// Plan over several polygon sizes with both methods and write sweep.csv
    Sweep(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mip,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Simultaneous,
    Iterative,
}

#[derive(clap::Args)]
struct Args {
    /// Scenario JSON
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "mip")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "simultaneous")]
    mode: ModeArg,
    /// Index of the last control point; a comma list for `sweep`
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Spline order
    #[arg(long)]
    d: Option<usize>,
    /// Sampling step for traces and verification (s)
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Existing plan.json for `verify` and `plot`
    #[arg(long)]
    plan: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Plan(a) => (Command::Plan, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Plot(a) => (Command::Plot, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let flags = Flags {
        scenario: args.scenario,
        method: match args.method {
            MethodArg::Mip => Method::Mip,
            MethodArg::Exact => Method::Exact,
        },
        mode: match args.mode {
            ModeArg::Simultaneous => MultiMode::Simultaneous,
            ModeArg::Iterative => MultiMode::Iterative,
        },
        n: args.n,
        d: args.d,
        dt: args.dt,
        out: args.out,
        plan: args.plan,
    };
    match run(command, &flags) {
        Ok(summary) => {
            println!("{}", summary.message);
            for a in &summary.artifacts {
                println!("  {}", a.display());
            }
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
