use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rotctl::commands::{self, FitCircleOpts, SimulateOpts, SweepOpts};
use rotctl::scenario::BUILTIN;

#[derive(Parser)]
#[command(name = "rotctl", version, about = "PDE shape-control workbench for a planar pneumatic soft arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Bundled scenario name or path to a scenario TOML file
    scenario: String,

    /// Output directory (default: $ROTCTL_OUT_DIR, else ./rotctl_out)
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Override a scenario key, e.g. sim.stop_tol=0.15 or target.pressures[0]=2e4
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Observer noise seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write timeseries.csv, summary.json, final_shape.csv
    Simulate {
        #[command(flatten)]
        common: Common,

        /// Print the resolved scenario as TOML and exit
        #[arg(long)]
        dump_config: bool,

        /// Write every control tick's allocation problem to qp_ticks.jsonl
        #[arg(long)]
        dump_qp: bool,

        /// Per-tick log on stderr
        #[arg(short, long)]
        verbose: bool,

        /// Sleep so simulated time does not run ahead of wall-clock time
        #[arg(long)]
        realtime: bool,
    },

    /// Run a scenario for each value of one parameter, in parallel
    Sweep {
        #[command(flatten)]
        common: Common,

        /// Scenario key to vary, e.g. gains.k_theta
        #[arg(long, value_name = "KEY")]
        param: String,

        /// Comma-separated values
        #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
        values: Vec<f64>,

        /// Runs per value, with consecutive seeds
        #[arg(long, default_value_t = 1)]
        seeds: usize,

        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },

    /// Fit a circle to (y, z) points from a CSV file and estimate contractions
    FitCircle {
        points: PathBuf,

        /// Scenario supplying the actuator geometry
        #[arg(long)]
        scenario: Option<String>,
    },

    /// List bundled scenarios
    Scenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            common,
            dump_config,
            dump_qp,
            verbose,
            realtime,
        } => commands::simulate(&SimulateOpts {
            scenario: common.scenario,
            out: common.out,
            overrides: common.overrides,
            seed: common.seed,
            dump_config,
            dump_qp,
            verbose,
            realtime,
        }),
        Command::Sweep {
            common,
            param,
            values,
            seeds,
            jobs,
        } => commands::sweep(&SweepOpts {
            scenario: common.scenario,
            parameter: param,
            values,
            seeds,
            seed: common.seed,
            jobs,
            out: common.out,
            overrides: common.overrides,
        }),
        Command::FitCircle { points, scenario } => commands::fit_circle(&FitCircleOpts { points, scenario }),
        Command::Scenarios => {
            for (name, _) in BUILTIN {
                println!("{name}");
            }
            0
        }
    };
    ExitCode::from(code as u8)
}
