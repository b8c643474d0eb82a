use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cv2x_sim::runner::{execute, RunManifest};

#[derive(Parser)]
#[command(name = "cv2x-sim", version, about = "C-V2X mode 4 system-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its result tables.
    Run {
        /// Scenario config (TOML).
        config: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Output directory; results go to <out>/<label>/.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Run label, e.g. 26-20. Defaults to <one-shot>-<bandwidth>.
        #[arg(long)]
        label: Option<String>,
        /// Label of a previous run in <out> to compare the IPG/IA tails against.
        #[arg(long)]
        baseline: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            label,
            baseline,
        } => {
            let manifest = RunManifest {
                config_path: config,
                seeds,
                out_dir: out,
                label,
                baseline,
            };
            match execute(&manifest) {
                Ok(report) => {
                    if let Some(rows) = report.comparison {
                        for r in rows.iter().filter(|r| r.metric == "ipg") {
                            let v = r.tail_improvement.map_or("undefined".to_string(), |v| format!("{v:.4}"));
                            println!("{} {} m: tail improvement {v}", r.metric, r.bin_m);
                        }
                    }
                    println!("{}", report.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
