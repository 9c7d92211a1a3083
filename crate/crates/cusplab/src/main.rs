use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cusplab::artifacts::read_json;
use cusplab::pipeline::REPORT_JSON;
use cusplab::report::render_text;
use cusplab::{parse_config, run_pipeline, Stage};
use cusplab_core::analysis::ComparisonReport;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "cusplab", version, about = "Classical and quantum experiments on a cusp billiard")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of classical,lyapunov,spectrum,analysis.
        #[arg(long, value_delimiter = ',', default_value = "classical,lyapunov,spectrum,analysis")]
        stages: Vec<Stage>,
    },
    /// Print the text report of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn threads_from_env() -> Result<usize, String> {
    match std::env::var("CUSPLAB_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| format!("CUSPLAB_THREADS must be a non-negative integer, got {v:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, stages } => {
            let threads = match threads_from_env() {
                Ok(n) => n,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
                eprintln!("warning: thread pool already configured: {e}");
            }
            match run_pipeline(&cfg, &stages) {
                Ok(out) => {
                    for f in &out.files {
                        println!("{}", out.output_dir.join(f).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_STAGE)
                }
            }
        }
        Command::Report { dir } => match read_json::<ComparisonReport>(&dir.join(REPORT_JSON)) {
            Ok(r) => {
                print!("{}", render_text(&r));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: cannot read {}: {e}; run the analysis stage first", dir.join(REPORT_JSON).display());
                ExitCode::from(EXIT_STAGE)
            }
        },
    }
}
