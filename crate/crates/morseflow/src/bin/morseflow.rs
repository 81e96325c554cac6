//! Thin CLI over the morseflow library.
//!
//! `run <config>` executes the pipeline and writes report.json (plus
//! flowlines.csv with --export-flowlines) to the output directory,
//! `check <config>` runs the same pipeline without writing anything, and
//! `tables` prints the shipped stable-stem / Im(J) table.
//!
//! Exit codes: 0 all requested checks passed (or tables printed), 1 a
//! check failed, 2 configuration or runtime error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use morseflow::pipeline::{run_pipeline, write_flowlines_csv};
use morseflow::RunConfig;

#[derive(Parser)]
#[command(name = "morseflow", about = "Morse complexes on implicit manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and exports
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write connecting-orbit polylines as flowlines.csv
    #[arg(long)]
    export_flowlines: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// JSON run configuration
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline and write the report
    Run(RunArgs),
    /// Execute the pipeline without writing any files
    Check(CheckArgs),
    /// Print the stable-stem / Im(J) tables
    Tables,
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_summary(report: &morseflow::Report) {
    for c in &report.summary.checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        println!("[{mark}] {}: {}", c.check, c.detail);
    }
    for o in &report.obstructions {
        println!(
            "obstruction k={} delta={:?} delta'={:?} -> {:?}",
            o.k, o.delta, o.delta_prime, o.verdict
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Tables => {
            print!("{}", morseflow::stems::render_table());
            ExitCode::SUCCESS
        }
        Command::Check(args) => {
            let cfg = match load_config(&args.config, args.seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_pipeline(&cfg, false) {
                Ok(out) => {
                    print_summary(&out.report);
                    if out.report.summary.all_passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Run(args) => {
            let cfg = match load_config(&args.config, args.seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_pipeline(&cfg, args.export_flowlines) {
                Ok(out) => {
                    if let Err(e) = fs::create_dir_all(&args.out) {
                        eprintln!("error: cannot create {}: {e}", args.out.display());
                        return ExitCode::from(2);
                    }
                    let report_path = args.out.join("report.json");
                    if let Err(e) = fs::write(&report_path, out.report.to_json()) {
                        eprintln!("error: cannot write {}: {e}", report_path.display());
                        return ExitCode::from(2);
                    }
                    if args.export_flowlines {
                        let csv_path = args.out.join("flowlines.csv");
                        let run_id = format!("run-{}", out.report.seed);
                        let mut buf = Vec::new();
                        if let Err(e) =
                            write_flowlines_csv(&run_id, &out.flowlines, &mut buf)
                                .and_then(|()| fs::write(&csv_path, buf))
                        {
                            eprintln!("error: cannot write {}: {e}", csv_path.display());
                            return ExitCode::from(2);
                        }
                    }
                    print_summary(&out.report);
                    println!("report: {}", report_path.display());
                    if out.report.summary.all_passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
