use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ngd_cli::builtins;
use ngd_cli::error::{CliError, Result};
use ngd_cli::runner::{execute, RunOptions, RunSummary};

#[derive(Parser)]
#[command(name = "ngd", version, about = "Negative-group-delay circuit scenarios")]
struct Cli {
    /// Directory for CSV, SVG and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Multiplies every rel_tol and abs_tol in the scenario.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a TOML file.
    Run { scenario: String },
    /// List built-in scenarios.
    List,
    /// Run a scenario once per value of a numeric parameter.
    Sweep {
        scenario: String,
        /// Dotted path, e.g. `blocks.amp.dc_gain`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

fn print_summary(s: &RunSummary) {
    println!("scenario {} ({:.2} s)", s.scenario, s.duration_s);
    for step in &s.steps {
        println!("  {} [{}]", step.id, step.kind);
        for (k, v) in &step.metrics {
            println!("    {k} = {v:.6e}");
        }
        for e in &step.expectations {
            println!("    {} {}", if e.pass { "ok  " } else { "FAIL" }, e.metric);
        }
    }
    println!("{}", if s.passed { "all expectations met" } else { "expectations failed" });
}

fn run(cli: Cli) -> Result<bool> {
    let options = |out: bool| RunOptions {
        out_dir: out.then(|| cli.out_dir.clone()),
        tolerance_scale: cli.tolerance_scale,
    };
    match &cli.command {
        Command::List => {
            for (name, description) in builtins::list_scenarios()? {
                println!("{name:24} {description}");
            }
            Ok(true)
        }
        Command::Run { scenario } => {
            let cfg = builtins::load(scenario)?;
            let exec = execute(&cfg, &options(true))?;
            print_summary(&exec.summary);
            Ok(exec.summary.passed)
        }
        Command::Sweep { scenario, param, values } => {
            let cfg = builtins::load(scenario)?;
            let table = ngd_cli::sweep(&cfg, param, values, &options(false))?;
            let csv = table.to_csv()?;
            let path = cli.out_dir.join(format!("{}_sweep.csv", cfg.name));
            std::fs::create_dir_all(&cli.out_dir)
                .and_then(|_| std::fs::write(&path, &csv))
                .map_err(|source| CliError::Io { context: format!("writing {}", path.display()), source })?;
            print!("{csv}");
            Ok(table.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
