use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use flowlab_cli::{run_command, Command, EXIT_CONFIG};
use flowlab_core::parse_scenario;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Flow,
    Spectrum,
    Verify,
    Kappa,
    Report,
}

/// Ricci flow scenarios and the functional inequalities along them.
#[derive(Debug, Parser)]
#[command(name = "flowlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `grid_n`.
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", args.scenario.display())),
    };
    let mut text = text;
    // command-line overrides replace the file's keys before validation
    let overrides: Vec<(&str, String)> = [
        ("seed", args.seed.map(|s| s.to_string())),
        ("grid_n", args.grid_n.map(|n| n.to_string())),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k, v)))
    .collect();
    if !overrides.is_empty() {
        text = text
            .lines()
            .map(|l| {
                let key = l.split('#').next().unwrap().split('=').next().unwrap().trim();
                if overrides.iter().any(|(k, _)| *k == key) {
                    String::new()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        for (k, v) in &overrides {
            text.push_str(&format!("\n{k} = {v}"));
        }
        text.push('\n');
    }
    let scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {e}", args.scenario.display())),
    };
    let out = args.out.unwrap_or_else(|| scenario.out_dir.clone());
    let command = match args.command {
        Cmd::Flow => Command::Flow,
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Verify => Command::Verify,
        Cmd::Kappa => Command::Kappa,
        Cmd::Report => Command::Report,
    };
    eprint!("{}", scenario.echo());
    let outcome = run_command(command, &scenario, &out);
    if outcome.code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.code as u8)
}
