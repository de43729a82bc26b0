mod args;
mod commands;
mod failure;
mod output;
mod scenario;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(out, a),
        Command::Qc(a) => commands::qc(out, a),
        Command::Hardening(a) => commands::hardening(out, a),
        Command::Tails(a) => commands::tails(out, a),
        Command::Margin(a) => commands::margin(out, a),
        Command::Shadowing(a) => commands::shadowing(out, a),
        Command::Report(a) => commands::report(out, a),
    };
    match result {
        Ok(warnings) if cli.strict && !warnings.is_empty() => {
            eprintln!("{} warning(s) under --strict", warnings.len());
            ExitCode::from(4)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}
