use clap::Parser;

use gatebias_cli::{args::Cli, commands, exit_code};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = commands::dispatch(&cli.command) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
