use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tie_auction_cli::commands::Cli;
use tie_auction_cli::{run, CliError, EXIT_OK, EXIT_VERIFICATION};

fn write(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.options.out {
        Some(path) => std::fs::write(path, format!("{text}\n"))
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli).and_then(|report| {
        write(&cli, &report.to_json())?;
        Ok(report.passed)
    }) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFICATION,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
