mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FileConfig, SeqCommand};
use output::{config_err, CliResult};

fn load_config(cli: &Cli) -> CliResult<FileConfig> {
    let Some(path) = &cli.config else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> CliResult<()> {
    let file = load_config(cli)?;
    match &cli.command {
        Command::Seq(SeqCommand::Gen(a)) => commands::seq_gen(a, &file),
        Command::Seq(SeqCommand::Classify(a)) => commands::seq_classify(a, &file),
        Command::Kernel(a) => commands::kernel(a, &file),
        Command::Lemma1(a) => commands::lemma1(a, &file),
        Command::Witness(a) => commands::witness(a, &file),
        Command::Phi(a) => commands::phi(a, &file),
        Command::Relocate(a) => commands::relocate(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("walshdiv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
