use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dimcollapse::config::{self, Command, ExperimentConfig};
use dimcollapse::experiments;
use dimcollapse::Error;

/// Run a dimensional-collapse experiment and write its CSV traces.
#[derive(Debug, Parser)]
#[command(name = "dimcollapse", version)]
struct Cli {
    /// sim-single | sim-two-layer | depth-sweep | directclr-probe | spectrum
    command: String,

    /// Embedding dump for `spectrum` (headerless CSV, one vector per row).
    input: Option<PathBuf>,

    /// Config file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Extra `key=value` overrides applied after the config file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let command: Command = cli.command.parse()?;
    let mut text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => String::new(),
    };
    for o in &cli.overrides {
        text.push('\n');
        text.push_str(o);
    }
    if let Some(input) = &cli.input {
        if command != Command::Spectrum {
            return Err(Error::UnknownCommand(format!("{command} takes no positional input")));
        }
        text.push_str(&format!("\nspectrum.input = {}", input.display()));
    }
    let mut cfg = config::parse_for(command, &text)?;
    cfg.apply_env();
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = resolve(&cli).and_then(|cfg| {
        if cli.print_config {
            print!("{}", cfg.serialize());
            return Ok(());
        }
        let manifest = experiments::run(&cfg)?;
        println!(
            "{}: wrote {} files to {} in {:.1}s",
            manifest.command,
            manifest.files.len() + 1,
            manifest.output_dir.display(),
            manifest.wall_clock_secs
        );
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
