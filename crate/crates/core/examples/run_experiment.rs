//! Runs a CLI command programmatically from a config string and lists the
//! files recorded in its manifest.
//!
//! cargo run --release --example run_experiment [command]

use dimcollapse::config::{self, Command};
use dimcollapse::{experiments, Result};

fn main() -> Result<()> {
    let command: Command = std::env::args().nth(1).as_deref().unwrap_or("depth-sweep").parse()?;
    let out = std::env::temp_dir().join(format!("dimcollapse-{command}"));
    let text = format!("output_dir = {}\nflow.steps = 2000\nprojector.steps = 100\n", out.display());
    let cfg = config::parse_for(command, &text)?;
    let manifest = experiments::run(&cfg)?;
    for f in &manifest.files {
        println!("{:>9} bytes  {}", f.bytes, f.path.display());
    }
    println!("{} finished in {:.1}s; outputs in {}", manifest.command, manifest.wall_clock_secs, out.display());
    Ok(())
}
