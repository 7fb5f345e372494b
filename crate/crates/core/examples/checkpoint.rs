//! Saves a trained stack as per-layer CSVs and reloads it.
//!
//! cargo run --example checkpoint

use dimcollapse::config::{Command, ExperimentConfig};
use dimcollapse::dynamics::FlowConfig;
use dimcollapse::{dynamics, models, Result};

fn main() -> Result<()> {
    let cfg = ExperimentConfig::defaults(Command::SimSingle);
    let stack = models::init_stack(cfg.data.dim, 2, &cfg.init, models::Nonlinearity::Relu)?;
    let flow = FlowConfig { steps: 200, ..cfg.flow };
    let trained = dynamics::train(&stack, &cfg.data, &cfg.aug, &flow)?.final_stack;

    let dir = std::env::temp_dir().join("dimcollapse-checkpoint");
    let files = models::write_checkpoint(&trained, &dir, cfg.seed)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    let (loaded, seed) = models::read_checkpoint(&dir)?;
    println!("reloaded depth {} ({}), seed {seed}, identical: {}", loaded.depth(), loaded.nonlinearity, loaded == trained);
    Ok(())
}
