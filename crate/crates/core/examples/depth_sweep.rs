//! Embedding collapse against depth, for linear and rectified stacks under
//! weak augmentation.
//!
//! cargo run --release --example depth_sweep

use dimcollapse::config::{Command, ExperimentConfig};
use dimcollapse::{analysis, dynamics, models, synthdata, Result};

fn main() -> Result<()> {
    let cfg = ExperimentConfig::defaults(Command::DepthSweep);
    let held_out = synthdata::sample_batch(&cfg.data, &cfg.aug, 2048, 99)?;
    for &nl in &cfg.nonlinearities {
        for &depth in &cfg.depths {
            let stack = models::init_stack(cfg.data.dim, depth, &cfg.init, nl)?;
            let traj = dynamics::train(&stack, &cfg.data, &cfg.aug, &cfg.flow)?;
            let spectrum = analysis::embedding_spectrum(&traj.final_stack, &held_out.x)?;
            let report = analysis::effective_rank(&spectrum, cfg.epsilon)?;
            println!("{nl:>4} L={depth}: {:>2} of {} collapsed", report.collapsed(), spectrum.singular_values.len());
        }
    }
    Ok(())
}
