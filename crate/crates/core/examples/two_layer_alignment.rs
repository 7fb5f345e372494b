//! Two linear layers from a near-balanced tiny init: adjacent singular bases
//! align (A = V2ᵀU1 → ±I) while W1W1ᵀ − W2ᵀW2 stays put.
//!
//! cargo run --release --example two_layer_alignment

use dimcollapse::config::{Command, ExperimentConfig};
use dimcollapse::{analysis, dynamics, models, Result};

fn main() -> Result<()> {
    let cfg = ExperimentConfig::defaults(Command::SimTwoLayer);
    let stack = models::init_stack(cfg.data.dim, 2, &cfg.init, models::Nonlinearity::None)?;
    let traj = dynamics::train(&stack, &cfg.data, &cfg.aug, &cfg.flow)?;
    println!("{:>7} {:>10} {:>10} {:>10}", "step", "loss", "min|diag|", "max|off|");
    for (step, a) in analysis::alignment_trace(&traj)?.iter().step_by(16) {
        println!(
            "{step:>7} {:>10.3e} {:>10.4} {:>10.4}",
            traj.losses[(*step).min(traj.losses.len() - 1)],
            a.abs_diag_min,
            a.offdiag_max
        );
    }
    let last = analysis::alignment_matrix(&traj.last().layers[0], &traj.last().layers[1])?;
    println!("final: min|diag| {:.4}, max|off| {:.4}", last.abs_diag_min, last.offdiag_max);
    Ok(())
}
