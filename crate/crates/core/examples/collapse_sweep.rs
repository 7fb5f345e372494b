//! Single-layer training under growing augmentation strength: the augmented
//! block's singular values vanish once the augmentation dominates.
//!
//! cargo run --release --example collapse_sweep

use dimcollapse::config::{Command, ExperimentConfig};
use dimcollapse::synthdata::AugmentationSpec;
use dimcollapse::{analysis, dynamics, models, numerics, Result};

fn main() -> Result<()> {
    let cfg = ExperimentConfig::defaults(Command::SimSingle);
    let stack = models::init_stack(cfg.data.dim, 1, &cfg.init, models::Nonlinearity::None)?;
    println!("{:>5}  {:>10} {:>10}  singular values (log10)", "k", "sigma_max", "rank@1e-3");
    for &k in &cfg.amplitudes {
        let aug = AugmentationSpec { amplitude: k, ..cfg.aug };
        let traj = dynamics::train(&stack, &cfg.data, &aug, &cfg.flow)?;
        let s = numerics::svd(&traj.final_stack.layers[0])?.s;
        let rank = analysis::effective_rank(&numerics::SpectrumReport::from_values(s.clone()), 1e-3)?;
        let logs: Vec<String> = s.iter().map(|v| format!("{:.1}", v.max(1e-16).log10())).collect();
        println!("{k:>5.1}  {:>10.3} {:>10}  {}", s[0], rank.effective_rank, logs.join(" "));
    }
    Ok(())
}
