//! Euler drift of the conserved gap W1W1ᵀ − W2ᵀW2 is first order in the step.
//!
//! cargo run --release --example conservation

use dimcollapse::dynamics::FlowConfig;
use dimcollapse::models::{InitMode, InitSpec, Nonlinearity};
use dimcollapse::synthdata::{AugmentationSpec, DataSpec};
use dimcollapse::{analysis, dynamics, models, Result};

fn main() -> Result<()> {
    let data = DataSpec::new(16, 0.1)?;
    let aug = AugmentationSpec::trailing_block(16, 8, 0.0)?;
    let init = InitSpec {
        seed: 0,
        sv_min: 1.0,
        sv_max: 2.0,
        mode: InitMode::DistinctSingularValues,
    };
    let stack = models::init_stack(16, 2, &init, Nonlinearity::None)?;
    for (lr, steps) in [(2e-3, 5_000), (1e-3, 10_000), (5e-4, 20_000)] {
        let flow = FlowConfig {
            learning_rate: lr,
            steps,
            batch_size: 16,
            resample: true,
            record_every: 100,
            seed: 0,
            normalize: false,
        };
        let traj = dynamics::train(&stack, &data, &aug, &flow)?;
        let gap = analysis::conserved_gap(&traj)?;
        println!(
            "lr {lr:.0e}: loss {:.3} -> {:.3}, max drift {:.3e} ({:.2e} relative)",
            traj.losses[0],
            traj.losses[steps - 1],
            gap.max_drift(),
            gap.max_relative_drift()
        );
    }
    Ok(())
}
