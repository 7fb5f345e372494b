//! Trains a linear backbone under each projector variant and compares the
//! backbone's representation spectrum.
//!
//! cargo run --release --example projector_variants

use dimcollapse::directclr::{self, ProjectorSpec, ProjectorTraining, ProjectorVariant};
use dimcollapse::synthdata::{self, AugmentationSpec, DataSpec};
use dimcollapse::{analysis, numerics, Result};

fn main() -> Result<()> {
    let data = DataSpec::new(16, 1.0)?;
    let aug = AugmentationSpec::trailing_block(16, 8, 0.5)?;
    let training = ProjectorTraining {
        rep_dim: 16,
        learning_rate: 0.5,
        steps: 1000,
        batch_size: 64,
        seed: 0,
    };
    let held_out = synthdata::sample_batch(&data, &aug, 2048, 7)?;
    println!("{:<24} {:>10} {:>10} {:>6}", "projector", "loss[0]", "loss[end]", "rank");
    for variant in ProjectorVariant::ALL {
        let spec = ProjectorSpec::new(variant, 8, 0);
        let run = directclr::train_with_projector(&spec, &data, &aug, &training)?;
        let (_, spectrum) = numerics::covariance_spectrum(&(&run.backbone * &held_out.x))?;
        let rank = analysis::effective_rank(&spectrum, 1e-3)?;
        println!(
            "{:<24} {:>10.4} {:>10.4} {:>6}",
            variant.name(),
            run.losses[0],
            run.losses.last().copied().unwrap_or(f64::NAN),
            rank.effective_rank
        );
    }
    Ok(())
}
