//! Gradient of the sub-vector loss on a residual encoder: exactly zero on
//! the unused coordinates of r, yet dense on the pre-residual activations h.
//!
//! cargo run --example directclr_probe

use dimcollapse::directclr::{self, SubvectorSpec};
use dimcollapse::models::ResidualEncoder;
use dimcollapse::synthdata::{self, AugmentationSpec, DataSpec};
use dimcollapse::Result;

fn main() -> Result<()> {
    let data = DataSpec::new(16, 1.0)?;
    let aug = AugmentationSpec::trailing_block(16, 8, 0.5)?;
    let batch = synthdata::sample_batch(&data, &aug, 32, 0)?;
    let encoder = ResidualEncoder::random(16, 32, 32, 0)?;
    let spec = SubvectorSpec { d0: 8 };
    let report = directclr::gradient_rank_probe(&encoder, &batch, &spec)?;

    println!("loss {:.4}", report.loss);
    println!("{:>5} {:>12} {:>12}", "coord", "|dL/dr|", "|dL/dh|");
    for j in 0..encoder.rep_dim() {
        println!("{j:>5} {:>12.3e} {:>12.3e}", report.grad_r.row(j).norm(), report.grad_h.row(j).norm());
    }
    println!(
        "beyond d0: max |dL/dr| = {:e}; nonzero dL/dh coordinates {:.0}%",
        report.grad_r_beyond_d0,
        100.0 * report.grad_h_nonzero_fraction
    );
    Ok(())
}
