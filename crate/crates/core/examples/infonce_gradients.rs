//! Loss, analytic gradients, and the contrast matrix of one batch.
//!
//! cargo run --example infonce_gradients

use dimcollapse::infonce::{self, EmbeddingBatch};
use dimcollapse::synthdata::{self, AugmentationSpec, DataSpec};
use dimcollapse::{rng, Result};

fn main() -> Result<()> {
    let d = 8;
    let data = DataSpec::new(d, 1.0)?;
    let aug = AugmentationSpec::trailing_block(d, 4, 0.5)?;
    let batch = synthdata::sample_batch(&data, &aug, 16, 3)?;
    let w = rng::normal_matrix(d, d, &mut rng::stream(3, 0)) / (d as f64).sqrt();

    let emb = EmbeddingBatch::new(&w * &batch.x, &w * &batch.xp)?;
    let (loss, weights) = infonce::loss_and_weights(&emb)?;
    let grads = infonce::embedding_grads(&emb)?;
    let g = infonce::assemble_g(&grads, &batch)?;
    let dec = infonce::build_x(&batch, &weights)?;

    println!("loss                    {loss:.6}");
    println!("|dL/dz|, |dL/dz'|       {:.4e}, {:.4e}", grads.g_z.norm(), grads.g_zp.norm());
    println!("|G + W X| / |G|         {:.2e}", (&g + &w * &dec.x).norm() / g.norm());
    println!("direct vs covariance X  {:.2e}", dec.route_mismatch());
    println!(
        "eig range of X          [{:.3}, {:.3}]",
        dec.min_eigenvalue()?,
        dimcollapse::numerics::symmetric_eigen(&dec.x)?.max_value()
    );
    Ok(())
}
