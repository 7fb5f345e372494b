//! Analytic singular value and singular vector rates against one small Euler
//! step.
//!
//! cargo run --example singular_value_rates

use dimcollapse::models::{LinearStack, Nonlinearity};
use dimcollapse::synthdata::{self, AugmentationSpec, DataSpec};
use dimcollapse::{dynamics, infonce, numerics, rng, Result};

fn main() -> Result<()> {
    let d = 6;
    let data = DataSpec::new(d, 0.7)?;
    let aug = AugmentationSpec::trailing_block(d, 3, 0.4)?;
    let batch = synthdata::sample_batch(&data, &aug, 12, 1)?;
    let mut r = rng::stream(4, 0);
    let w1 = rng::normal_matrix(d, d, &mut r) / (d as f64).sqrt();
    let w2 = rng::normal_matrix(d, d, &mut r) / (d as f64).sqrt();
    let stack = LinearStack::new(vec![w1.clone(), w2.clone()], Nonlinearity::None)?;

    let vel = dynamics::velocity(&stack, &batch, false)?;
    let eta = 1e-7;
    let mut stepped = stack.clone();
    dynamics::euler_step(&mut stepped, &batch, eta, false)?;
    let rates = dynamics::singular_value_rates(&w1, &vel.w_dot[0])?;
    let before = numerics::svd(&w1)?.s;
    let after = numerics::svd(&stepped.layers[0])?.s;
    println!("{:>3} {:>14} {:>14}", "k", "analytic", "one step");
    for k in 0..d {
        println!("{k:>3} {:>14.6e} {:>14.6e}", rates[k], (after[k] - before[k]) / eta);
    }

    let vectors = dynamics::singular_vector_rates(&w1, &vel.w_dot[0])?;
    let f0 = numerics::svd(&w1)?;
    let f1 = numerics::svd(&stepped.layers[0])?;
    let fd_u = (&f1.u - &f0.u) / eta;
    println!("singular vector rate mismatch {:.2e}", numerics::rel_frobenius(&vectors.u_rate, &fd_u));

    let g = infonce::assemble_g(&vel.grads, &batch)?;
    let paired = dynamics::paired_rates_full(&w1, &w2, &g)?;
    let diff: f64 = paired.sigma1.iter().zip(&rates).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("paired-layer rates vs direct projection {diff:.2e}");
    Ok(())
}
