//! With X frozen, W(t) = W(0) exp(X t): directions with negative eigenvalues
//! of X shrink exponentially.
//!
//! cargo run --example closed_form_flow

use dimcollapse::dynamics;
use dimcollapse::numerics::{self, diag};
use dimcollapse::{rng, Result};

fn main() -> Result<()> {
    let d = 4;
    let q = rng::random_orthogonal(d, &mut rng::stream(1, 0));
    let x = &q * diag(&[-0.5, -0.1, 0.2, 0.3]) * q.transpose();
    let x = (&x + x.transpose()) * 0.5;
    let w0 = rng::random_orthogonal(d, &mut rng::stream(2, 0));

    println!("{:>5} {:>12} {:>12}", "t", "sigma_min", "euler err");
    for t in [0.0, 2.5, 5.0, 7.5, 10.0] {
        let closed = dynamics::closed_form_flow(&w0, &x, t)?;
        let steps = (t / 1e-3).round() as usize;
        let euler = dynamics::frozen_flow_euler(&w0, &x, 1e-3, steps)?;
        let s = numerics::svd(&closed)?.s;
        println!("{t:>5.1} {:>12.4e} {:>12.2e}", s[d - 1], numerics::rel_frobenius(&euler, &closed));
    }
    println!("exp(-0.5 * 10) = {:.4e}", (-5f64).exp());
    Ok(())
}
