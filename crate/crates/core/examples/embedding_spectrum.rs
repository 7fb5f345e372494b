//! Log-spectrum and effective rank of an embedding dump (headerless CSV,
//! one vector per row). Without an argument, analyses a synthetic dump whose
//! vectors live in a 5-dimensional subspace of R^12.
//!
//! cargo run --example embedding_spectrum [dump.csv]

use std::path::PathBuf;

use dimcollapse::{analysis, experiments, numerics, rng, Result};

fn main() -> Result<()> {
    let rows = match std::env::args().nth(1) {
        Some(path) => experiments::read_embedding_dump(&PathBuf::from(path))?,
        None => {
            let mut r = rng::stream(5, 0);
            let basis = rng::normal_matrix(12, 5, &mut r);
            let codes = rng::normal_matrix(5, 500, &mut r);
            (&basis * codes).column_iter().map(|c| c.iter().copied().collect()).collect()
        }
    };
    let (_, spectrum) = numerics::covariance_spectrum_rows(&rows)?;
    for (i, (s, l)) in spectrum.singular_values.iter().zip(&spectrum.log10_values).enumerate() {
        println!("{i:>3} {s:>12.4e} {l:>8.2}");
    }
    let report = analysis::effective_rank(&spectrum, analysis::DEFAULT_EPSILON)?;
    println!("effective rank {} of {}", report.effective_rank, spectrum.source_dim);
    Ok(())
}
