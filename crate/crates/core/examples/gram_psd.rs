//! Monte-Carlo Gram matrix of a network family over random affine
//! parameters; prints the spectrum and the PSD verdict.
//!
//! cargo run --release --example gram_psd -- 8 0

use koopman_bounds::mc::{gram, random_affine_tuples, McConfig};
use koopman_bounds::suite::{gram_template, GRAM_SAMPLES};
use koopman_bounds::linalg::DomainBox;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(8), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let template = gram_template()?;
    let tuples = random_affine_tuples(n, 2, 2, 0.25, seed);
    let g = gram(&template, &tuples, &McConfig::uniform(GRAM_SAMPLES, seed, DomainBox::symmetric(2, 2.0)?))?;
    for row in &g.entries {
        println!("{}", row.iter().map(|z| format!("{:>8.4}{:+.4}i", z.re, z.im)).collect::<Vec<_>>().join(" "));
    }
    println!("eigenvalues {:.5?}", g.eigenvalues()?);
    println!("asymmetry {:.2} stderr, PSD at 1e-3 trace: {}", g.max_asymmetry_z, g.is_psd(1e-3)?);
    Ok(())
}
