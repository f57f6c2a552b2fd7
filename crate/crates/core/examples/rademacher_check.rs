//! Empirical Rademacher complexity of a small finite class, exact
//! enumeration against random sign draws.
//!
//! cargo run --release --example rademacher_check

use koopman_bounds::mc::{empirical_rademacher, rademacher_from_values, RademacherMode};
use rand::Rng;

fn main() -> koopman_bounds::Result<()> {
    let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0 - 0.5]).collect();
    // x -> sin(θx) for random θ
    let sampler = |g: &mut rand_chacha::ChaCha8Rng, xs: &[Vec<f64>]| {
        let theta: f64 = g.random_range(-4.0..4.0);
        Ok(xs.iter().map(|x| (theta * x[0]).sin()).collect())
    };
    let mc = empirical_rademacher(sampler, &inputs, 4000, 200, RademacherMode::McSearch, 1)?;
    let values = koopman_bounds::mc::candidate_values(&sampler, &inputs, 200, 1)?;
    let exact = rademacher_from_values(&values, 0, RademacherMode::ExactEnumeration, 1)?;
    println!("mc search {:.5} ± {:.5}, exact {:.5}", mc.value, mc.stderr, exact.value);
    Ok(())
}
