//! Reverse-mode gradients of both training objectives against central
//! differences.
//!
//! cargo run --release --example gradient_check

use koopman_bounds::train::{grad_check_experiment, TrainConfig};

fn main() -> koopman_bounds::Result<()> {
    for (name, cfg, batch) in [
        ("synthetic", TrainConfig::synthetic(), 64),
        ("classifier", TrainConfig::dense_classifier(), 16),
    ] {
        for steps in [0, 10] {
            let r = grad_check_experiment(&cfg, steps, batch, 1e-5, 60)?;
            println!(
                "{name:<10} after {steps:>2} steps: max rel error {:.2e} over {} coords ({} at kinks)",
                r.max_rel_error, r.checked, r.kinks
            );
        }
    }
    Ok(())
}
