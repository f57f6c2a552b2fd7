//! The dense glyph classifier, regularized arm against the unregularized
//! control.
//!
//! cargo run --release --example dense_classifier -- 30

use koopman_bounds::train::{run_classifier_arms, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(30), |s| s.parse())?;
    let cfg = TrainConfig { epochs, ..TrainConfig::dense_classifier() };
    let (reg, ctl) = run_classifier_arms(&cfg)?;
    println!("epoch  acc(reg)  acc(ctl)  r(reg)    r(ctl)    log10 bound(reg)");
    for (a, b) in reg.rows.iter().zip(&ctl.rows) {
        println!(
            "{:>5}  {:.4}    {:.4}    {:<8.3}  {:<8.3}  {:.1}",
            a.epoch,
            a.test_accuracy.unwrap_or(f64::NAN),
            b.test_accuracy.unwrap_or(f64::NAN),
            a.regularizer,
            b.regularizer,
            a.bound
        );
    }
    Ok(())
}
