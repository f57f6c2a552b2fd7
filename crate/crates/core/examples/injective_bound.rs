//! Tall injective weights, with `α` taken as 1 or estimated by Monte Carlo.
//!
//! cargo run --release --example injective_bound

use koopman_bounds::activation::ActivationSpec;
use koopman_bounds::bounds::{bound, AlphaMode, BoundConfig, Theorem};
use koopman_bounds::linalg::{DomainBox, Matrix};
use koopman_bounds::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

fn main() -> koopman_bounds::Result<()> {
    let w1 = Matrix::from_rows(&[vec![1.0, 0.2], vec![-0.4, 0.9], vec![0.3, 0.3]])?;
    let w2 = Matrix::from_rows(&[vec![0.7, 0.0, 0.2], vec![0.1, 1.1, -0.3], vec![0.0, 0.4, 0.8], vec![0.5, 0.5, 0.5]])?;
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        DomainBox::symmetric(2, 1.0)?,
        vec![
            LayerSpec::dense(w1, vec![0.0, 0.1, -0.1], Some(ActivationSpec::Sigmoid)),
            LayerSpec::dense(w2, vec![0.0; 4], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )?;
    let conservative = bound(&spec, Theorem::Thm3, &BoundConfig::new(500))?;
    println!("{conservative}\n");
    let estimated = bound(&spec, Theorem::Thm3, &BoundConfig::new(500).with_alpha(AlphaMode::Estimate).with_seed(3))?;
    println!("{estimated}\n");
    for f in &estimated.per_layer {
        if let Some(a) = &f.alpha {
            println!("layer {} alpha estimate {:.4}", f.layer, a.ratio);
        }
    }
    Ok(())
}
