//! Bounds for square invertible layers: the unitary case, the determinant
//! factor, and what a cap on that factor does.
//!
//! cargo run --release --example invertible_bound

use koopman_bounds::activation::ActivationSpec;
use koopman_bounds::bounds::{bound, BoundConfig, Theorem};
use koopman_bounds::linalg::{DomainBox, Matrix};
use koopman_bounds::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

fn spec(flavor: ModelFlavor, w1: Matrix, w2: Matrix) -> koopman_bounds::Result<NetworkSpec> {
    NetworkSpec::new(
        flavor,
        DomainBox::symmetric(2, 1.0)?,
        vec![
            LayerSpec::dense(w1, vec![0.1, -0.1], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(w2, vec![0.0, 0.2], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
}

fn main() -> koopman_bounds::Result<()> {
    let (c, s) = (0.6f64.cos(), 0.6f64.sin());
    let rot = Matrix::from_rows(&[vec![c, -s], vec![s, c]])?;
    let orth = spec(ModelFlavor::Plain, rot.clone(), rot.transpose())?;
    println!("{}\n", bound(&orth, Theorem::Thm1, &BoundConfig::new(100))?);

    let w = Matrix::from_rows(&[vec![2.0, 0.5], vec![-0.3, 1.5]])?;
    let affine = spec(ModelFlavor::AffineScaled, w.clone(), w.scale(0.5))?;
    println!("{}\n", bound(&affine, Theorem::Thm2, &BoundConfig::new(100))?);

    // the second layer has |det|^{-1/2} > 1 and trips a cap of 1
    match bound(&affine, Theorem::Thm2, &BoundConfig::new(100).with_cap(1.0)) {
        Ok(r) => println!("capped: {}", r.value),
        Err(e) => println!("capped: {e}"),
    }
    for n in [10, 100, 1000] {
        println!("S = {n:>4}: {:.6}", bound(&affine, Theorem::Thm2, &BoundConfig::new(n))?.value);
    }
    Ok(())
}
