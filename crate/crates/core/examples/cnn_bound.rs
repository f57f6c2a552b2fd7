//! Circular convolutions and average pooling: `β` from the DFT spectrum and
//! the pooling kernel volume.
//!
//! cargo run --release --example cnn_bound

use koopman_bounds::activation::ActivationSpec;
use koopman_bounds::bounds::{bound, BoundConfig, Theorem};
use koopman_bounds::linalg::{circulant_spectrum, convolution_matrix, determinant, ConvKernel, DomainBox, SpectrumScaling};
use koopman_bounds::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

fn main() -> koopman_bounds::Result<()> {
    let k = ConvKernel::new(vec![4], vec![1.0, 0.3, 0.0, -0.2])?;
    let spectrum = circulant_spectrum(&k, SpectrumScaling::default())?;
    let beta: f64 = spectrum.iter().map(|z| z.norm()).product();
    let dense = determinant(&convolution_matrix(&k))?.abs();
    println!("|beta| from spectrum {beta:.12}, dense determinant {dense:.12}");

    let spec = NetworkSpec::new(
        ModelFlavor::Cnn,
        DomainBox::symmetric(4, 1.0)?,
        vec![
            LayerSpec::conv(k, Some(ActivationSpec::Tanh)),
            LayerSpec::pool(2),
            LayerSpec::conv(ConvKernel::delta(vec![4], 1.0)?, None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )?;
    println!("{}", bound(&spec, Theorem::CnnProp, &BoundConfig::new(100))?);
    Ok(())
}
