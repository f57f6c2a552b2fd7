//! A rank-deficient layer: the restricted determinant and the kernel
//! volume replace the plain determinant factor.
//!
//! cargo run --release --example rank_deficient_bound

use koopman_bounds::activation::ActivationSpec;
use koopman_bounds::bounds::{bound, BoundConfig, Theorem};
use koopman_bounds::linalg::{det_factor_restricted, DomainBox, Matrix};
use koopman_bounds::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

fn main() -> koopman_bounds::Result<()> {
    let w1 = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]])?;
    let r = det_factor_restricted(&w1)?;
    println!("restricted det factor {:.6}, kernel dim {}", r.factor, r.kernel_basis.cols());

    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        DomainBox::symmetric(3, 1.0)?,
        vec![
            LayerSpec::dense(w1, vec![0.0; 3], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(3), vec![0.0; 3], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )?;
    for th in [Theorem::Thm2, Theorem::Thm3] {
        if let Err(e) = bound(&spec, th, &BoundConfig::new(100)) {
            println!("{}: {e}", th.tag());
        }
    }
    let r = bound(&spec, Theorem::Thm4, &BoundConfig::new(100))?;
    println!("\n{r}");
    println!("log10 bound = {:.4}", r.log10_value());
    Ok(())
}
