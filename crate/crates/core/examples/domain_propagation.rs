//! Interval boxes through a dense network, tight versus the norm-based
//! recipe.
//!
//! cargo run --release --example domain_propagation

use koopman_bounds::activation::ActivationSpec;
use koopman_bounds::linalg::{DomainBox, Matrix};
use koopman_bounds::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec};

fn show(title: &str, spec: &NetworkSpec) {
    println!("{title}");
    for (l, layer) in spec.layers.iter().enumerate() {
        println!("  layer {}: X~ lower {:.3?} upper {:.3?}", l + 1, layer.tilde().lower(), layer.tilde().upper());
        println!("           X  lower {:.3?} upper {:.3?}", layer.post().lower(), layer.post().upper());
    }
}

fn main() -> koopman_bounds::Result<()> {
    let w1 = Matrix::from_rows(&[vec![1.0, -0.5], vec![0.3, 2.0]])?;
    let w2 = Matrix::from_rows(&[vec![0.8, 0.1], vec![-0.4, 1.2]])?;
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        DomainBox::symmetric(2, 1.0)?,
        vec![
            LayerSpec::dense(w1, vec![0.1, -0.2], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(w2, vec![0.0, 0.3], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )?;
    show("tight", &spec);
    show("recipe", &spec.propagate_domains(DomainMode::NormRecipe)?);

    let x = [0.4, -0.9];
    let t = spec.trace(&x)?;
    println!("trace at {x:?}: post {:.4?}, inside boxes: {}", t.post, t.inside);
    println!("f(x) = {:.6}", spec.eval(&x)?.re);
    Ok(())
}
