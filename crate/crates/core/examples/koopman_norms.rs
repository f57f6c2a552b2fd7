//! Certified Koopman-norm bounds for each activation on a box, next to the
//! closed forms they should match.
//!
//! cargo run --release --example koopman_norms

use koopman_bounds::activation::{koopman_norm, ActivationSpec};
use koopman_bounds::linalg::DomainBox;

fn main() -> koopman_bounds::Result<()> {
    let acts = [
        ActivationSpec::Tanh,
        ActivationSpec::Sigmoid,
        ActivationSpec::LeakyRelu { slope: 0.1 },
        ActivationSpec::LeakyRelu { slope: 2.0 },
        ActivationSpec::smooth_leaky_relu(),
    ];
    println!("{:<20} {:>3} {:>6} {:>14}", "activation", "d", "b", "bound");
    for act in acts {
        for d in 1..=3 {
            for b in [0.5, 1.0, 2.0] {
                let domain = DomainBox::symmetric(d, b)?;
                let n = koopman_norm(&act, &domain)?;
                println!("{:<20} {d:>3} {b:>6} {:>14.6}", act.name(), n.value);
            }
        }
    }
    // tanh on [-b, b]^d is cosh(b)^d
    let b: f64 = 1.0;
    let n = koopman_norm(&ActivationSpec::Tanh, &DomainBox::symmetric(2, b)?)?;
    println!("tanh d=2 b=1: {:.12} vs cosh(1)^2 = {:.12}", n.value, b.cosh().powi(2));
    Ok(())
}
