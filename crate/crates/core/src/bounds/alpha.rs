use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det_factor_injective, DomainBox, Matrix};
use crate::mc::{integrate, McConfig, McEstimate};

/// `α(h) = (∫_{W X} |h|² dμ_{R(W)} / ∫_{X̃} |h|²)^{1/2}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub numerator: McEstimate,
    pub denominator: McEstimate,
    pub ratio: f64,
}

/// Estimates `α` for `h` on the image of `prev_domain` under `x ↦ w x + c`.
///
/// The numerator is pulled back to `prev_domain`: for injective `w`,
/// `∫_{W X} |h|² dμ_{R(W)} = |det(wᵀw)|^{1/2} ∫_X |h(w x + c)|² dx`. Both
/// integrals use uniform sampling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_alpha<H>(
    h: H,
    w: &Matrix,
    c: &[f64],
    prev_domain: &DomainBox,
    domain_tilde: &DomainBox,
    samples: usize,
    seed: u64,
    stream: &str,
) -> Result<AlphaEstimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    if w.cols() != prev_domain.dim() || w.rows() != domain_tilde.dim() || c.len() != w.rows() {
        return Err(Error::Dimension(format!(
            "alpha: weight {}x{} between boxes of dimension {} and {}",
            w.rows(),
            w.cols(),
            prev_domain.dim(),
            domain_tilde.dim()
        )));
    }
    // |det(wᵀw)|^{1/2} = factor^{-2}
    let jac = det_factor_injective(w)?.powi(-2);
    let num_cfg = McConfig::uniform(samples, seed, prev_domain.clone());
    let pulled = integrate(&num_cfg, &format!("{stream}/numerator"), |x| {
        let y: Vec<f64> = w.matvec(x).expect("dims checked").iter().zip(c).map(|(a, b)| a + b).collect();
        h(&y).powi(2)
    })?;
    let numerator = McEstimate { value: jac * pulled.value, stderr: jac * pulled.stderr, ..pulled };
    let den_cfg = McConfig::uniform(samples, seed, domain_tilde.clone());
    let denominator = integrate(&den_cfg, &format!("{stream}/denominator"), |y| h(y).powi(2))?;
    if !(denominator.value > 0.0) {
        return Err(Error::Degenerate(format!("{stream}: ∫|h|² over X̃ is not positive")));
    }
    Ok(AlphaEstimate { numerator, denominator, ratio: (numerator.value.max(0.0) / denominator.value).sqrt() })
}
