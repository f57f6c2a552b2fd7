//! Regularizer values used by the training experiments.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::linalg::{interval_affine_image, norm_inf, svd, Matrix};
use crate::network::{FinalKind, LayerKind, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerMode {
    /// Two dense layers, tanh, Gaussian-bump output.
    SyntheticR,
    /// Dense classifier: `r1`, `r2`, `r3`.
    DenseR123,
    /// LeNet-style tanh network: `r1`, `r2`, `r3`.
    LenetR123,
}

impl std::str::FromStr for RegularizerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic_r" => Ok(Self::SyntheticR),
            "dense_r123" => Ok(Self::DenseR123),
            "lenet_r123" => Ok(Self::LenetR123),
            other => Err(Error::Config(format!("unknown regularizer mode `{other}`"))),
        }
    }
}

fn mismatch(mode: &str, why: impl Into<String>) -> Error {
    Error::Config(format!("{mode}: {}", why.into()))
}

/// Linear map and bias of a layer, or `None` for pooling.
fn linear_part(layer: &LayerSpec) -> Option<(Matrix, Vec<f64>)> {
    match &layer.kind {
        LayerKind::Dense { weights, bias } => Some((weights.clone(), bias.clone())),
        LayerKind::Conv { .. } => {
            let m = layer.linear_matrix();
            let n = m.rows();
            Some((m, vec![0.0; n]))
        }
        LayerKind::Pool { .. } | LayerKind::Heisenberg { .. } => None,
    }
}

/// `|det(WᵀW)|^{1/4} = (∏ s_i)^{1/2}` over all `min(m, n)` singular values.
fn gram_det_quarter(w: &Matrix) -> Result<f64> {
    let s = svd(w)?;
    Ok((0.5 * s.singular_values.iter().map(|v| v.ln()).sum::<f64>()).exp())
}

/// `sup_y g(y)` over `[lo, hi]` on a 257-point grid plus endpoints.
fn interval_sup(lo: f64, hi: f64, g: impl Fn(f64) -> Option<f64>) -> f64 {
    (0..=256).map(|k| lo + (hi - lo) * k as f64 / 256.0).filter_map(&g).fold(f64::NEG_INFINITY, f64::max)
}

/// Radii of the recipe boxes: `R_l = ‖W_l‖ r_{l-1} + ‖b_l‖_∞`, with
/// `r_l` the sup-radius of `σ_l([-R_l, R_l])`.
fn recipe_radii(spec: &NetworkSpec, layers: &[(Matrix, Vec<f64>, Option<ActivationSpec>)]) -> Result<Vec<f64>> {
    let mut r = spec.input_domain.sup_radius();
    let mut out = Vec::with_capacity(layers.len());
    for (w, b, act) in layers {
        let big_r = w.operator_norm()? * r + norm_inf(b);
        out.push(big_r);
        r = match act {
            Some(a) => a.apply(-big_r).abs().max(a.apply(big_r).abs()),
            None => big_r,
        };
    }
    Ok(out)
}

/// Named regularizer values for the three experiments.
pub fn regularizer_values(spec: &NetworkSpec, mode: RegularizerMode) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    match mode {
        RegularizerMode::SyntheticR => {
            let name = "synthetic_r";
            let weights: Vec<(Matrix, Vec<f64>)> = spec.layers.iter().filter_map(linear_part).collect();
            if spec.depth() != 2 || weights.len() != 2 {
                return Err(mismatch(name, "needs exactly two dense layers"));
            }
            if spec.layers[0].activation != Some(ActivationSpec::Tanh) {
                return Err(mismatch(name, "first layer must use tanh"));
            }
            let FinalKind::GaussianBump { w3 } = spec.final_transform.kind else {
                return Err(mismatch(name, "final transform must be a gaussian bump"));
            };
            let (w1, b1) = &weights[0];
            // sup over tanh(W1 X0 + b1) of ∏ 1/(1 - x_i²) = ∏ cosh²(max |endpoint|)
            let pre = interval_affine_image(w1, b1, &spec.input_domain)?;
            let log_sup: f64 =
                pre.lower().iter().zip(pre.upper()).map(|(a, b)| 2.0 * a.abs().max(b.abs()).cosh().ln()).sum();
            let det = gram_det_quarter(w1)? * gram_det_quarter(&weights[1].0)?;
            out.insert("r".into(), w3.abs() * log_sup.exp() / det);
        }
        RegularizerMode::DenseR123 => {
            let name = "dense_r123";
            let layers: Vec<_> = spec
                .layers
                .iter()
                .map(|l| match &l.kind {
                    LayerKind::Dense { weights, bias } => Ok((weights.clone(), bias.clone(), l.activation.clone())),
                    _ => Err(mismatch(name, "needs dense layers only")),
                })
                .collect::<Result<_>>()?;
            if layers.len() < 2 || layers[0].2.is_none() || layers[1].2.is_none() {
                return Err(mismatch(name, "needs at least two dense layers with activations"));
            }
            let radii = recipe_radii(spec, &layers[..2])?;
            let mut r1 = 0.0;
            for ((_, _, act), big_r) in layers.iter().zip(&radii) {
                let a = act.as_ref().expect("checked");
                r1 += interval_sup(a.apply(-big_r), a.apply(*big_r), |y| a.inverse_derivative(y));
            }
            let mut r2 = 0.0;
            let mut r3 = 0.0;
            for (w, _, _) in &layers[..2] {
                r2 += 1.0 / (1.0 + gram_det_quarter(w)?);
                r3 += w.operator_norm()?;
            }
            out.insert("r1".into(), r1);
            out.insert("r2".into(), r2);
            out.insert("r3".into(), r3);
        }
        RegularizerMode::LenetR123 => {
            let name = "lenet_r123";
            let mut layers = Vec::new();
            for l in &spec.layers {
                match (linear_part(l), &l.activation) {
                    (Some((w, b)), act) => layers.push((w, b, act.clone())),
                    (None, None) => {}
                    (None, Some(_)) => return Err(mismatch(name, "pooling layers carry no activation")),
                }
                if matches!(l.activation, Some(ref a) if *a != ActivationSpec::Tanh) {
                    return Err(mismatch(name, "all activations must be tanh"));
                }
            }
            if layers.is_empty() {
                return Err(mismatch(name, "needs at least one dense or convolution layer"));
            }
            let radii = recipe_radii(spec, &layers)?;
            // taken verbatim: sup 1/(1 + 1 - x²) at the largest |x| = tanh(R)
            let r1: f64 = layers
                .iter()
                .zip(&radii)
                .filter(|((_, _, a), _)| a.is_some())
                .map(|(_, big_r)| {
                    let t = big_r.tanh();
                    1.0 / (2.0 - t * t)
                })
                .sum();
            // taken verbatim: 1/(0.01 + s_min), summed over the linear layers
            let mut r2 = 0.0;
            for (w, _, _) in &layers {
                r2 += 1.0 / (0.01 + svd(w)?.smallest());
            }
            let r3 = layers.last().expect("nonempty").0.operator_norm()?;
            out.insert("r1".into(), r1);
            out.insert("r2".into(), r2);
            out.insert("r3".into(), r3);
        }
    }
    if out.values().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { layer: 0, what: format!("non-finite {mode:?} regularizer") });
    }
    Ok(out)
}
