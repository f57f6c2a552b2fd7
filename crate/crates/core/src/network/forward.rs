use num_complex::Complex64;

use super::{LayerKind, ModelFlavor, NetworkSpec};
use crate::error::{Error, Result};
use crate::linalg::{affine_apply, dot};

/// Every intermediate value of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Pre-activation value of each layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation value of each layer.
    pub post: Vec<Vec<f64>>,
    /// Accumulated Heisenberg phase (0 for other flavors).
    pub phase: f64,
    /// Whether the input and every intermediate lie in their declared boxes.
    pub inside: bool,
}

impl NetworkSpec {
    /// Linear (or shift) part of layer `l` applied to `z`.
    fn layer_pre(&self, l: usize, z: &[f64], phase: &mut f64) -> Result<Vec<f64>> {
        let layer = &self.layers[l];
        Ok(match &layer.kind {
            LayerKind::Dense { weights, bias } => {
                if self.model_flavor == ModelFlavor::AffineScaled {
                    let shifted: Vec<f64> = z.iter().zip(bias).map(|(v, b)| v + -b).collect();
                    affine_apply(weights, &vec![0.0; weights.rows()], &shifted)?
                } else {
                    affine_apply(weights, bias, z)?
                }
            }
            LayerKind::Conv { .. } | LayerKind::Pool { .. } => {
                let m = layer.linear.as_ref().expect("filled at construction");
                affine_apply(m, &vec![0.0; m.rows()], z)?
            }
            LayerKind::Heisenberg { a, b, c } => {
                *phase += c - 0.5 * dot(a, b) + dot(a, z);
                z.iter().zip(b).map(|(v, b)| v + -b).collect()
            }
        })
    }

    /// `f_l(z) = v∘W_L∘σ_{L-1}∘⋯∘W_{l+1}∘σ_l(z)` for a pre-activation `z`
    /// of layer `l` (0-based), ungated and without the affine output scale.
    /// Only the modulus is returned for Heisenberg models.
    pub fn eval_tail(&self, l: usize, z: &[f64]) -> Result<f64> {
        let act = |k: usize, v: Vec<f64>| match &self.layers[k].activation {
            Some(a) => a.apply_vec(&v),
            None => v,
        };
        let mut phase = 0.0;
        let mut cur = act(l, z.to_vec());
        for k in l + 1..self.layers.len() {
            cur = act(k, self.layer_pre(k, &cur, &mut phase)?);
        }
        let v = self.final_transform.eval(&cur);
        if !v.is_finite() {
            return Err(Error::Numeric { layer: self.layers.len() + 1, what: "non-finite final transform".into() });
        }
        Ok(v)
    }

    /// Runs the layers without the final transform.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input of length {} for a network on dimension {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut z = x.to_vec();
        let mut phase = 0.0;
        let mut inside = self.input_domain.contains(x);
        let mut pre_all = Vec::with_capacity(self.layers.len());
        let mut post_all = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let pre = self.layer_pre(l, &z, &mut phase)?;
            if pre.iter().any(|v| !v.is_finite()) || !phase.is_finite() {
                return Err(Error::Numeric { layer: l + 1, what: "non-finite pre-activation".into() });
            }
            inside &= layer.tilde().contains(&pre);
            let post = match &layer.activation {
                Some(a) => a.apply_vec(&pre),
                None => pre.clone(),
            };
            if post.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric { layer: l + 1, what: "non-finite activation".into() });
            }
            inside &= layer.post().contains(&post);
            z = post.clone();
            pre_all.push(pre);
            post_all.push(post);
        }
        Ok(Trace { pre: pre_all, post: post_all, phase, inside })
    }

    /// Evaluates the model at `x`. Inputs outside `X_0` are accepted with a
    /// warning; gated flavors return 0 there.
    pub fn forward(&self, x: &[f64]) -> Result<Complex64> {
        if !self.input_domain.contains(x) {
            log::warn!("forward: input lies outside the declared input domain");
        }
        self.eval(x)
    }

    /// [`forward`](Self::forward) without the out-of-domain warning, for use
    /// inside sampling loops.
    pub fn eval(&self, x: &[f64]) -> Result<Complex64> {
        let t = self.trace(x)?;
        if self.model_flavor.is_gated() && !t.inside {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let last = t.post.last().map_or(x, Vec::as_slice);
        let v = self.final_transform.eval(last) * self.output_scale;
        if !v.is_finite() {
            return Err(Error::Numeric { layer: self.layers.len() + 1, what: "non-finite final transform".into() });
        }
        Ok(if t.phase == 0.0 { Complex64::new(v, 0.0) } else { Complex64::from_polar(v, t.phase) })
    }

    /// [`eval`](Self::eval) with NaN standing in for a numeric failure.
    pub(crate) fn eval_or_nan(&self, x: &[f64]) -> Complex64 {
        self.eval(x).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }
}
