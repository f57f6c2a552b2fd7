//! Declarative network specifications, domain propagation and forward
//! evaluation.
//!
//! A network is an ordered list of layers, each a linear (or shift) map
//! followed by an optional elementwise activation, and a final transform `v`.
//! Every layer carries two boxes: `domain_tilde` encloses the pre-activation
//! values and `domain` the post-activation values. They are filled at
//! construction, either from declared boxes or by propagation.

mod file;
mod final_transform;
mod forward;
mod regularizer;

pub use file::{read_kbw, write_kbw, SpecFile};
pub use final_transform::{v_norm, FinalKind, FinalTransform, NormMode};
pub use forward::Trace;
pub use regularizer::{regularized_forward, Normalization, Regularizer};

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::linalg::{convolution_matrix, interval_affine_image, ConvKernel, DomainBox, Matrix, SpectrumScaling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFlavor {
    /// `v(W_L σ(⋯ σ(W_1 x + b_1)⋯) + b_L)`
    #[default]
    Plain,
    /// Layers act as `W(x - b)`; output scaled by `∏ |det W_l|^{1/2}`.
    AffineScaled,
    /// Heisenberg-group layers with complex phase factors.
    Heisenberg,
    /// Convolution and square average pooling, gated by the declared boxes.
    Cnn,
    /// Dense layers gated by the declared boxes.
    General,
}

impl ModelFlavor {
    pub fn is_gated(self) -> bool {
        matches!(self, ModelFlavor::Cnn | ModelFlavor::General)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    /// Exact interval image of each layer.
    #[default]
    Tight,
    /// `(‖W_l‖ r_{l-1} + ‖b_l‖_∞)[-1,1]^{d_l}` with `r` the sup-radius of the
    /// previous box, inflated to the tight box wherever it fails to contain it.
    #[serde(alias = "paper_recipe")]
    NormRecipe,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense { weights: Matrix, bias: Vec<f64> },
    Conv { kernel: ConvKernel, scaling: SpectrumScaling },
    Pool { pool_size: usize },
    Heisenberg { a: Vec<f64>, b: Vec<f64>, c: f64 },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool { .. } => "pool",
            LayerKind::Heisenberg { .. } => "heisenberg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Option<ActivationSpec>,
    /// Declared or propagated `X̃_l`.
    pub domain_tilde: Option<DomainBox>,
    /// Declared or propagated `X_l`.
    pub domain: Option<DomainBox>,
    linear: Option<Matrix>,
}

impl LayerSpec {
    fn with_kind(kind: LayerKind, activation: Option<ActivationSpec>) -> Self {
        Self { kind, activation, domain_tilde: None, domain: None, linear: None }
    }

    pub fn dense(weights: Matrix, bias: Vec<f64>, activation: Option<ActivationSpec>) -> Self {
        Self::with_kind(LayerKind::Dense { weights, bias }, activation)
    }

    pub fn conv(kernel: ConvKernel, activation: Option<ActivationSpec>) -> Self {
        Self::with_kind(LayerKind::Conv { kernel, scaling: SpectrumScaling::Dft }, activation)
    }

    pub fn pool(pool_size: usize) -> Self {
        Self::with_kind(LayerKind::Pool { pool_size }, None)
    }

    pub fn heisenberg(a: Vec<f64>, b: Vec<f64>, c: f64, activation: Option<ActivationSpec>) -> Self {
        Self::with_kind(LayerKind::Heisenberg { a, b, c }, activation)
    }

    /// Declares the boxes instead of propagating them.
    pub fn with_domains(mut self, domain_tilde: DomainBox, domain: DomainBox) -> Self {
        self.domain_tilde = Some(domain_tilde);
        self.domain = Some(domain);
        self
    }

    pub fn weights(&self) -> Option<&Matrix> {
        match &self.kind {
            LayerKind::Dense { weights, .. } => Some(weights),
            _ => self.linear.as_ref(),
        }
    }

    /// The linear part as a dense matrix (identity for Heisenberg shifts).
    pub fn linear_matrix(&self) -> Matrix {
        match &self.kind {
            LayerKind::Dense { weights, .. } => weights.clone(),
            LayerKind::Heisenberg { a, .. } => Matrix::identity(a.len()),
            _ => self.linear.clone().expect("filled at construction"),
        }
    }

    pub fn tilde(&self) -> &DomainBox {
        self.domain_tilde.as_ref().expect("filled at construction")
    }

    pub fn post(&self) -> &DomainBox {
        self.domain.as_ref().expect("filled at construction")
    }

    fn input_dim(&self) -> Option<usize> {
        match &self.kind {
            LayerKind::Dense { weights, .. } => Some(weights.cols()),
            LayerKind::Conv { kernel, .. } => Some(kernel.len()),
            LayerKind::Pool { .. } => None,
            LayerKind::Heisenberg { a, .. } => Some(a.len()),
        }
    }

    fn output_dim(&self, input: usize) -> usize {
        match &self.kind {
            LayerKind::Dense { weights, .. } => weights.rows(),
            _ => input,
        }
    }
}

/// Square upsampled average pooling: consecutive groups of `m` coordinates
/// are replaced by their mean. `(P)_{ij} = 1/m` when `i` and `j` share a group.
pub fn pool_matrix(dim: usize, m: usize) -> Result<Matrix> {
    if m == 0 || dim % m != 0 {
        return Err(Error::Dimension(format!("pool size {m} does not divide dimension {dim}")));
    }
    let mut p = Matrix::zeros(dim, dim);
    for i in 0..dim {
        let g = i / m;
        for j in g * m..(g + 1) * m {
            p[(i, j)] = 1.0 / m as f64;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub model_flavor: ModelFlavor,
    pub input_domain: DomainBox,
    pub layers: Vec<LayerSpec>,
    pub final_transform: FinalTransform,
    pub domain_mode: DomainMode,
    /// `∏|det W_l|^{1/2}` for the affine flavor, 1 otherwise.
    output_scale: f64,
}

impl NetworkSpec {
    /// Validates the architecture and fills every layer's boxes.
    pub fn new(
        model_flavor: ModelFlavor,
        input_domain: DomainBox,
        layers: Vec<LayerSpec>,
        final_transform: FinalTransform,
        domain_mode: DomainMode,
    ) -> Result<Self> {
        let mut spec = Self { model_flavor, input_domain, layers, final_transform, domain_mode, output_scale: 1.0 };
        spec.validate()?;
        spec.fill_domains()?;
        spec.final_transform.validate(spec.output_dim())?;
        if model_flavor == ModelFlavor::AffineScaled {
            let mut log_scale = 0.0;
            for layer in &spec.layers {
                // a singular layer gives scale 0; the bound engine rejects it
                let det = crate::linalg::determinant(layer.weights().expect("dense"))?;
                log_scale += 0.5 * det.abs().ln();
            }
            spec.output_scale = log_scale.exp();
        }
        Ok(spec)
    }

    /// Same architecture and weights with all boxes recomputed in `mode`.
    pub fn propagate_domains(&self, mode: DomainMode) -> Result<NetworkSpec> {
        let layers = self.layers.iter().map(|l| LayerSpec { domain_tilde: None, domain: None, ..l.clone() }).collect();
        NetworkSpec::new(self.model_flavor, self.input_domain.clone(), layers, self.final_transform.clone(), mode)
    }

    /// Same template with the dense weights and biases replaced in layer
    /// order. Boxes are re-propagated in the template's mode.
    pub fn with_parameters(&self, params: &[(Matrix, Vec<f64>)]) -> Result<NetworkSpec> {
        let mut it = params.iter();
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut l = LayerSpec { domain_tilde: None, domain: None, ..l.clone() };
            if let LayerKind::Dense { weights, bias } = &mut l.kind {
                let (w, b) =
                    it.next().ok_or_else(|| Error::Parameter("fewer parameter pairs than dense layers".into()))?;
                *weights = w.clone();
                *bias = b.clone();
            }
            layers.push(l);
        }
        if it.next().is_some() {
            return Err(Error::Parameter("more parameter pairs than dense layers".into()));
        }
        NetworkSpec::new(
            self.model_flavor,
            self.input_domain.clone(),
            layers,
            self.final_transform.clone(),
            self.domain_mode,
        )
    }

    /// The dense `(W_l, b_l)` pairs in layer order.
    pub fn parameters(&self) -> Vec<(Matrix, Vec<f64>)> {
        self.layers
            .iter()
            .filter_map(|l| match &l.kind {
                LayerKind::Dense { weights, bias } => Some((weights.clone(), bias.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_domain.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), |l| l.post().dim())
    }

    /// Box the final transform is evaluated on.
    pub fn last_domain(&self) -> &DomainBox {
        self.layers.last().map_or(&self.input_domain, |l| l.post())
    }

    /// Box feeding layer `l` (0-based): `X_0` for the first layer.
    pub fn prev_domain(&self, l: usize) -> &DomainBox {
        if l == 0 {
            &self.input_domain
        } else {
            self.layers[l - 1].post()
        }
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    fn validate(&mut self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        let flavor = self.model_flavor;
        let n_layers = self.layers.len();
        let mut dim = self.input_domain.dim();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let idx = l + 1;
            if let Some(a) = &layer.activation {
                a.validate()?;
            }
            let allowed = match (&layer.kind, flavor) {
                (LayerKind::Dense { .. }, ModelFlavor::Plain | ModelFlavor::General | ModelFlavor::AffineScaled) => {
                    true
                }
                (LayerKind::Heisenberg { .. }, ModelFlavor::Heisenberg) => true,
                (LayerKind::Conv { .. } | LayerKind::Pool { .. }, ModelFlavor::Cnn) => true,
                _ => false,
            };
            if !allowed {
                return Err(Error::Parameter(format!(
                    "layer {idx}: {} layers are not part of the {flavor:?} model",
                    layer.kind.tag()
                )));
            }
            if let Some(d_in) = layer.input_dim() {
                if d_in != dim {
                    return Err(Error::Dimension(format!("layer {idx} expects input of dimension {d_in}, got {dim}")));
                }
            }
            match &layer.kind {
                LayerKind::Dense { weights, bias } => {
                    if bias.len() != weights.rows() {
                        return Err(Error::Dimension(format!(
                            "layer {idx}: bias of length {} for {} outputs",
                            bias.len(),
                            weights.rows()
                        )));
                    }
                    if flavor == ModelFlavor::AffineScaled && (!weights.is_square() || bias.len() != dim) {
                        return Err(Error::Parameter(format!("layer {idx}: affine model needs square weights")));
                    }
                }
                LayerKind::Conv { kernel, .. } => layer.linear = Some(convolution_matrix(kernel)),
                LayerKind::Pool { pool_size } => {
                    if layer.activation.is_some() {
                        return Err(Error::Parameter(format!("layer {idx}: pool layers take no activation")));
                    }
                    layer.linear = Some(pool_matrix(dim, *pool_size)?);
                }
                LayerKind::Heisenberg { a, b, c } => {
                    if b.len() != a.len() || !c.is_finite() || a.iter().chain(b).any(|v| !v.is_finite()) {
                        return Err(Error::Parameter(format!("layer {idx}: malformed heisenberg element")));
                    }
                }
            }
            if l + 1 == n_layers && layer.activation.is_some() {
                return Err(Error::Parameter("the last layer feeds v directly and takes no activation".into()));
            }
            dim = layer.output_dim(dim);
        }
        if flavor == ModelFlavor::Cnn {
            for l in 0..n_layers {
                let is_pool = matches!(self.layers[l].kind, LayerKind::Pool { .. });
                let after_conv = l > 0 && matches!(self.layers[l - 1].kind, LayerKind::Conv { .. });
                if is_pool && (!after_conv || self.layers[l - 1].activation.is_none()) {
                    return Err(Error::Parameter(format!(
                        "layer {}: pooling must directly follow an activated convolution",
                        l + 1
                    )));
                }
            }
            if !matches!(self.layers[n_layers - 1].kind, LayerKind::Conv { .. }) {
                return Err(Error::Parameter("the last cnn layer must be a convolution".into()));
            }
        }
        Ok(())
    }

    /// Interval image of `prev` under layer `l`'s linear or shift map,
    /// computed in the same order as the forward pass.
    fn linear_image(&self, l: usize, prev: &DomainBox) -> Result<DomainBox> {
        let layer = &self.layers[l];
        match &layer.kind {
            LayerKind::Dense { weights, bias } => {
                if self.model_flavor == ModelFlavor::AffineScaled {
                    interval_affine_image(weights, &vec![0.0; weights.rows()], &prev.shifted(bias, -1.0)?)
                } else {
                    interval_affine_image(weights, bias, prev)
                }
            }
            LayerKind::Conv { .. } | LayerKind::Pool { .. } => {
                let m = layer.linear.as_ref().expect("filled in validate");
                interval_affine_image(m, &vec![0.0; m.rows()], prev)
            }
            LayerKind::Heisenberg { b, .. } => prev.shifted(b, -1.0),
        }
    }

    /// Radius bound `‖W‖ r + ‖b‖_∞` of the recipe box.
    fn recipe_radius(&self, l: usize, r_prev: f64) -> Result<f64> {
        let layer = &self.layers[l];
        Ok(match &layer.kind {
            LayerKind::Dense { weights, bias } => {
                let w = weights.operator_norm()?;
                let b = crate::linalg::norm_inf(bias);
                if self.model_flavor == ModelFlavor::AffineScaled {
                    w * (r_prev + b)
                } else {
                    w * r_prev + b
                }
            }
            LayerKind::Conv { .. } | LayerKind::Pool { .. } => {
                layer.linear.as_ref().expect("filled in validate").operator_norm()? * r_prev
            }
            LayerKind::Heisenberg { b, .. } => r_prev + crate::linalg::norm_inf(b),
        })
    }

    fn fill_domains(&mut self) -> Result<()> {
        let mut tight_prev = self.input_domain.clone();
        let mut used_prev = self.input_domain.clone();
        for l in 0..self.layers.len() {
            let tight_tilde = self.linear_image(l, &tight_prev)?;
            let act = self.layers[l].activation;
            let image = |b: &DomainBox| -> Result<DomainBox> {
                match act {
                    Some(a) => a.image(b),
                    None => Ok(b.clone()),
                }
            };
            let tight_post = image(&tight_tilde)?;
            let candidate_tilde = match (&self.layers[l].domain_tilde, self.domain_mode) {
                (Some(declared), _) => declared.clone(),
                (None, DomainMode::Tight) => self.linear_image(l, &used_prev)?,
                (None, DomainMode::NormRecipe) => {
                    let r = self.recipe_radius(l, used_prev.sup_radius())?;
                    DomainBox::symmetric(tight_tilde.dim(), r)?
                }
            };
            let required = self.linear_image(l, &used_prev)?;
            let tilde = ensure_contains(candidate_tilde, &required, l + 1, "domain_tilde")?;
            let candidate_post = match &self.layers[l].domain {
                Some(declared) => declared.clone(),
                None => image(&tilde)?,
            };
            let post = ensure_contains(candidate_post, &image(&tilde)?, l + 1, "domain")?;
            debug_assert!(post.contains_box(&tight_post));
            self.layers[l].domain_tilde = Some(tilde);
            self.layers[l].domain = Some(post.clone());
            tight_prev = tight_post;
            used_prev = post;
        }
        Ok(())
    }

    /// The tight boxes `(X̃_l, X_l)` regardless of the spec's mode.
    pub fn tight_domains(&self) -> Result<Vec<(DomainBox, DomainBox)>> {
        let t = self.propagate_domains(DomainMode::Tight)?;
        Ok(t.layers.iter().map(|l| (l.tilde().clone(), l.post().clone())).collect())
    }
}

fn ensure_contains(candidate: DomainBox, required: &DomainBox, layer: usize, what: &str) -> Result<DomainBox> {
    if candidate.dim() != required.dim() {
        return Err(Error::Dimension(format!(
            "layer {layer}: declared {what} has dimension {}, expected {}",
            candidate.dim(),
            required.dim()
        )));
    }
    if candidate.contains_box(required) {
        Ok(candidate)
    } else {
        log::warn!("layer {layer}: {what} does not contain the image of the previous box; inflating it");
        candidate.hull(required)
    }
}

#[cfg(test)]
mod tests;
