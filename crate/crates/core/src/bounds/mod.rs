//! Right-hand sides of the Rademacher complexity bounds.
//!
//! Every bound has the shape
//! `‖v‖ · ∏_l (‖A_l‖ · α_l · μ_l · det_l) / √S`, where each factor defaults
//! to 1 when a theorem does not use it. [`BoundReport`] keeps the factors so
//! the value can be re-derived from its parts.

mod alpha;
mod values;

pub use alpha::{estimate_alpha, AlphaEstimate};
pub use values::{regularizer_values, RegularizerMode};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::activation::{koopman_norm, shift_koopman_norm};
use crate::error::{Error, Result};
use crate::linalg::{
    circulant_spectrum, det_factor_injective, det_factor_invertible, det_factor_restricted, DomainBox, Matrix,
};
use crate::mc::McConfig;
use crate::network::{v_norm, LayerKind, ModelFlavor, NetworkSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    #[serde(alias = "cnn")]
    CnnProp,
}

impl Theorem {
    pub fn tag(self) -> &'static str {
        match self {
            Theorem::Thm1 => "thm1",
            Theorem::Thm2 => "thm2",
            Theorem::Thm3 => "thm3",
            Theorem::Thm4 => "thm4",
            Theorem::CnnProp => "cnn",
        }
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(Theorem::Thm1),
            "thm2" => Ok(Theorem::Thm2),
            "thm3" => Ok(Theorem::Thm3),
            "thm4" => Ok(Theorem::Thm4),
            "cnn" | "cnn_prop" => Ok(Theorem::CnnProp),
            other => Err(Error::Config(format!("unknown theorem `{other}`"))),
        }
    }
}

/// How `α(f_l)` enters thm3 and thm4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `α := 1`.
    #[default]
    Conservative,
    /// Monte-Carlo estimate per layer.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub sample_size: usize,
    /// `D`. `f64::INFINITY` leaves the determinant factors unconstrained.
    pub cap: f64,
    pub alpha: AlphaMode,
    /// Samples per Monte-Carlo integral (α and non-closed-form `‖v‖`).
    pub mc_samples: usize,
    pub seed: u64,
    /// Replaces the computed `‖v‖`.
    pub v_norm_override: Option<f64>,
}

impl BoundConfig {
    pub const DEFAULT_MC_SAMPLES: usize = 200_000;

    pub fn new(sample_size: usize) -> Self {
        Self {
            sample_size,
            cap: f64::INFINITY,
            alpha: AlphaMode::Conservative,
            mc_samples: Self::DEFAULT_MC_SAMPLES,
            seed: 0,
            v_norm_override: None,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_alpha(mut self, alpha: AlphaMode) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mc_samples(mut self, n: usize) -> Self {
        self.mc_samples = n;
        self
    }

    pub fn with_v_norm(mut self, v: f64) -> Self {
        self.v_norm_override = Some(v);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.sample_size == 0 {
            return Err(Error::Parameter("sample size S must be at least 1".into()));
        }
        if !(self.cap > 0.0) {
            return Err(Error::Parameter(format!("cap D must be positive, got {}", self.cap)));
        }
        Ok(())
    }
}

/// Factors contributed by one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFactor {
    /// 1-based layer index.
    pub layer: usize,
    pub kind: String,
    /// `‖A_l‖`; 1 for the last layer and for layers without activation.
    pub koopman_norm: f64,
    /// `|det|^{-1/2}`, `|det WᵀW|^{-1/4}`, restricted or `|β|^{-1/2}`; 1 if unused.
    pub det_factor: f64,
    pub alpha: Option<AlphaEstimate>,
    /// `μ_ker(Y)`; 1 for a trivial kernel. May overflow for wide kernels.
    pub kernel_volume: f64,
    /// `log10 μ_ker(Y)`, finite when the volume overflows.
    #[serde(default)]
    pub kernel_volume_log10: f64,
    /// `|β_l|` for convolution layers.
    pub beta: Option<f64>,
}

impl LayerFactor {
    fn new(layer: usize, kind: &str) -> Self {
        Self {
            layer,
            kind: kind.to_string(),
            koopman_norm: 1.0,
            det_factor: 1.0,
            alpha: None,
            kernel_volume: 1.0,
            kernel_volume_log10: 0.0,
            beta: None,
        }
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.as_ref().map_or(1.0, |a| a.ratio)
    }

    /// Everything but the determinant factor.
    fn shape_part(&self) -> f64 {
        self.koopman_norm * self.alpha_value() * self.kernel_volume
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub sample_size: usize,
    pub per_layer: Vec<LayerFactor>,
    pub v_norm: f64,
    pub value: f64,
    /// `D`, absent when unconstrained.
    pub cap: Option<f64>,
    /// `D^L`: the supremum of the determinant product over the constraint set.
    pub det_cap: Option<f64>,
    /// The bound with the determinant product replaced by `det_cap`.
    pub value_at_cap: Option<f64>,
    pub seed: u64,
}

impl BoundReport {
    fn assemble(theorem: Theorem, cfg: &BoundConfig, per_layer: Vec<LayerFactor>, v_norm: f64) -> Result<Self> {
        let mut r = Self {
            theorem,
            sample_size: cfg.sample_size,
            per_layer,
            v_norm,
            value: 0.0,
            cap: cfg.cap.is_finite().then_some(cfg.cap),
            det_cap: None,
            value_at_cap: None,
            seed: cfg.seed,
        };
        r.value = r.recompute();
        if theorem != Theorem::Thm1 {
            if let Some(d) = r.cap {
                let n_det = r.per_layer.iter().filter(|f| f.kind != "pool").count();
                let cap = d.powi(n_det as i32);
                let shape: f64 = r.per_layer.iter().map(LayerFactor::shape_part).product();
                r.det_cap = Some(cap);
                r.value_at_cap = Some(r.v_norm * shape * cap / (r.sample_size as f64).sqrt());
            }
        }
        let finite_parts = |f: &LayerFactor| {
            [f.koopman_norm, f.alpha_value(), f.kernel_volume_log10, f.det_factor].iter().all(|v| v.is_finite())
        };
        if !r.v_norm.is_finite() || !r.per_layer.iter().all(finite_parts) {
            return Err(Error::Numeric { layer: 0, what: format!("non-finite {} bound", theorem.tag()) });
        }
        if !r.value.is_finite() {
            log::warn!("{} bound overflows f64; log10 = {:.3}", theorem.tag(), r.log10_value());
        }
        Ok(r)
    }

    /// `‖v‖ · ∏ factors / √S` from the stored parts.
    pub fn recompute(&self) -> f64 {
        let prod: f64 = self.per_layer.iter().map(|f| f.shape_part() * f.det_factor).product();
        self.v_norm * prod / (self.sample_size as f64).sqrt()
    }

    /// `log10` of the bound, finite even when the product overflows.
    pub fn log10_value(&self) -> f64 {
        let layers: f64 = self
            .per_layer
            .iter()
            .map(|f| f.koopman_norm.log10() + f.alpha_value().log10() + f.kernel_volume_log10 + f.det_factor.log10())
            .sum();
        self.v_norm.log10() + layers - 0.5 * (self.sample_size as f64).log10()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theorem {}  S = {}", self.theorem.tag(), self.sample_size)?;
        writeln!(
            f,
            "{:>5} {:<10} {:>13} {:>13} {:>13} {:>13}",
            "layer", "kind", "|A_l|", "det/beta", "alpha", "mu_ker"
        )?;
        for l in &self.per_layer {
            writeln!(
                f,
                "{:>5} {:<10} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e}",
                l.layer,
                l.kind,
                l.koopman_norm,
                l.det_factor,
                l.alpha_value(),
                l.kernel_volume
            )?;
        }
        writeln!(f, "|v| = {:.6e}", self.v_norm)?;
        if let (Some(d), Some(c), Some(v)) = (self.cap, self.det_cap, self.value_at_cap) {
            writeln!(f, "D = {d}  D^L = {c:.6e}  bound at cap = {v:.6e}")?;
        }
        write!(f, "bound = {:.5}", self.value)
    }
}

/// thm1 from precomputed factors: `∏‖A_l‖ · ‖v‖ / √S`.
pub fn bound_thm1(koopman_norms: &[f64], v_norm: f64, sample_size: usize) -> Result<BoundReport> {
    let cfg = BoundConfig::new(sample_size);
    cfg.validate()?;
    let mut per_layer: Vec<LayerFactor> = koopman_norms
        .iter()
        .enumerate()
        .map(|(l, &n)| LayerFactor { koopman_norm: n, ..LayerFactor::new(l + 1, "dense") })
        .collect();
    per_layer.push(LayerFactor::new(koopman_norms.len() + 1, "dense"));
    BoundReport::assemble(Theorem::Thm1, &cfg, per_layer, v_norm)
}

fn spec_v_norm(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<f64> {
    if let Some(v) = cfg.v_norm_override {
        return Ok(v);
    }
    let mc = McConfig::uniform(cfg.mc_samples, cfg.seed, spec.last_domain().clone());
    v_norm(&spec.final_transform, spec.last_domain(), &mc)
}

/// `‖A_l‖` for every layer: the activation's Koopman norm on `X̃_l` for
/// `l < L`, 1 for the last layer.
fn koopman_factors(spec: &NetworkSpec) -> Result<Vec<f64>> {
    let n = spec.depth();
    spec.layers
        .iter()
        .enumerate()
        .map(|(l, layer)| match (&layer.activation, l + 1 < n) {
            (Some(a), true) => Ok(koopman_norm(a, layer.tilde())?.value * shift_koopman_norm()),
            _ => Ok(1.0),
        })
        .collect()
}

fn dense_weights<'a>(spec: &'a NetworkSpec, theorem: &'static str) -> Result<Vec<&'a Matrix>> {
    spec.layers
        .iter()
        .map(|l| match &l.kind {
            LayerKind::Dense { weights, .. } => Ok(weights),
            other => {
                Err(Error::NotApplicable { theorem, reason: format!("{} layers are not dense; use cnn", other.tag()) })
            }
        })
        .collect()
}

fn check_cap(layer: usize, factor: f64, cfg: &BoundConfig) -> Result<()> {
    if factor > cfg.cap {
        return Err(Error::CapViolation { layer, factor, cap: cfg.cap });
    }
    Ok(())
}

fn is_orthogonal(w: &Matrix) -> bool {
    if !w.is_square() {
        return false;
    }
    let g = w.transpose().matmul(w).expect("square");
    g.sub(&Matrix::identity(w.rows())).expect("same shape").frobenius_norm() <= 1e-10
}

/// thm1 for a network whose layers act unitarily: the affine-scaled
/// and Heisenberg models, or plain dense models with orthogonal weights.
pub fn bound_thm1_spec(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let unitary = match spec.model_flavor {
        ModelFlavor::AffineScaled | ModelFlavor::Heisenberg => true,
        ModelFlavor::Plain | ModelFlavor::General => dense_weights(spec, "thm1")?.into_iter().all(is_orthogonal),
        ModelFlavor::Cnn => false,
    };
    if !unitary {
        return Err(Error::NotApplicable {
            theorem: "thm1",
            reason: "layers are not unitary; use thm2 (invertible) or thm3 (injective)".into(),
        });
    }
    let norms = koopman_factors(spec)?;
    let per_layer = norms
        .iter()
        .enumerate()
        .map(|(l, &n)| LayerFactor { koopman_norm: n, ..LayerFactor::new(l + 1, spec.layers[l].kind.tag()) })
        .collect();
    BoundReport::assemble(Theorem::Thm1, cfg, per_layer, spec_v_norm(spec, cfg)?)
}

/// thm2: thm1 times `∏_{l=1}^L |det W_l|^{-1/2}`.
pub fn bound_thm2(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let weights = dense_weights(spec, "thm2")?;
    let mut dets = Vec::with_capacity(weights.len());
    for (l, w) in weights.iter().enumerate() {
        if !w.is_square() {
            return Err(Error::NotApplicable {
                theorem: "thm2",
                reason: format!("layer {} is {}x{}, not square; use thm3 or thm4", l + 1, w.rows(), w.cols()),
            });
        }
        dets.push(det_factor_invertible(w)?);
    }
    if spec.model_flavor != ModelFlavor::AffineScaled {
        return Err(Error::NotApplicable {
            theorem: "thm2",
            reason: format!("needs the affine_scaled model, got {:?}; use thm3", spec.model_flavor),
        });
    }
    let norms = koopman_factors(spec)?;
    let mut per_layer = Vec::with_capacity(dets.len());
    for (l, (&det, &n)) in dets.iter().zip(&norms).enumerate() {
        check_cap(l + 1, det, cfg)?;
        per_layer.push(LayerFactor { koopman_norm: n, det_factor: det, ..LayerFactor::new(l + 1, "dense") });
    }
    BoundReport::assemble(Theorem::Thm2, cfg, per_layer, spec_v_norm(spec, cfg)?)
}

/// The weight as seen by `α`: `x ↦ W x + c`.
fn affine_part(spec: &NetworkSpec, l: usize) -> (Matrix, Vec<f64>) {
    match &spec.layers[l].kind {
        LayerKind::Dense { weights, bias } => {
            let c = if spec.model_flavor == ModelFlavor::AffineScaled {
                weights.matvec(bias).expect("validated").iter().map(|v| -v).collect()
            } else {
                bias.clone()
            };
            (weights.clone(), c)
        }
        _ => {
            let m = spec.layers[l].linear_matrix();
            let n = m.rows();
            (m, vec![0.0; n])
        }
    }
}

fn alpha_factor(spec: &NetworkSpec, l: usize, cfg: &BoundConfig) -> Result<Option<AlphaEstimate>> {
    if cfg.alpha == AlphaMode::Conservative || l + 1 >= spec.depth() {
        return Ok(None);
    }
    let (w, c) = affine_part(spec, l);
    let stream = format!("alpha/{}", l + 1);
    let h = |z: &[f64]| spec.eval_tail(l, z).unwrap_or(f64::NAN);
    estimate_alpha(h, &w, &c, spec.prev_domain(l), spec.layers[l].tilde(), cfg.mc_samples, cfg.seed, &stream).map(Some)
}

/// thm3 for injective dense weights.
pub fn bound_thm3(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let weights = dense_weights(spec, "thm3")?;
    let dets = weights.iter().map(|w| det_factor_injective(w)).collect::<Result<Vec<_>>>()?;
    let norms = koopman_factors(spec)?;
    let mut per_layer = Vec::with_capacity(dets.len());
    for l in 0..dets.len() {
        check_cap(l + 1, dets[l], cfg)?;
        per_layer.push(LayerFactor {
            koopman_norm: norms[l],
            det_factor: dets[l],
            alpha: alpha_factor(spec, l, cfg)?,
            ..LayerFactor::new(l + 1, "dense")
        });
    }
    BoundReport::assemble(Theorem::Thm3, cfg, per_layer, spec_v_norm(spec, cfg)?)
}

/// Coefficient ranges `[min, max]` of `q_iᵀ x` over the box, one per column
/// of `kernel_basis`.
pub fn kernel_coefficient_bounds(kernel_basis: &Matrix, domain: &DomainBox) -> Result<Vec<(f64, f64)>> {
    if kernel_basis.rows() != domain.dim() {
        return Err(Error::Dimension(format!(
            "kernel basis in dimension {} for a box in dimension {}",
            kernel_basis.rows(),
            domain.dim()
        )));
    }
    Ok((0..kernel_basis.cols())
        .map(|t| {
            let q = kernel_basis.column(t);
            q.iter().zip(domain.lower()).zip(domain.upper()).fold((0.0, 0.0), |(lo, hi), ((&qi, &a), &b)| {
                let (x, y) = (qi * a, qi * b);
                (lo + x.min(y), hi + x.max(y))
            })
        })
        .collect())
}

/// `∏ (b_i - a_i)` over the kernel coefficient box; 1 for a trivial kernel.
pub fn kernel_volume(kernel_basis: &Matrix, bounds: &[(f64, f64)]) -> Result<f64> {
    if bounds.len() != kernel_basis.cols() {
        return Err(Error::Dimension(format!(
            "{} coefficient intervals for a kernel of dimension {}",
            bounds.len(),
            kernel_basis.cols()
        )));
    }
    Ok(bounds.iter().map(|(a, b)| b - a).product())
}

/// `log10` of [`kernel_volume`], without the overflow.
pub fn kernel_volume_log10(bounds: &[(f64, f64)]) -> f64 {
    bounds.iter().map(|(a, b)| (b - a).log10()).sum()
}

/// thm4: any rank. `Y_{l-1}` is the projection of the tight box
/// `X_{l-1}` onto `ker(W_l)`.
pub fn bound_thm4(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    let weights = dense_weights(spec, "thm4")?;
    let tight = spec.tight_domains()?;
    let norms = koopman_factors(spec)?;
    let mut per_layer = Vec::with_capacity(weights.len());
    for (l, w) in weights.iter().enumerate() {
        let r = det_factor_restricted(w)?;
        check_cap(l + 1, r.factor, cfg)?;
        let y_prev = if l == 0 { &spec.input_domain } else { &tight[l - 1].1 };
        let coeffs = kernel_coefficient_bounds(&r.kernel_basis, y_prev)?;
        let mu = kernel_volume(&r.kernel_basis, &coeffs)?;
        let injective = r.kernel_basis.cols() == 0 && w.rows() >= w.cols();
        let alpha = if injective {
            alpha_factor(spec, l, cfg)?
        } else {
            if cfg.alpha == AlphaMode::Estimate && l + 1 < spec.depth() {
                log::warn!("layer {}: α needs an injective weight; using α = 1", l + 1);
            }
            None
        };
        per_layer.push(LayerFactor {
            koopman_norm: norms[l],
            det_factor: r.factor,
            alpha,
            kernel_volume: mu,
            kernel_volume_log10: kernel_volume_log10(&coeffs),
            ..LayerFactor::new(l + 1, "dense")
        });
    }
    BoundReport::assemble(Theorem::Thm4, cfg, per_layer, spec_v_norm(spec, cfg)?)
}

/// cnn: `β_l = ∏_m γ_m(θ_l)` replaces the determinant
/// and each pooling layer contributes `μ_ker(P_l)(Ŷ_l)`.
pub fn bound_cnn(spec: &NetworkSpec, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    if spec.model_flavor != ModelFlavor::Cnn {
        return Err(Error::NotApplicable { theorem: "cnn", reason: "needs the cnn model; use thm2-thm4".into() });
    }
    let norms = koopman_factors(spec)?;
    let mut per_layer = Vec::with_capacity(spec.depth());
    for (l, layer) in spec.layers.iter().enumerate() {
        let mut f = LayerFactor { koopman_norm: norms[l], ..LayerFactor::new(l + 1, layer.kind.tag()) };
        match &layer.kind {
            LayerKind::Conv { kernel, scaling } => {
                let gamma = circulant_spectrum(kernel, *scaling)?;
                let scale = kernel.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if let Some(index) = gamma.iter().position(|g| g.norm() <= 1e-14 * scale) {
                    return Err(Error::ConvolutionNotInvertible { index });
                }
                let log_beta: f64 = gamma.iter().map(|g| g.norm().ln()).sum();
                f.beta = Some(log_beta.exp());
                f.det_factor = (-0.5 * log_beta).exp();
                check_cap(l + 1, f.det_factor, cfg)?;
            }
            LayerKind::Pool { .. } => {
                let p = layer.linear_matrix();
                let r = det_factor_restricted(&p)?;
                let coeffs = kernel_coefficient_bounds(&r.kernel_basis, spec.prev_domain(l))?;
                f.kernel_volume = kernel_volume(&r.kernel_basis, &coeffs)?;
                f.kernel_volume_log10 = kernel_volume_log10(&coeffs);
            }
            _ => unreachable!("validated cnn layers"),
        }
        per_layer.push(f);
    }
    BoundReport::assemble(Theorem::CnnProp, cfg, per_layer, spec_v_norm(spec, cfg)?)
}

/// Dispatches on the theorem tag.
pub fn bound(spec: &NetworkSpec, theorem: Theorem, cfg: &BoundConfig) -> Result<BoundReport> {
    match theorem {
        Theorem::Thm1 => bound_thm1_spec(spec, cfg),
        Theorem::Thm2 => bound_thm2(spec, cfg),
        Theorem::Thm3 => bound_thm3(spec, cfg),
        Theorem::Thm4 => bound_thm4(spec, cfg),
        Theorem::CnnProp => bound_cnn(spec, cfg),
    }
}

/// Seed of the α stream for `layer` under `root`; exposed for reports.
pub fn alpha_seed(root: u64, layer: usize) -> u64 {
    rng::stream_seed(root, &format!("alpha/{layer}"))
}
