use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::mc::{integrate_complex, ComplexMcEstimate, McConfig};

/// Normalizing constant of the Gaussian test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `‖p‖_{L²} = 1`: constant `(2c/π)^{d/4}`.
    #[default]
    UnitL2,
    /// `∫ p = 1`: constant `(c/π)^{d/2}`. Makes `F_c → f` as `c → ∞`.
    UnitMass,
}

/// `p_{c,x}(y) = N · exp(-c‖y - x‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub center: Vec<f64>,
    pub width: f64,
    pub normalization: Normalization,
}

impl Regularizer {
    pub fn new(center: Vec<f64>, width: f64, normalization: Normalization) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Parameter(format!("regularizer width must be positive, got {width}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regularizer center"));
        }
        Ok(Self { center, width, normalization })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn constant(&self) -> f64 {
        let d = self.dim() as f64;
        match self.normalization {
            Normalization::UnitL2 => (2.0 * self.width / PI).powf(d / 4.0),
            Normalization::UnitMass => (self.width / PI).powf(d / 2.0),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.constant() * (-self.width * r2).exp()
    }

    /// Closed-form `‖p‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        match self.normalization {
            Normalization::UnitL2 => 1.0,
            Normalization::UnitMass => (self.width / (2.0 * PI)).powf(self.dim() as f64 / 4.0),
        }
    }

    /// Closed-form `∫ p`.
    pub fn mass(&self) -> f64 {
        match self.normalization {
            Normalization::UnitL2 => (2.0 * PI / self.width).powf(self.dim() as f64 / 4.0),
            Normalization::UnitMass => 1.0,
        }
    }

    /// Gaussian proposal with the same center and width, for which `p/q` is constant.
    pub fn matched_proposal(&self, sample_count: usize, root_seed: u64) -> McConfig {
        McConfig::gaussian(sample_count, root_seed, self.center.clone(), self.width)
    }
}

/// `F_c(x) = ⟨f, p_{c,x}⟩ = ∫ f(y) p_{c,x}(y) dy`, sampled from `mc`'s proposal.
pub fn regularized_forward(spec: &NetworkSpec, p: &Regularizer, mc: &McConfig) -> Result<ComplexMcEstimate> {
    if p.dim() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "regularizer on dimension {} for a network on dimension {}",
            p.dim(),
            spec.input_dim()
        )));
    }
    integrate_complex(mc, "regularized_forward", |y| spec.eval_or_nan(y) * p.eval(y))
}
