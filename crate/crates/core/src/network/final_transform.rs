use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::DomainBox;
use crate::mc::{integrate, McConfig};

/// How `‖v‖` enters a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Closed form where one exists, otherwise a Monte-Carlo integral.
    #[default]
    Exact,
    /// `μ(X̃_L)^{1/2}`, valid when `|v| ≤ 1`.
    MeasureBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FinalKind {
    /// `w3 · exp(-‖x‖²)`
    GaussianBump { w3: f64 },
    /// Component `class` of the softmax.
    Softmax { class: usize },
    /// The coordinate `x[index]`.
    Coordinate { index: usize },
    /// Piecewise constant on a regular grid over `[lower, upper]`, with
    /// `shape[k]` cells along axis `k` and constant extension outside.
    LookupTable { lower: Vec<f64>, upper: Vec<f64>, shape: Vec<usize>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTransform {
    #[serde(flatten)]
    pub kind: FinalKind,
    #[serde(default)]
    pub norm_mode: NormMode,
}

impl FinalTransform {
    pub fn gaussian_bump(w3: f64) -> Self {
        Self { kind: FinalKind::GaussianBump { w3 }, norm_mode: NormMode::Exact }
    }

    pub fn softmax(class: usize) -> Self {
        Self { kind: FinalKind::Softmax { class }, norm_mode: NormMode::MeasureBound }
    }

    pub fn coordinate(index: usize) -> Self {
        Self { kind: FinalKind::Coordinate { index }, norm_mode: NormMode::Exact }
    }

    /// The constant function `value` (a one-cell table).
    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            kind: FinalKind::LookupTable {
                lower: vec![0.0; dim],
                upper: vec![1.0; dim],
                shape: vec![1; dim],
                values: vec![value],
            },
            norm_mode: NormMode::Exact,
        }
    }

    pub fn with_norm_mode(mut self, norm_mode: NormMode) -> Self {
        self.norm_mode = norm_mode;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match &self.kind {
            FinalKind::GaussianBump { w3 } if !w3.is_finite() => Err(Error::NonFinite("w3")),
            FinalKind::Softmax { class: i } | FinalKind::Coordinate { index: i } if *i >= dim => {
                Err(Error::Parameter(format!("output index {i} out of range for dimension {dim}")))
            }
            FinalKind::LookupTable { lower, upper, shape, values } => {
                let cells: usize = shape.iter().product();
                if lower.len() != dim || upper.len() != dim || shape.len() != dim {
                    return Err(Error::Dimension(format!("lookup table is not {dim}-dimensional")));
                }
                if cells == 0 || values.len() != cells {
                    return Err(Error::Dimension(format!("lookup table needs {cells} values, got {}", values.len())));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter("lookup table needs lower < upper and finite values".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            FinalKind::GaussianBump { w3 } => w3 * (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
            FinalKind::Softmax { class } => {
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = x.iter().map(|v| (v - m).exp()).sum();
                (x[*class] - m).exp() / z
            }
            FinalKind::Coordinate { index } => x[*index],
            FinalKind::LookupTable { lower, upper, shape, values } => {
                let mut flat = 0;
                for k in 0..shape.len() {
                    let t = (x[k] - lower[k]) / (upper[k] - lower[k]);
                    let cell = ((t * shape[k] as f64).floor().max(0.0) as usize).min(shape[k] - 1);
                    flat = flat * shape[k] + cell;
                }
                values[flat]
            }
        }
    }

    /// `sup |v|` when it is known without sampling.
    fn sup_abs(&self) -> f64 {
        match &self.kind {
            FinalKind::GaussianBump { w3 } => w3.abs(),
            FinalKind::Softmax { .. } => 1.0,
            FinalKind::Coordinate { .. } => f64::INFINITY,
            FinalKind::LookupTable { values, .. } => values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }
}

/// `‖v‖` on the last layer's box.
///
/// In exact mode the Gaussian bump uses its norm over all of `ℝ^d`,
/// `|w3|(π/2)^{d/4}`, which dominates the norm on any box. Other transforms
/// are integrated with `mc` (its proposal is replaced by the uniform one on
/// `last_domain`).
pub fn v_norm(final_transform: &FinalTransform, last_domain: &DomainBox, mc: &McConfig) -> Result<f64> {
    let d = last_domain.dim();
    final_transform.validate(d)?;
    match final_transform.norm_mode {
        NormMode::MeasureBound => {
            let s = final_transform.sup_abs();
            if s > 1.0 {
                return Err(Error::MeasureBoundViolation(s));
            }
            Ok(last_domain.volume().sqrt())
        }
        NormMode::Exact => match &final_transform.kind {
            FinalKind::GaussianBump { w3 } => Ok(w3.abs() * (PI / 2.0).powf(d as f64 / 4.0)),
            _ => {
                let cfg = McConfig::uniform(mc.sample_count, mc.root_seed, last_domain.clone());
                let e = integrate(&cfg, "v_norm", |x| final_transform.eval(x).powi(2))?;
                Ok(e.value.max(0.0).sqrt())
            }
        },
    }
}
