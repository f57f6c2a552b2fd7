use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Axis-aligned box `[lower_1, upper_1] × … × [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxRepr> for DomainBox {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        DomainBox::new(r.lower, r.upper)
    }
}

impl From<DomainBox> for BoxRepr {
    fn from(b: DomainBox) -> Self {
        BoxRepr { lower: b.lower, upper: b.upper }
    }
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!("box bounds of length {} and {}", lower.len(), upper.len())));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite("box bound"));
            }
            if a > b {
                return Err(Error::Parameter(format!("box axis {i}: lower {a} > upper {b}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    /// `radius · [-1, 1]^d`.
    pub fn symmetric(d: usize, radius: f64) -> Result<Self> {
        Self::cube(d, -radius.abs(), radius.abs())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// `max_i max(|lower_i|, |upper_i|)`.
    pub fn sup_radius(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains_box(&self, other: &DomainBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &DomainBox) -> Result<DomainBox> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension("hull of boxes of different dimension".into()));
        }
        DomainBox::new(
            self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        )
    }

    /// Image under a coordinatewise nondecreasing map.
    pub fn map_monotone(&self, f: impl Fn(f64) -> f64) -> Result<DomainBox> {
        DomainBox::new(self.lower.iter().map(|&a| f(a)).collect(), self.upper.iter().map(|&b| f(b)).collect())
    }

    /// `box - shift`.
    pub fn shifted(&self, shift: &[f64], sign: f64) -> Result<DomainBox> {
        if shift.len() != self.dim() {
            return Err(Error::Dimension("shift length".into()));
        }
        DomainBox::new(
            self.lower.iter().zip(shift).map(|(a, s)| a + sign * s).collect(),
            self.upper.iter().zip(shift).map(|(b, s)| b + sign * s).collect(),
        )
    }

    /// Maps a point of the unit cube `[0,1]^d` into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(t, (a, b))| a + t * (b - a)).collect()
    }
}

/// `w x + b`, accumulated in the same order as [`interval_affine_image`] so
/// that floating-point results stay inside the computed enclosure.
pub fn affine_apply(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() || b.len() != w.rows() {
        return Err(Error::Dimension(format!(
            "affine map: weight {}x{}, bias {}, input {}",
            w.rows(),
            w.cols(),
            b.len(),
            x.len()
        )));
    }
    Ok(b.iter().enumerate().map(|(i, &bi)| w.row(i).iter().zip(x).fold(bi, |acc, (wij, xj)| acc + wij * xj)).collect())
}

/// Interval enclosure of `{w x + b : x ∈ domain}`. The enclosure is exact
/// per coordinate (each output interval is the true range of that coordinate).
pub fn interval_affine_image(w: &Matrix, b: &[f64], domain: &DomainBox) -> Result<DomainBox> {
    if w.cols() != domain.dim() || b.len() != w.rows() {
        return Err(Error::Dimension(format!(
            "affine image: weight {}x{}, bias {}, box dim {}",
            w.rows(),
            w.cols(),
            b.len(),
            domain.dim()
        )));
    }
    let mut lo = Vec::with_capacity(w.rows());
    let mut hi = Vec::with_capacity(w.rows());
    for (i, bi) in b.iter().enumerate() {
        let (mut l, mut h) = (*bi, *bi);
        for (j, &wij) in w.row(i).iter().enumerate() {
            let p = wij * domain.lower[j];
            let q = wij * domain.upper[j];
            l += p.min(q);
            h += p.max(q);
        }
        lo.push(l);
        hi.push(h);
    }
    DomainBox::new(lo, hi)
}
