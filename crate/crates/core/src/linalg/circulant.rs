use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Convolution kernel `θ` over the index set `I = J_1 × … × J_d` with
/// `J_k = {0, …, shape[k]-1}`. Values are stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ConvKernel {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n == 0 {
            return Err(Error::Parameter("convolution index set is empty".into()));
        }
        if values.len() != n {
            return Err(Error::Dimension(format!("kernel over {shape:?} needs {n} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("convolution kernel"));
        }
        Ok(Self { shape, values })
    }

    /// Scaled unit tap at the origin.
    pub fn delta(shape: Vec<usize>, scale: f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        let mut values = vec![0.0; n];
        if n > 0 {
            values[0] = scale;
        }
        Self::new(shape, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Circular convolution `θ ∗ x` on the same index set.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len() {
            return Err(Error::Dimension("convolution input length".into()));
        }
        Ok(convolution_matrix(self).matvec(x)?)
    }
}

/// Per-axis frequency scaling used in `γ_m = Σ_j θ_j exp(i (S j)·m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumScaling {
    /// `S_kk = 2π/|J_k|`: the Fourier components are exactly the eigenvalues
    /// of the circular convolution matrix.
    #[default]
    Dft,
    /// `S_kk = 1/(2π|J_k|)`. Its products do not match the convolution
    /// determinant.
    Literal,
}

impl SpectrumScaling {
    fn factor(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            SpectrumScaling::Dft => 2.0 * std::f64::consts::PI / n,
            SpectrumScaling::Literal => 1.0 / (2.0 * std::f64::consts::PI * n),
        }
    }
}

/// Fourier components `γ_m(θ)` for every `m ∈ I`, row-major.
pub fn circulant_spectrum(theta: &ConvKernel, scaling: SpectrumScaling) -> Result<Vec<Complex64>> {
    if theta.is_empty() || theta.shape.is_empty() {
        return Err(Error::Parameter("convolution index set is empty".into()));
    }
    let s: Vec<f64> = theta.shape.iter().map(|&n| scaling.factor(n)).collect();
    let n = theta.len();
    let idx: Vec<Vec<usize>> = (0..n).map(|f| theta.multi_index(f)).collect();
    Ok(idx
        .iter()
        .map(|m| {
            idx.iter()
                .zip(&theta.values)
                .filter(|(_, &t)| t != 0.0)
                .map(|(j, &t)| {
                    let phase: f64 = j.iter().zip(m).zip(&s).map(|((&jk, &mk), &sk)| sk * (jk * mk) as f64).sum();
                    Complex64::from_polar(t, phase)
                })
                .sum()
        })
        .collect())
}

/// Dense matrix of the multi-level circular convolution `x ↦ θ ∗ x`,
/// `(θ ∗ x)_i = Σ_j θ_j x_{(i - j) mod shape}`.
pub fn convolution_matrix(theta: &ConvKernel) -> Matrix {
    let n = theta.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let ii = theta.multi_index(i);
        for (jf, &t) in theta.values.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let jj = theta.multi_index(jf);
            let k: Vec<usize> = ii.iter().zip(&jj).zip(&theta.shape).map(|((&a, &b), &nk)| (a + nk - b) % nk).collect();
            m[(i, theta.flat_index(&k))] += t;
        }
    }
    m
}
