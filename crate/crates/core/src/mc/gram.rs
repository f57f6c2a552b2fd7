//! Kernel Gram matrices `k(g_i, g_j) = ⟨f(g_i), f(g_j)⟩` over parameter tuples.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{integrate_many, McConfig};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::network::NetworkSpec;
use crate::rng;

/// Dense `(W_l, b_l)` for each layer of a template network.
pub type ParamTuple = Vec<(Matrix, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    /// `(K_a + K_b)/2` from two independent sample streams.
    pub entries: Vec<Vec<Complex64>>,
    /// Standard error of each averaged entry.
    pub stderr: Vec<Vec<f64>>,
    pub parameter_tuples: Vec<ParamTuple>,
    /// Largest `|K_a[i][j] - conj(K_b[j][i])|` in units of the combined stderr.
    pub max_asymmetry_z: f64,
    pub seed: u64,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.entries[i][i].re).sum()
    }

    /// Eigenvalues (ascending) of the Hermitian matrix, via its real
    /// `2n × 2n` embedding `[[A, -B], [B, A]]`, whose spectrum repeats each
    /// eigenvalue twice.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut m = Matrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.entries[i][j];
                m[(i, j)] = z.re;
                m[(i + n, j + n)] = z.re;
                m[(i, j + n)] = -z.im;
                m[(i + n, j)] = z.im;
            }
        }
        let ev = symmetric_eigenvalues(&m)?;
        Ok(ev.into_iter().step_by(2).collect())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// `λ_min ≥ -rel_floor · trace`
    pub fn is_psd(&self, rel_floor: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -rel_floor * self.trace())
    }

    /// Pairs violating `|k_ij|² ≤ k_ii k_jj` by more than `k` propagated stderrs.
    pub fn cauchy_schwarz_violations(&self, k: f64) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (kii, kjj) = (self.entries[i][i].re, self.entries[j][j].re);
                let kij = self.entries[i][j].norm();
                let slack = 2.0 * kij * self.stderr[i][j] + kjj * self.stderr[i][i] + kii * self.stderr[j][j];
                if kij * kij > kii * kjj + k * slack {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Hermitian Gram estimate from one stream: every entry shares the same
/// samples, so the matrix is exactly Hermitian and positive semidefinite up
/// to rounding.
fn shared_gram(
    specs: &[NetworkSpec],
    mc: &McConfig,
    stream: &str,
) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<f64>>, u64)> {
    let n = specs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let est = integrate_many(mc, stream, 2 * pairs.len(), |y, out| {
        let f: Vec<Complex64> = specs.iter().map(|s| s.eval_or_nan(y)).collect();
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let z = f[i] * f[j].conj();
            out[2 * p] = z.re;
            out[2 * p + 1] = z.im;
        }
    })?;
    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut se = vec![vec![0.0; n]; n];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let (re, im) = (est[2 * p], est[2 * p + 1]);
        let z = Complex64::new(re.value, if i == j { 0.0 } else { im.value });
        k[i][j] = z;
        k[j][i] = z.conj();
        se[i][j] = re.stderr.hypot(im.stderr);
        se[j][i] = se[i][j];
    }
    Ok((k, se, est.first().map_or(0, |e| e.seed)))
}

fn instantiate(template: &NetworkSpec, tuples: &[ParamTuple]) -> Result<Vec<NetworkSpec>> {
    tuples.iter().map(|t| template.with_parameters(t)).collect()
}

/// Gram matrix of the template network at each parameter tuple.
///
/// The L² inner product is taken against `mc`'s proposal: a uniform box
/// restricts it to that box, a Gaussian or mixture proposal approximates
/// `L²(ℝ^d)`.
pub fn gram(template: &NetworkSpec, tuples: &[ParamTuple], mc: &McConfig) -> Result<GramMatrix> {
    if tuples.is_empty() {
        return Err(Error::Parameter("gram needs at least one tuple".into()));
    }
    let specs = instantiate(template, tuples)?;
    let (ka, sa, seed) = shared_gram(&specs, mc, "gram/a")?;
    let (kb, sb, _) = shared_gram(&specs, mc, "gram/b")?;
    let n = specs.len();
    let mut entries = ka.clone();
    let mut stderr = sa.clone();
    let mut max_z: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            entries[i][j] = 0.5 * (ka[i][j] + kb[i][j]);
            stderr[i][j] = 0.5 * sa[i][j].hypot(sb[i][j]);
            let diff = (ka[i][j] - kb[j][i].conj()).norm();
            let se = sa[i][j].hypot(sb[j][i]);
            let z = if se > 0.0 {
                diff / se
            } else if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_z = max_z.max(z);
        }
    }
    Ok(GramMatrix { entries, stderr, parameter_tuples: tuples.to_vec(), max_asymmetry_z: max_z, seed })
}

/// Residuals of the isometry between the span of `f(g_i)` and the kernel's
/// feature space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryResidual {
    /// `|⟨f(g′), Σ c_i f(g_i)⟩ - Σ c̄_i k(g′, g_i)|`
    pub inner: f64,
    pub inner_stderr: f64,
    /// `|‖Σ c_i f(g_i)‖² - Σ c_i c̄_j k(g_i, g_j)|`
    pub norm: f64,
    pub norm_stderr: f64,
}

impl IsometryResidual {
    pub fn within(&self, k: f64) -> bool {
        self.inner <= k * self.inner_stderr && self.norm <= k * self.norm_stderr
    }
}

/// Compares direct integrals of a linear combination against the values the
/// Gram matrix predicts for it.
///
/// With `independent = false` the direct integrals reuse the kernel's sample
/// stream, so for a single tuple with `c = 1` the residuals are exactly 0.
pub fn isometry_check(
    template: &NetworkSpec,
    tuples: &[ParamTuple],
    coefficients: &[Complex64],
    probe: &ParamTuple,
    mc: &McConfig,
    independent: bool,
) -> Result<IsometryResidual> {
    if coefficients.len() != tuples.len() || tuples.is_empty() {
        return Err(Error::Dimension(format!("{} coefficients for {} tuples", coefficients.len(), tuples.len())));
    }
    let mut all = vec![probe.clone()];
    all.extend_from_slice(tuples);
    let specs = instantiate(template, &all)?;
    let (k, se, _) = shared_gram(&specs, mc, "isometry/kernel")?;
    let n = tuples.len();

    let direct_stream = if independent { "isometry/direct" } else { "isometry/kernel" };
    let est = integrate_many(mc, direct_stream, 4, |y, out| {
        let f0 = specs[0].eval_or_nan(y);
        let comb: Complex64 = specs[1..].iter().zip(coefficients).map(|(s, c)| c * s.eval_or_nan(y)).sum();
        let z = f0 * comb.conj();
        out[0] = z.re;
        out[1] = z.im;
        out[2] = comb.norm_sqr();
        out[3] = 0.0;
    })?;
    let direct_inner = Complex64::new(est[0].value, est[1].value);
    let direct_norm = est[2].value;

    let mut pred_inner = Complex64::new(0.0, 0.0);
    let mut pred_inner_se = 0.0;
    for i in 0..n {
        pred_inner += coefficients[i].conj() * k[0][i + 1];
        pred_inner_se += coefficients[i].norm() * se[0][i + 1];
    }
    let mut pred_norm = Complex64::new(0.0, 0.0);
    let mut pred_norm_se = 0.0;
    for i in 0..n {
        for j in 0..n {
            pred_norm += coefficients[i] * coefficients[j].conj() * k[i + 1][j + 1];
            pred_norm_se += coefficients[i].norm() * coefficients[j].norm() * se[i + 1][j + 1];
        }
    }
    let direct_inner_se = est[0].stderr.hypot(est[1].stderr);
    Ok(IsometryResidual {
        inner: (direct_inner - pred_inner).norm(),
        inner_stderr: direct_inner_se.hypot(pred_inner_se),
        norm: (direct_norm - pred_norm.re).abs(),
        norm_stderr: est[2].stderr.hypot(pred_norm_se),
    })
}

/// Random square tuples with `|det W_l| ≥ min_det`, entries uniform in
/// `[-1.5, 1.5]` and biases in `[-0.5, 0.5]`.
pub fn random_affine_tuples(n: usize, d: usize, layers: usize, min_det: f64, seed: u64) -> Vec<ParamTuple> {
    use rand::Rng;
    let mut g = rng::stream(seed, "gram/tuples");
    (0..n)
        .map(|_| {
            (0..layers)
                .map(|_| loop {
                    let data: Vec<f64> = (0..d * d).map(|_| g.random_range(-1.5..1.5)).collect();
                    let w = Matrix::from_vec(d, d, data).expect("square");
                    if crate::linalg::determinant(&w).map_or(false, |det| det.abs() >= min_det) {
                        let b: Vec<f64> = (0..d).map(|_| g.random_range(-0.5..0.5)).collect();
                        break (w, b);
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationSpec;
    use crate::linalg::DomainBox;
    use crate::mc::Proposal;
    use crate::network::{DomainMode, FinalTransform, LayerSpec, ModelFlavor};
    use std::f64::consts::PI;

    fn template(act: Option<ActivationSpec>) -> NetworkSpec {
        NetworkSpec::new(
            ModelFlavor::AffineScaled,
            DomainBox::symmetric(2, 1.0).unwrap(),
            vec![
                LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], act),
                LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None),
            ],
            FinalTransform::gaussian_bump(1.0),
            DomainMode::Tight,
        )
        .unwrap()
    }

    fn wide(n: usize) -> McConfig {
        McConfig {
            sample_count: n,
            root_seed: 5,
            proposal: Proposal::Mixture { components: vec![(vec![0.0; 2], 1.5)] },
        }
    }

    #[test]
    fn single_tuple_is_the_squared_norm() {
        // unitary representation: ‖f(g)‖ = ‖v‖ on ℝ², i.e. π/2
        let t = random_affine_tuples(1, 2, 2, 0.25, 1);
        let g = gram(&template(None), &t, &wide(40_000)).unwrap();
        assert_eq!(g.len(), 1);
        let e = g.entries[0][0];
        assert_eq!(e.im, 0.0);
        assert!((e.re - PI / 2.0).abs() <= 3.0 * g.stderr[0][0], "{e} ± {}", g.stderr[0][0]);
    }

    #[test]
    fn duplicates_give_equal_rows() {
        let mut t = random_affine_tuples(2, 2, 2, 0.25, 2);
        t.push(t[0].clone());
        let g = gram(
            &template(Some(ActivationSpec::Tanh)),
            &t,
            &McConfig::uniform(4000, 1, DomainBox::symmetric(2, 2.0).unwrap()),
        )
        .unwrap();
        for j in 0..3 {
            assert!((g.entries[0][j] - g.entries[2][j]).norm() < 1e-12);
        }
        assert!(g.min_eigenvalue().unwrap().abs() < 1e-10 * g.trace());
    }

    #[test]
    fn gram_is_hermitian_psd_and_cauchy_schwarz() {
        let t = random_affine_tuples(6, 2, 2, 0.25, 3);
        let g = gram(
            &template(Some(ActivationSpec::Tanh)),
            &t,
            &McConfig::uniform(20_000, 2, DomainBox::symmetric(2, 2.0).unwrap()),
        )
        .unwrap();
        assert!(g.max_asymmetry_z <= 3.0 + 1.0, "{}", g.max_asymmetry_z);
        assert!(g.is_psd(1e-3).unwrap());
        assert!(g.min_eigenvalue().unwrap() >= -1e-12 * g.trace());
        assert!(g.cauchy_schwarz_violations(3.0).is_empty());
    }

    #[test]
    fn eigenvalues_of_a_known_hermitian_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let z = Complex64::new(0.0, 1.0);
        let g = GramMatrix {
            entries: vec![vec![Complex64::new(2.0, 0.0), z], vec![z.conj(), Complex64::new(2.0, 0.0)]],
            stderr: vec![vec![0.0; 2]; 2],
            parameter_tuples: vec![],
            max_asymmetry_z: 0.0,
            seed: 0,
        };
        let ev = g.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12, "{ev:?}");
    }

    #[test]
    fn isometry_residuals() {
        let tpl = template(None);
        let t = random_affine_tuples(2, 2, 2, 0.25, 4);
        let one = [Complex64::new(1.0, 0.0)];
        let r = isometry_check(&tpl, &t[..1], &one, &t[0], &wide(4000), false).unwrap();
        assert_eq!(r.inner, 0.0);
        assert_eq!(r.norm, 0.0);

        let c = [Complex64::new(0.7, 0.2), Complex64::new(-0.4, 0.5)];
        let r = isometry_check(&tpl, &t, &c, &t[1], &wide(20_000), true).unwrap();
        assert!(r.within(3.0), "{r:?}");
        let c2: Vec<Complex64> = c.iter().map(|z| 2.0 * z).collect();
        let r2 = isometry_check(&tpl, &t, &c2, &t[1], &wide(20_000), true).unwrap();
        assert!(r2.inner <= 2.0 * r.inner + 1e-12);
    }
}
