//! Monte-Carlo cross-checks of the single-layer Koopman norm bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{integrate_many, McConfig, McEstimate, Proposal};
use crate::activation::{ActivationSpec, KoopmanNormBound};
use crate::error::{Error, Result};
use crate::linalg::DomainBox;
use crate::rng;

/// `h(y) = Σ_k w_k exp(-‖y - m_k‖² / (2 s_k²))`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub centers: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, std: f64) -> Self {
        Self { centers: vec![center], stds: vec![std], weights: vec![1.0] }
    }

    /// One to three bumps centred in `domain`, widths between 10% and 50% of
    /// the box side, weights in `[-1, 1]` (nonzero).
    pub fn random<R: Rng>(rng: &mut R, domain: &DomainBox) -> Self {
        let k = rng.random_range(1..=3);
        let side = domain.widths().into_iter().fold(f64::INFINITY, f64::min);
        let mut t = Self { centers: Vec::new(), stds: Vec::new(), weights: Vec::new() };
        for _ in 0..k {
            let u: Vec<f64> = (0..domain.dim()).map(|_| rng.random()).collect();
            t.centers.push(domain.from_unit(&u));
            t.stds.push(side * rng.random_range(0.1..0.5));
            let w: f64 = rng.random_range(0.1..1.0);
            t.weights.push(if rng.random::<bool>() { w } else { -w });
        }
        t
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|((m, s), w)| {
                let r2: f64 = y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                w * (-0.5 * r2 / (s * s)).exp()
            })
            .sum()
    }
}

/// Ratio `‖K_σ h‖ / ‖h‖` for one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRatio {
    pub ratio: f64,
    pub stderr: f64,
    pub numerator: McEstimate,
    pub denominator: McEstimate,
}

/// Estimates `‖h∘σ‖_{L²(X̃)} / ‖h‖_{L²(σ(X̃))}`.
///
/// Both integrals are driven by the same uniform points of the unit cube,
/// mapped affinely onto `X̃` and onto `σ(X̃)`. For the identity activation
/// the two estimators then coincide and the ratio is exactly 1. The
/// reported stderr ignores the (positive) correlation and so overstates the
/// noise.
pub fn norm_ratio(
    activation: &ActivationSpec,
    domain_tilde: &DomainBox,
    h: &TestFunction,
    sample_count: usize,
    seed: u64,
    stream: &str,
) -> Result<NormRatio> {
    let image = activation.image(domain_tilde)?;
    let (vx, vy) = (domain_tilde.volume(), image.volume());
    let unit = DomainBox::cube(domain_tilde.dim(), 0.0, 1.0)?;
    let cfg = McConfig { sample_count, root_seed: seed, proposal: Proposal::UniformBox { domain: unit } };
    let e = integrate_many(&cfg, stream, 2, |u, out| {
        let x = domain_tilde.from_unit(u);
        let sx: Vec<f64> = x.iter().map(|&v| activation.apply(v)).collect();
        out[0] = vx * h.eval(&sx).powi(2);
        out[1] = vy * h.eval(&image.from_unit(u)).powi(2);
    })?;
    let (num, den) = (e[0], e[1]);
    if !(den.value > 0.0) {
        return Err(Error::Degenerate(format!("{stream}: test function has no mass on the image box")));
    }
    let ratio = (num.value.max(0.0) / den.value).sqrt();
    let rel = (num.stderr / num.value.max(f64::MIN_POSITIVE)).hypot(den.stderr / den.value);
    Ok(NormRatio { ratio, stderr: 0.5 * ratio * rel, numerator: num, denominator: den })
}

/// Outcome of [`koopman_lemma_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub activation: String,
    pub dim: usize,
    pub trials: usize,
    pub bound: f64,
    pub max_ratio: f64,
    /// Largest `(ratio - bound) / stderr` over the trials.
    pub max_z: f64,
    pub failures: usize,
    pub seed: u64,
    pub passed: bool,
}

/// Draws `trials` random Gaussian-mixture test functions on `σ(X̃)` and
/// checks `‖K_σ h‖/‖h‖ ≤ bound + 3·stderr` for each.
///
/// `mc` supplies the sample count per integral and the root seed; its
/// proposal is not used.
pub fn koopman_lemma_check(
    activation: &ActivationSpec,
    domain_tilde: &DomainBox,
    bound: &KoopmanNormBound,
    trials: usize,
    mc: &McConfig,
) -> Result<LemmaCheck> {
    let image = activation.image(domain_tilde)?;
    let name = format!("lemma/{}/{}", activation.name(), domain_tilde.dim());
    let seed = rng::stream_seed(mc.root_seed, &name);
    let mut h_rng = rng::stream(mc.root_seed, &format!("{name}/h"));
    let mut out = LemmaCheck {
        activation: activation.name().to_string(),
        dim: domain_tilde.dim(),
        trials,
        bound: bound.value,
        max_ratio: 0.0,
        max_z: f64::NEG_INFINITY,
        failures: 0,
        seed,
        passed: true,
    };
    for t in 0..trials {
        let h = TestFunction::random(&mut h_rng, &image);
        let r = norm_ratio(activation, domain_tilde, &h, mc.sample_count, seed, &format!("{name}/{t}"))?;
        out.max_ratio = out.max_ratio.max(r.ratio);
        let excess = r.ratio - bound.value;
        let z = if r.stderr > 0.0 {
            excess / r.stderr
        } else if excess > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        out.max_z = out.max_z.max(z);
        if excess > 3.0 * r.stderr + 1e-12 * bound.value {
            out.failures += 1;
        }
    }
    out.passed = out.failures == 0;
    Ok(out)
}

/// Near-equality witness for the leaky ReLU bound with slope `a < 1`.
///
/// Uses `X̃ = [-1, a/5]^d` and a narrow bump centred at `σ(-1/2, …)`, so
/// almost all of `h∘σ` lives where `σ(x) = a x` and the ratio approaches
/// `a^{-d/2}`.
pub fn leaky_relu_tightness(slope: f64, d: usize, mc: &McConfig) -> Result<NormRatio> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::Parameter(format!("tightness witness needs 0 < a < 1, got {slope}")));
    }
    let act = ActivationSpec::LeakyRelu { slope };
    let domain = DomainBox::cube(d, -1.0, 0.2 * slope)?;
    let h = TestFunction::gaussian(vec![-0.5 * slope; d], 0.25 * slope);
    let name = format!("lemma/leaky_tightness/{slope}/{d}");
    norm_ratio(&act, &domain, &h, mc.sample_count, rng::stream_seed(mc.root_seed, &name), &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{koopman_norm, koopman_norm_tanh};

    fn mc(n: usize) -> McConfig {
        McConfig::uniform(n, 11, DomainBox::cube(1, 0.0, 1.0).unwrap())
    }

    #[test]
    fn identity_ratio_is_exactly_one() {
        let b = DomainBox::symmetric(2, 1.0).unwrap();
        let id = ActivationSpec::Identity;
        let bound = koopman_norm(&id, &b).unwrap();
        let c = koopman_lemma_check(&id, &b, &bound, 20, &mc(2000)).unwrap();
        assert!(c.passed);
        assert_eq!(c.max_ratio, 1.0);
    }

    #[test]
    fn tanh_on_unit_box() {
        let b = DomainBox::symmetric(1, 1.0).unwrap();
        let c = koopman_lemma_check(&ActivationSpec::Tanh, &b, &koopman_norm_tanh(&b), 200, &mc(2000)).unwrap();
        assert!(c.passed, "{c:?}");
        assert!(c.max_ratio > 1.0 && c.max_ratio < 1f64.cosh());
    }

    #[test]
    fn leaky_witness_is_nearly_tight() {
        for (a, d) in [(0.5, 2), (0.1, 1), (0.1, 3)] {
            let r = leaky_relu_tightness(a, d, &mc(20_000)).unwrap();
            let bound = a.powf(-(d as f64) / 2.0);
            assert!(r.ratio >= 0.95 * bound, "a={a} d={d}: {r:?}");
            assert!(r.ratio <= bound + 3.0 * r.stderr);
        }
        assert!(leaky_relu_tightness(2.0, 1, &mc(1000)).is_err());
    }

    #[test]
    fn ratio_agrees_with_closed_form_for_linear_maps() {
        // σ = leaky with slope a on the negative half-line only: ratio a^{-1/2} exactly
        let act = ActivationSpec::LeakyRelu { slope: 0.25 };
        let b = DomainBox::cube(1, -2.0, -0.5).unwrap();
        let h = TestFunction::gaussian(vec![-0.3], 0.2);
        let r = norm_ratio(&act, &b, &h, 5000, 1, "lin").unwrap();
        assert!((r.ratio - 2.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn random_test_functions_are_inside() {
        let b = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let mut g = rng::stream(1, "t");
        for _ in 0..50 {
            let h = TestFunction::random(&mut g, &b);
            assert!(h.centers.iter().all(|c| b.contains(c)));
            assert!(h.stds.iter().all(|s| (0.2..1.0).contains(s)));
        }
    }
}
