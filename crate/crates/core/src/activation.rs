//! Elementwise activations and bounds on the norm of their Koopman operators.
//!
//! For an invertible elementwise activation `σ` acting on a box `X̃`, the
//! composition operator `K_σ h = h ∘ σ` from `L²(σ(X̃))` to `L²(X̃)` satisfies
//! `‖K_σ‖ ≤ sup |det Jσ⁻¹|^{1/2}`. Because the Jacobian is diagonal the
//! supremum factorizes over coordinates, and every bound here is reported
//! with its per-coordinate factors.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::linalg::DomainBox;

/// Grid points per coordinate used by [`koopman_norm_generic`].
pub const DEFAULT_GRID: usize = 4096;

const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ActivationSpec {
    #[default]
    Identity,
    Tanh,
    Sigmoid,
    LeakyRelu {
        slope: f64,
    },
    /// Leaky ReLU convolved with a Gaussian of width `mu`:
    /// `αx + (1-α)(xΦ(x/μ) + μφ(x/μ))`. Strictly increasing with slope in `(α, 1)`.
    SmoothLeakyRelu {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// Accepted by the parser so that it can be rejected with a clear message.
    Relu,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_mu() -> f64 {
    0.5
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z * FRAC_1_SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl ActivationSpec {
    pub fn smooth_leaky_relu() -> Self {
        ActivationSpec::SmoothLeakyRelu { alpha: default_alpha(), mu: default_mu() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationSpec::Identity => "identity",
            ActivationSpec::Tanh => "tanh",
            ActivationSpec::Sigmoid => "sigmoid",
            ActivationSpec::LeakyRelu { .. } => "leaky_relu",
            ActivationSpec::SmoothLeakyRelu { .. } => "smooth_leaky_relu",
            ActivationSpec::Relu => "relu",
        }
    }

    /// Checks parameter ranges and rejects activations without a Koopman bound.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationSpec::LeakyRelu { slope } if !(slope > 0.0 && slope.is_finite()) => {
                Err(Error::Parameter(format!("leaky_relu slope must be positive, got {slope}")))
            }
            ActivationSpec::SmoothLeakyRelu { alpha, mu }
                if !(alpha > 0.0 && alpha < 1.0 && mu > 0.0 && mu.is_finite()) =>
            {
                Err(Error::Parameter(format!(
                    "smooth_leaky_relu needs 0 < alpha < 1 and mu > 0, got alpha={alpha}, mu={mu}"
                )))
            }
            ActivationSpec::Relu => {
                Err(Error::UnsupportedActivation("relu has zero derivative on the negative axis and no inverse".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::Identity => x,
            ActivationSpec::Tanh => x.tanh(),
            ActivationSpec::Sigmoid => sigmoid(x),
            ActivationSpec::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationSpec::SmoothLeakyRelu { alpha, mu } => {
                let z = x / mu;
                alpha * x + (1.0 - alpha) * (x * std_normal_cdf(z) + mu * std_normal_pdf(z))
            }
            ActivationSpec::Relu => x.max(0.0),
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::Identity => 1.0,
            ActivationSpec::Tanh => {
                let c = x.cosh();
                1.0 / (c * c)
            }
            ActivationSpec::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationSpec::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationSpec::SmoothLeakyRelu { alpha, mu } => alpha + (1.0 - alpha) * std_normal_cdf(x / mu),
            ActivationSpec::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            ActivationSpec::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            ActivationSpec::SmoothLeakyRelu { alpha, mu } => (1.0 - alpha) * std_normal_pdf(x / mu) / mu,
            _ => 0.0,
        }
    }

    /// `σ̃⁻¹(y)`. Returns `None` outside the range or for non-invertible activations.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        match *self {
            ActivationSpec::Identity => Some(y),
            ActivationSpec::Tanh => (y.abs() < 1.0).then(|| y.atanh()),
            ActivationSpec::Sigmoid => (y > 0.0 && y < 1.0).then(|| (y / (1.0 - y)).ln()),
            ActivationSpec::LeakyRelu { slope } => Some(if y >= 0.0 { y } else { y / slope }),
            ActivationSpec::SmoothLeakyRelu { alpha, .. } => {
                // σ̃ lies above the leaky ReLU, so its inverse lies below it
                let (mut lo, mut hi) = if y >= 0.0 { (-1.0, y + 1.0) } else { (y / alpha - 1.0, y + 1.0) };
                while self.apply(lo) > y {
                    lo = 2.0 * lo - 1.0;
                }
                while self.apply(hi) < y {
                    hi = 2.0 * hi + 1.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.apply(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= BISECTION_TOL * (1.0 + mid.abs()) {
                        break;
                    }
                }
                Some(0.5 * (lo + hi))
            }
            ActivationSpec::Relu => None,
        }
    }

    /// `(σ̃⁻¹)′(y) = 1/σ̃′(σ̃⁻¹(y))`.
    pub fn inverse_derivative(&self, y: f64) -> Option<f64> {
        let x = self.inverse(y)?;
        let d = self.derivative(x);
        (d > 0.0).then(|| 1.0 / d)
    }

    /// Coordinatewise image of a box. All catalogue activations are nondecreasing.
    pub fn image(&self, domain: &DomainBox) -> Result<DomainBox> {
        domain.map_monotone(|x| self.apply(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Certified upper bound on `‖K_σ‖` with its per-coordinate factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanNormBound {
    /// `(∏ per_dimension_sup)^{1/2}`
    pub value: f64,
    /// Per coordinate, `sup |(σ̃⁻¹)′|` over the image interval.
    pub per_dimension_sup: Vec<f64>,
    /// The box the bound was certified on. `None` for domain-free bounds.
    pub domain_used: Option<DomainBox>,
}

impl KoopmanNormBound {
    fn from_factors(per_dimension_sup: Vec<f64>, domain_used: Option<DomainBox>) -> Self {
        // log-sum keeps wide layers from overflowing
        let value = (0.5 * per_dimension_sup.iter().map(|s| s.ln()).sum::<f64>()).exp();
        Self { value, per_dimension_sup, domain_used }
    }
}

/// `1/(1 - tanh²(x)) = cosh²(x)`, maximal at the endpoint of larger magnitude.
pub fn koopman_norm_tanh(domain_tilde: &DomainBox) -> KoopmanNormBound {
    let sups = domain_tilde
        .lower()
        .iter()
        .zip(domain_tilde.upper())
        .map(|(a, b)| {
            let c = a.abs().max(b.abs()).cosh();
            c * c
        })
        .collect();
    KoopmanNormBound::from_factors(sups, Some(domain_tilde.clone()))
}

/// `1/(y - y²)` at `y = σ(x)` equals `2 + 2cosh(x)`, maximal at the endpoint
/// farthest from zero.
pub fn koopman_norm_sigmoid(domain_tilde: &DomainBox) -> KoopmanNormBound {
    let sups = domain_tilde
        .lower()
        .iter()
        .zip(domain_tilde.upper())
        .map(|(a, b)| 2.0 + 2.0 * a.abs().max(b.abs()).cosh())
        .collect();
    KoopmanNormBound::from_factors(sups, Some(domain_tilde.clone()))
}

/// `max{1, a^{-d}}^{1/2}`, valid on all of `ℝ^d`.
pub fn koopman_norm_leaky_relu(slope: f64, d: usize) -> Result<KoopmanNormBound> {
    ActivationSpec::LeakyRelu { slope }.validate()?;
    Ok(KoopmanNormBound::from_factors(vec![(1.0 / slope).max(1.0); d], None))
}

/// `σ′` is increasing, so `1/σ′` over each interval peaks at its lower end.
pub fn koopman_norm_smooth_leaky_relu(
    activation: &ActivationSpec,
    domain_tilde: &DomainBox,
) -> Result<KoopmanNormBound> {
    activation.validate()?;
    if !matches!(activation, ActivationSpec::SmoothLeakyRelu { .. }) {
        return Err(Error::UnsupportedActivation(format!("{} is not a smooth leaky ReLU", activation.name())));
    }
    let sups = domain_tilde.lower().iter().map(|&a| 1.0 / activation.derivative(a)).collect();
    Ok(KoopmanNormBound::from_factors(sups, Some(domain_tilde.clone())))
}

/// Grid search for `sup |(σ̃⁻¹)′|` over each image interval, with the interval
/// endpoints evaluated exactly.
pub fn koopman_norm_generic(
    activation: &ActivationSpec,
    domain_tilde: &DomainBox,
    grid_density: usize,
) -> Result<KoopmanNormBound> {
    activation.validate()?;
    let n = grid_density.max(2);
    let mut sups = Vec::with_capacity(domain_tilde.dim());
    for (&a, &b) in domain_tilde.lower().iter().zip(domain_tilde.upper()) {
        let mut best = 1.0 / activation.derivative(a);
        best = best.max(1.0 / activation.derivative(b));
        let (ya, yb) = (activation.apply(a), activation.apply(b));
        for k in 1..n - 1 {
            let y = ya + (yb - ya) * k as f64 / (n - 1) as f64;
            if let Some(g) = activation.inverse_derivative(y) {
                best = best.max(g);
            }
        }
        if !best.is_finite() {
            return Err(Error::UnsupportedActivation(format!(
                "{} has an unbounded inverse derivative on [{a}, {b}]",
                activation.name()
            )));
        }
        sups.push(best);
    }
    Ok(KoopmanNormBound::from_factors(sups, Some(domain_tilde.clone())))
}

/// Dispatches to the closed form when one exists.
pub fn koopman_norm(activation: &ActivationSpec, domain_tilde: &DomainBox) -> Result<KoopmanNormBound> {
    activation.validate()?;
    match *activation {
        ActivationSpec::Identity => {
            Ok(KoopmanNormBound::from_factors(vec![1.0; domain_tilde.dim()], Some(domain_tilde.clone())))
        }
        ActivationSpec::Tanh => Ok(koopman_norm_tanh(domain_tilde)),
        ActivationSpec::Sigmoid => Ok(koopman_norm_sigmoid(domain_tilde)),
        ActivationSpec::LeakyRelu { slope } => koopman_norm_leaky_relu(slope, domain_tilde.dim()),
        ActivationSpec::SmoothLeakyRelu { .. } => koopman_norm_smooth_leaky_relu(activation, domain_tilde),
        ActivationSpec::Relu => unreachable!("rejected by validate"),
    }
}

/// Composition with a translation is unitary on `L²(ℝ^d)`.
pub fn shift_koopman_norm() -> f64 {
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn cube(d: usize, lo: f64, hi: f64) -> DomainBox {
        DomainBox::cube(d, lo, hi).unwrap()
    }

    fn grid_sup(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        (0..=n).map(|k| f(a + (b - a) * k as f64 / n as f64)).fold(f64::MIN, f64::max)
    }

    #[test]
    fn tanh_examples() {
        let one = 1f64.cosh();
        assert_relative_eq!(koopman_norm_tanh(&cube(1, -1.0, 1.0)).value, one, epsilon = 1e-14);
        assert_eq!(koopman_norm_tanh(&cube(1, 0.0, 0.0)).value, 1.0);
        assert_relative_eq!(koopman_norm_tanh(&cube(2, -1.0, 1.0)).value, one * one, epsilon = 1e-14);
        assert!((koopman_norm_tanh(&cube(2, -1.0, 1.0)).value - 2.3811).abs() < 1e-4);
        // oracle: sup of 1/(1-y²) over a fine grid of tanh([-1,1])
        let s = grid_sup(|y| 1.0 / (1.0 - y * y), -1f64.tanh(), 1f64.tanh(), 100_000);
        assert_relative_eq!(koopman_norm_tanh(&cube(1, -1.0, 1.0)).value, s.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn sigmoid_examples() {
        assert_relative_eq!(koopman_norm_sigmoid(&cube(1, 0.0, 0.0)).value, 2.0, epsilon = 1e-15);
        assert_relative_eq!(koopman_norm_sigmoid(&cube(2, 0.0, 0.0)).value, 4.0, epsilon = 1e-15);
        let v = koopman_norm_sigmoid(&cube(1, -1.0, 1.0)).value;
        let s = grid_sup(|y| 1.0 / (y - y * y), sigmoid(-1.0), sigmoid(1.0), 100_000);
        assert_relative_eq!(v, s.sqrt(), epsilon = 1e-9);
        assert!((v - 2.2553).abs() < 1e-4);
    }

    #[test]
    fn leaky_relu_examples() {
        assert_eq!(koopman_norm_leaky_relu(1.0, 7).unwrap().value, 1.0);
        assert_relative_eq!(koopman_norm_leaky_relu(0.5, 3).unwrap().value, 8f64.sqrt(), epsilon = 1e-14);
        assert_eq!(koopman_norm_leaky_relu(2.0, 4).unwrap().value, 1.0);
        assert!(koopman_norm_leaky_relu(0.0, 1).is_err());
        assert!(koopman_norm_leaky_relu(-1.0, 1).is_err());
    }

    #[test]
    fn generic_examples() {
        let g = koopman_norm_generic(&ActivationSpec::Tanh, &cube(1, -1.0, 1.0), DEFAULT_GRID).unwrap();
        assert!((g.value - 1f64.cosh()).abs() < 1e-6);
        let g = koopman_norm_generic(&ActivationSpec::Identity, &cube(3, -4.0, 2.0), DEFAULT_GRID).unwrap();
        assert_eq!(g.value, 1.0);
        let g = koopman_norm_generic(&ActivationSpec::smooth_leaky_relu(), &cube(1, -2.0, 2.0), DEFAULT_GRID).unwrap();
        assert!(g.value >= 1.0 && g.value <= 1.0 / 0.1f64.sqrt());
        assert!(matches!(
            koopman_norm_generic(&ActivationSpec::Relu, &cube(1, -1.0, 1.0), DEFAULT_GRID),
            Err(Error::UnsupportedActivation(_))
        ));
    }

    #[test]
    fn shift_is_neutral() {
        assert_eq!(shift_koopman_norm(), 1.0);
        let t = koopman_norm_tanh(&cube(1, -1.0, 1.0)).value;
        assert_eq!(t * shift_koopman_norm(), t);
        assert_eq!((0..5).fold(t, |acc, _| acc * shift_koopman_norm()), t);
    }

    #[test]
    fn smooth_leaky_relu_shape() {
        let s = ActivationSpec::smooth_leaky_relu();
        for k in -40..=40 {
            let x = k as f64 * 0.25;
            let d = s.derivative(x);
            assert!((0.1..=1.0).contains(&d));
            // finite-difference check of both derivatives
            let h = 1e-5;
            assert_abs_diff_eq!((s.apply(x + h) - s.apply(x - h)) / (2.0 * h), d, epsilon = 1e-8);
            assert_abs_diff_eq!(
                (s.derivative(x + h) - s.derivative(x - h)) / (2.0 * h),
                s.second_derivative(x),
                epsilon = 1e-8
            );
            let back = s.inverse(s.apply(x)).unwrap();
            assert_abs_diff_eq!(back, x, epsilon = 1e-10);
        }
        // far tails approach the two linear pieces
        assert_abs_diff_eq!(s.apply(20.0), 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.apply(-20.0), -2.0, epsilon = 1e-9);
    }

    #[test]
    fn serde_forms() {
        let a: ActivationSpec = serde_json::from_str(r#"{"kind":"tanh"}"#).unwrap();
        assert_eq!(a, ActivationSpec::Tanh);
        let a: ActivationSpec = serde_json::from_str(r#"{"kind":"leaky_relu","params":{"slope":0.5}}"#).unwrap();
        assert_eq!(a, ActivationSpec::LeakyRelu { slope: 0.5 });
        let a: ActivationSpec = serde_json::from_str(r#"{"kind":"smooth_leaky_relu","params":{}}"#).unwrap();
        assert_eq!(a, ActivationSpec::smooth_leaky_relu());
    }

    fn random_box(d: usize) -> impl Strategy<Value = DomainBox> {
        proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), d).prop_map(|v| {
            let lo = v.iter().map(|(a, b)| a.min(*b)).collect();
            let hi = v.iter().map(|(a, b)| a.max(*b)).collect();
            DomainBox::new(lo, hi).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn enlarging_the_domain_never_decreases_the_bound(
            inner in (1usize..=3).prop_flat_map(random_box),
            grow in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3),
        ) {
            let d = inner.dim();
            let outer = DomainBox::new(
                (0..d).map(|i| inner.lower()[i] - grow[i].0).collect(),
                (0..d).map(|i| inner.upper()[i] + grow[i].1).collect(),
            ).unwrap();
            prop_assert!(koopman_norm_tanh(&outer).value >= koopman_norm_tanh(&inner).value);
            prop_assert!(koopman_norm_sigmoid(&outer).value >= koopman_norm_sigmoid(&inner).value);
        }

        #[test]
        fn generic_agrees_with_closed_forms(b in (1usize..=3).prop_flat_map(random_box)) {
            for (act, closed) in [
                (ActivationSpec::Tanh, koopman_norm_tanh(&b)),
                (ActivationSpec::Sigmoid, koopman_norm_sigmoid(&b)),
                (
                    ActivationSpec::smooth_leaky_relu(),
                    koopman_norm_smooth_leaky_relu(&ActivationSpec::smooth_leaky_relu(), &b).unwrap(),
                ),
            ] {
                let g = koopman_norm_generic(&act, &b, DEFAULT_GRID).unwrap();
                prop_assert!((g.value - closed.value).abs() <= 1e-4 * closed.value);
            }
        }
    }
}
