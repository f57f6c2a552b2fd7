//! Verification suites behind `verify`: Koopman-norm lemmas, kernel Gram
//! matrices, and Rademacher estimates against the bounds.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::str::FromStr;

use crate::activation::{koopman_norm, ActivationSpec};
use crate::bounds::{bound_thm1, bound_thm2, BoundConfig};
use crate::error::{Error, Result};
use crate::linalg::{determinant, DomainBox, Matrix};
use crate::mc::{
    candidate_values, gram, integrate, isometry_check, koopman_lemma_check, l2_inner, leaky_relu_tightness,
    rademacher_from_values, random_affine_tuples, CheckResult, McConfig, RademacherMode, VerificationReport,
};
use crate::network::{
    regularized_forward, DomainMode, FinalTransform, LayerSpec, ModelFlavor, NetworkSpec, Normalization, Regularizer,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Gram,
    Rademacher,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemmas" => Ok(Suite::Lemmas),
            "gram" => Ok(Suite::Gram),
            "rademacher" => Ok(Suite::Rademacher),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown suite `{other}` (lemmas, gram, rademacher, all)"))),
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<VerificationReport> {
    match suite {
        Suite::Lemmas => lemma_suite(seed),
        Suite::Gram => gram_suite(seed),
        Suite::Rademacher => rademacher_suite(seed, &RademacherSetup::default()),
        Suite::All => {
            let mut r = lemma_suite(seed)?;
            r.extend(gram_suite(seed)?);
            r.extend(rademacher_suite(seed, &RademacherSetup::default())?);
            Ok(r)
        }
    }
}

/// Activations exercised by the lemma suite.
pub fn lemma_activations() -> Vec<ActivationSpec> {
    vec![
        ActivationSpec::Tanh,
        ActivationSpec::Sigmoid,
        ActivationSpec::LeakyRelu { slope: 0.1 },
        ActivationSpec::LeakyRelu { slope: 0.5 },
        ActivationSpec::LeakyRelu { slope: 2.0 },
        ActivationSpec::SmoothLeakyRelu { alpha: 0.1, mu: 0.5 },
    ]
}

fn act_label(a: &ActivationSpec) -> String {
    match a {
        ActivationSpec::LeakyRelu { slope } => format!("leaky_relu({slope})"),
        ActivationSpec::SmoothLeakyRelu { alpha, mu } => format!("smooth_leaky_relu({alpha},{mu})"),
        other => other.name().to_string(),
    }
}

/// 200 random test functions per activation and dimension `d ≤ 3` on
/// `X̃ = [-1.5, 1]^d`, plus the leaky-ReLU tightness witnesses.
pub fn lemma_suite(seed: u64) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(seed);
    let mc = McConfig::uniform(4000, seed, DomainBox::cube(1, 0.0, 1.0)?);
    for act in lemma_activations() {
        for d in 1..=3 {
            let domain = DomainBox::cube(d, -1.5, 1.0)?;
            let bound = koopman_norm(&act, &domain)?;
            let c = koopman_lemma_check(&act, &domain, &bound, 200, &mc)?;
            report.push(
                CheckResult::at_most(
                    format!("lemma {} d={d}: ratios above bound + 3 se", act_label(&act)),
                    c.failures as f64,
                    0.0,
                    c.seed,
                )
                .with_detail(format!("max ratio {:.6} vs bound {:.6}, max z {:.3}", c.max_ratio, c.bound, c.max_z)),
            );
        }
    }
    let wmc = McConfig { sample_count: 20_000, ..mc.clone() };
    for slope in [0.1, 0.5] {
        for d in 1..=3 {
            let r = leaky_relu_tightness(slope, d, &wmc)?;
            let bound = slope.powf(-(d as f64) / 2.0);
            report.push(
                CheckResult::at_least(
                    format!("leaky_relu({slope}) d={d}: witness ratio"),
                    r.ratio,
                    0.95 * bound,
                    wmc.root_seed,
                )
                .with_detail(format!("bound {bound:.6}, stderr {:.2e}", r.stderr)),
            );
        }
    }
    Ok(report)
}

/// AffineScaled tanh template on `d = 2`, `L = 2`.
pub fn gram_template() -> Result<NetworkSpec> {
    NetworkSpec::new(
        ModelFlavor::AffineScaled,
        DomainBox::symmetric(2, 1.0)?,
        vec![
            LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
}

pub const GRAM_SAMPLES: usize = 200_000;

/// Gram PSD and Hermitian checks for 8 affine tuples, the isometry between
/// combinations and kernel values, and the Gaussian-overlap oracle.
pub fn gram_suite(seed: u64) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(seed);
    let template = gram_template()?;
    let tuples = random_affine_tuples(8, 2, 2, 0.25, rng::stream_seed(seed, "suite/gram"));
    let mc = McConfig::uniform(GRAM_SAMPLES, seed, DomainBox::symmetric(2, 2.0)?);
    let g = gram(&template, &tuples, &mc)?;
    let trace = g.trace();
    report.push(CheckResult::at_most(
        "gram n=8: max Hermitian asymmetry (stderr units)",
        g.max_asymmetry_z,
        3.0,
        g.seed,
    ));
    report.push(
        CheckResult::at_least("gram n=8: min eigenvalue", g.min_eigenvalue()?, -1e-3 * trace, g.seed)
            .with_detail(format!("trace {trace:.6}")),
    );
    report.push(CheckResult::at_most(
        "gram n=8: Cauchy-Schwarz violations beyond 3 se",
        g.cauchy_schwarz_violations(3.0).len() as f64,
        0.0,
        g.seed,
    ));
    let min_diag = (0..g.len()).map(|i| g.entries[i][i].re).fold(f64::INFINITY, f64::min);
    report.push(CheckResult::at_least("gram n=8: min diagonal", min_diag, 0.0, g.seed));

    let mut cg = rng::stream(seed, "suite/isometry");
    let coeffs: Vec<Complex64> =
        (0..3).map(|_| Complex64::new(cg.random_range(-1.0..1.0), cg.random_range(-1.0..1.0))).collect();
    let iso = isometry_check(&template, &tuples[..3], &coeffs, &tuples[3], &mc, true)?;
    let z = (iso.inner / iso.inner_stderr).max(iso.norm / iso.norm_stderr);
    report.push(
        CheckResult::at_most("isometry: combination vs kernel residual (stderr units)", z, 3.0, seed).with_detail(
            format!(
                "inner {:.3e} ± {:.1e}, norm {:.3e} ± {:.1e}",
                iso.inner, iso.inner_stderr, iso.norm, iso.norm_stderr
            ),
        ),
    );

    let mut og = rng::stream(seed, "suite/overlap");
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| og.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..2).map(|_| og.random_range(-1.0..1.0)).collect();
        let err =
            gaussian_overlap_error(&x, &y, 1.0, GRAM_SAMPLES, rng::stream_seed(seed, &format!("suite/overlap/{k}")))?;
        worst = worst.max(err);
    }
    report.push(CheckResult::at_most("overlap <p_1x, p_1y> vs exp(-|x-y|^2/2): max abs error", worst, 1e-2, seed));
    Ok(report)
}

/// `|⟨p_{c,x}, p_{c,y}⟩_MC - e^{-c‖x-y‖²/2}|` with a Gaussian proposal of
/// width `c` at the midpoint.
pub fn gaussian_overlap_error(x: &[f64], y: &[f64], c: f64, samples: usize, seed: u64) -> Result<f64> {
    let px = Regularizer::new(x.to_vec(), c, Normalization::UnitL2)?;
    let py = Regularizer::new(y.to_vec(), c, Normalization::UnitL2)?;
    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    let cfg = McConfig::gaussian(samples, seed, mid, c);
    let e = l2_inner(|z| Complex64::new(px.eval(z), 0.0), |z| Complex64::new(py.eval(z), 0.0), &cfg)?;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((e.value - Complex64::new((-c * d2 / 2.0).exp(), 0.0)).norm())
}

/// Parameters of the Rademacher necessity check.
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherSetup {
    pub sample_size: usize,
    pub cap: f64,
    pub candidates: usize,
    pub draws: usize,
    /// Regularizer width `c` of `p_{c,x}`.
    pub width: f64,
    /// Monte-Carlo samples per value `F(x_s)`.
    pub inner_samples: usize,
    /// Declared `X̃_l = [-R, R]^2`, large enough for every candidate.
    pub box_radius: f64,
    pub exact_sample_size: usize,
    pub exact_mc_draws: usize,
    /// Random parameter tuples in the direct norm check.
    pub norm_checks: usize,
}

impl Default for RademacherSetup {
    fn default() -> Self {
        Self {
            sample_size: 50,
            cap: 2.0,
            candidates: 1000,
            draws: 200,
            width: 1.0,
            inner_samples: 256,
            box_radius: 3.5,
            exact_sample_size: 8,
            exact_mc_draws: 4000,
            norm_checks: 50,
        }
    }
}

impl RademacherSetup {
    fn input_domain(&self) -> DomainBox {
        DomainBox::symmetric(2, 1.0).expect("valid")
    }

    fn tilde(&self) -> DomainBox {
        DomainBox::symmetric(2, self.box_radius).expect("valid")
    }

    /// Gated `d = 2`, `L = 2` tanh network with the common declared boxes.
    pub fn network(&self, flavor: ModelFlavor, params: &[(Matrix, Vec<f64>)]) -> Result<NetworkSpec> {
        let tilde = self.tilde();
        let post = ActivationSpec::Tanh.image(&tilde)?;
        NetworkSpec::new(
            flavor,
            self.input_domain(),
            vec![
                LayerSpec::dense(params[0].0.clone(), params[0].1.clone(), Some(ActivationSpec::Tanh))
                    .with_domains(tilde.clone(), post),
                LayerSpec::dense(params[1].0.clone(), params[1].1.clone(), None).with_domains(tilde.clone(), tilde),
            ],
            FinalTransform::gaussian_bump(1.0),
            DomainMode::Tight,
        )
    }

    /// A parameter tuple inside the constraint set: `|det W_l|^{-1/2} ≤ D`,
    /// entries in `[-1.5, 1.5]`, biases in `[-0.5, 0.5]`.
    pub fn draw_parameters(&self, g: &mut ChaCha8Rng) -> Vec<(Matrix, Vec<f64>)> {
        let min_det = self.cap.powi(-2);
        (0..2)
            .map(|_| loop {
                let w = Matrix::from_vec(2, 2, (0..4).map(|_| g.random_range(-1.5..1.5)).collect()).expect("2x2");
                if determinant(&w).is_ok_and(|d| d.abs() >= min_det) {
                    break (w, (0..2).map(|_| g.random_range(-0.5..0.5)).collect());
                }
            })
            .collect()
    }

    /// `F(x_s) = ⟨f(g), p_{c,x_s}⟩`, optionally rescaled by `∏|det W_l|^{1/2}`.
    fn values(&self, g: &mut ChaCha8Rng, inputs: &[Vec<f64>], scaled: bool) -> Result<Vec<f64>> {
        let params = self.draw_parameters(g);
        let spec = self.network(ModelFlavor::General, &params)?;
        let scale = if scaled { det_scale(&params)? } else { 1.0 };
        let seed: u64 = g.random();
        inputs
            .iter()
            .map(|x| {
                let p = Regularizer::new(x.clone(), self.width, Normalization::UnitL2)?;
                Ok(scale * regularized_forward(&spec, &p, &p.matched_proposal(self.inner_samples, seed))?.value.re)
            })
            .collect()
    }
}

fn det_scale(params: &[(Matrix, Vec<f64>)]) -> Result<f64> {
    params.iter().try_fold(1.0, |acc, (w, _)| Ok(acc * determinant(w)?.abs().sqrt()))
}

/// Empirical Rademacher complexity of the regularized class against
/// thm1 and thm2, exact enumeration against the Monte-Carlo search, and a
/// direct check of `‖f(g)‖` against the thm1 constant.
pub fn rademacher_suite(seed: u64, setup: &RademacherSetup) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(seed);
    let mut ig = rng::stream(seed, "suite/rademacher/inputs");
    let x0 = setup.input_domain();
    let inputs: Vec<Vec<f64>> =
        (0..setup.sample_size).map(|_| x0.from_unit(&(0..2).map(|_| ig.random()).collect::<Vec<f64>>())).collect();

    // bound constants from a representative of the class
    let identity = vec![(Matrix::identity(2), vec![0.0; 2]); 2];
    let rep = setup.network(ModelFlavor::AffineScaled, &identity)?;
    let cfg = BoundConfig::new(setup.sample_size).with_cap(setup.cap).with_seed(seed);
    let t2 = bound_thm2(&rep, &cfg)?;
    let thm2_cap = t2.value_at_cap.expect("finite cap");
    let a1 = t2.per_layer[0].koopman_norm;
    let t1 = bound_thm1(&[a1], t2.v_norm, setup.sample_size)?;

    let plain = |g: &mut ChaCha8Rng, xs: &[Vec<f64>]| setup.values(g, xs, false);
    let scaled = |g: &mut ChaCha8Rng, xs: &[Vec<f64>]| setup.values(g, xs, true);
    let sign_seed = rng::stream_seed(seed, "rademacher/signs");

    let table = candidate_values(&plain, &inputs, setup.candidates, rng::stream_seed(seed, "suite/nn_c"))?;
    let est = rademacher_from_values(&table, setup.draws, RademacherMode::McSearch, sign_seed)?;
    report.push(
        CheckResult::at_most("rademacher NN_c: empirical <= thm2 bound", est.value, thm2_cap, est.seed).with_detail(
            format!(
                "empirical {:.6e} ± {:.1e} (N={}, M={}, S={}), thm2 {:.6e} at D={}",
                est.value, est.stderr, est.candidate_count, est.draws, setup.sample_size, thm2_cap, setup.cap
            ),
        ),
    );

    let table_f = candidate_values(&scaled, &inputs, setup.candidates, rng::stream_seed(seed, "suite/f_c"))?;
    let est_f = rademacher_from_values(&table_f, setup.draws, RademacherMode::McSearch, sign_seed)?;
    report.push(
        CheckResult::at_most("rademacher F_c: empirical <= thm1 bound", est_f.value, t1.value, est_f.seed)
            .with_detail(format!("empirical {:.6e} ± {:.1e}, thm1 {:.6e}", est_f.value, est_f.stderr, t1.value)),
    );

    let s8: Vec<Vec<f64>> = table.iter().map(|r| r[..setup.exact_sample_size].to_vec()).collect();
    let exact = rademacher_from_values(&s8, 0, RademacherMode::ExactEnumeration, sign_seed)?;
    let mc = rademacher_from_values(&s8, setup.exact_mc_draws, RademacherMode::McSearch, sign_seed)?;
    let rel = (mc.value - exact.value).abs() / exact.value.abs().max(f64::MIN_POSITIVE);
    report.push(
        CheckResult::at_most(
            format!("rademacher S={}: |mc - exact| / exact", setup.exact_sample_size),
            rel,
            0.05,
            sign_seed,
        )
        .with_detail(format!("mc {:.6e} ± {:.1e}, exact {:.6e}", mc.value, mc.stderr, exact.value)),
    );

    // ‖f(g)‖ for the rescaled class never exceeds ‖A_1‖‖v‖
    let mut ng = rng::stream(seed, "suite/norms");
    let limit = a1 * t2.v_norm;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..setup.norm_checks {
        let params = setup.draw_parameters(&mut ng);
        let spec = setup.network(ModelFlavor::General, &params)?;
        let s2 = det_scale(&params)?.powi(2);
        let ncfg = McConfig::uniform(20_000, rng::stream_seed(seed, &format!("suite/norms/{k}")), x0.clone());
        let e = integrate(&ncfg, "norm", |x| s2 * spec.eval_or_nan(x).norm_sqr())?;
        let norm = e.value.max(0.0).sqrt();
        let se = e.stderr / (2.0 * norm.max(f64::MIN_POSITIVE));
        worst = worst.max(norm - 3.0 * se);
    }
    report.push(
        CheckResult::at_most("rescaled ||f(g)|| - 3 se <= ||A_1|| ||v||", worst, limit, seed)
            .with_detail(format!("{} random tuples", setup.norm_checks)),
    );
    Ok(report)
}
