//! Monte-Carlo integration with standard errors, and the numerical checks
//! built on it.
//!
//! Every estimate is a pure function of its [`McConfig`] and stream name.
//! Samples are drawn in fixed-size chunks, each from its own ChaCha stream,
//! and chunk statistics are merged in index order. The result is therefore
//! bit-identical regardless of how many threads rayon uses.

mod gram;
mod lemma;
mod rademacher;
mod report;

pub use gram::{gram, isometry_check, random_affine_tuples, GramMatrix, IsometryResidual, ParamTuple};
pub use lemma::{koopman_lemma_check, leaky_relu_tightness, norm_ratio, LemmaCheck, NormRatio, TestFunction};
pub use rademacher::{
    candidate_values, empirical_rademacher, rademacher_from_values, RademacherEstimate, RademacherMode,
};
pub use report::{CheckResult, VerificationReport};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::DomainBox;
use crate::rng;

/// Samples per chunk. Part of the determinism contract: changing it changes
/// every estimate.
const CHUNK: usize = 1024;

pub const MIN_SAMPLES: usize = 100;

/// Sampling distribution for importance-sampled integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    UniformBox {
        domain: DomainBox,
    },
    /// Density `(c/π)^{d/2} exp(-c‖y - center‖²)`, i.e. variance `1/(2c)` per axis.
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
    /// Equal-weight mixture of isotropic Gaussians given as `(center, std)`.
    Mixture {
        components: Vec<(Vec<f64>, f64)>,
    },
}

impl Proposal {
    pub fn dim(&self) -> usize {
        match self {
            Proposal::UniformBox { domain } => domain.dim(),
            Proposal::Gaussian { center, .. } => center.len(),
            Proposal::Mixture { components } => components.first().map_or(0, |c| c.0.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Proposal::UniformBox { domain } => {
                if !(domain.volume() > 0.0) {
                    return Err(Error::Degenerate("uniform proposal on a zero-volume box".into()));
                }
            }
            Proposal::Gaussian { center, width } => {
                if !(*width > 0.0 && width.is_finite()) || center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Degenerate(format!("gaussian proposal with width {width}")));
                }
            }
            Proposal::Mixture { components } => {
                let d = self.dim();
                if components.is_empty() || components.iter().any(|(c, s)| c.len() != d || !(*s > 0.0 && s.is_finite()))
                {
                    return Err(Error::Degenerate("empty or malformed mixture proposal".into()));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Proposal::UniformBox { domain } => {
                for ((o, a), b) in out.iter_mut().zip(domain.lower()).zip(domain.upper()) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
            }
            Proposal::Gaussian { center, width } => {
                let s = (0.5 / width).sqrt();
                for (o, c) in out.iter_mut().zip(center) {
                    *o = c + s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Proposal::Mixture { components } => {
                let (c, s) = &components[rng.random_range(0..components.len())];
                for (o, m) in out.iter_mut().zip(c) {
                    *o = m + s * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }

    /// Proposal density at `y`.
    pub fn density(&self, y: &[f64]) -> f64 {
        match self {
            Proposal::UniformBox { domain } => {
                if domain.contains(y) {
                    1.0 / domain.volume()
                } else {
                    0.0
                }
            }
            Proposal::Gaussian { center, width } => {
                let r2: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (width / PI).powf(0.5 * y.len() as f64) * (-width * r2).exp()
            }
            Proposal::Mixture { components } => {
                let d = y.len() as f64;
                components
                    .iter()
                    .map(|(c, s)| {
                        let r2: f64 = y.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                        (2.0 * PI * s * s).powf(-0.5 * d) * (-0.5 * r2 / (s * s)).exp()
                    })
                    .sum::<f64>()
                    / components.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub sample_count: usize,
    pub root_seed: u64,
    pub proposal: Proposal,
}

impl McConfig {
    pub fn uniform(sample_count: usize, root_seed: u64, domain: DomainBox) -> Self {
        Self { sample_count, root_seed, proposal: Proposal::UniformBox { domain } }
    }

    pub fn gaussian(sample_count: usize, root_seed: u64, center: Vec<f64>, width: f64) -> Self {
        Self { sample_count, root_seed, proposal: Proposal::Gaussian { center, width } }
    }

    pub fn with_proposal(&self, proposal: Proposal) -> Self {
        Self { proposal, ..self.clone() }
    }

    pub fn with_seed(&self, root_seed: u64) -> Self {
        Self { root_seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < MIN_SAMPLES {
            return Err(Error::Parameter(format!(
                "sample_count must be at least {MIN_SAMPLES}, got {}",
                self.sample_count
            )));
        }
        self.proposal.validate()
    }
}

/// Monte-Carlo estimate of a real integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Seed of the stream the samples came from.
    pub seed: u64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, samples: 0, seed: 0 }
    }

    /// `|self - target| ≤ k · stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Monte-Carlo estimate of a complex integral. `stderr` combines both parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMcEstimate {
    pub value: Complex64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ComplexMcEstimate {
    fn from_parts(re: McEstimate, im: McEstimate) -> Self {
        Self {
            value: Complex64::new(re.value, im.value),
            stderr: re.stderr.hypot(im.stderr),
            samples: re.samples,
            seed: re.seed,
        }
    }
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Estimates `∫ g_j(y) dy` for `j < k` from shared samples of the proposal.
///
/// `f(y, out)` writes the `k` integrand values at `y`. The samples for a given
/// `(config, stream)` pair are always the same, which is what makes paired
/// differences between estimates low-variance.
pub fn integrate_many<F>(config: &McConfig, stream: &str, k: usize, f: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    config.validate()?;
    let seed = rng::stream_seed(config.root_seed, stream);
    let d = config.proposal.dim();
    let n = config.sample_count;
    let chunks = n.div_ceil(CHUNK);
    let per_chunk: Vec<(Vec<Moments>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::substream(seed, c as u64);
            let mut y = vec![0.0; d];
            let mut g = vec![0.0; k];
            let mut m = vec![Moments::default(); k];
            let mut empty = 0;
            let count = CHUNK.min(n - c * CHUNK);
            for _ in 0..count {
                config.proposal.sample(&mut r, &mut y);
                f(&y, &mut g);
                let q = config.proposal.density(&y);
                if g.iter().all(|v| v.abs() < 1e-12) {
                    empty += 1;
                }
                for (mj, gj) in m.iter_mut().zip(&g) {
                    mj.push(if *gj == 0.0 { 0.0 } else { gj / q });
                }
            }
            (m, empty)
        })
        .collect();

    let mut total = vec![Moments::default(); k];
    let mut empty = 0;
    for (m, e) in per_chunk {
        empty += e;
        for (t, mj) in total.iter_mut().zip(m) {
            *t = t.merge(mj);
        }
    }
    if k > 0 && empty * 100 > n {
        log::warn!(
            "stream {stream}: {:.1}% of samples fell where every integrand is below 1e-12",
            100.0 * empty as f64 / n as f64
        );
    }
    total
        .iter()
        .map(|m| {
            if !m.mean.is_finite() {
                return Err(Error::Degenerate(format!("stream {stream}: non-finite estimate")));
            }
            Ok(McEstimate { value: m.mean, stderr: m.stderr(), samples: n, seed })
        })
        .collect()
}

/// `∫ g(y) dy` for a single real integrand.
pub fn integrate<F>(config: &McConfig, stream: &str, g: F) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(integrate_many(config, stream, 1, |y, out| out[0] = g(y))?[0])
}

/// `∫ g(y) dy` for a single complex integrand.
pub fn integrate_complex<F>(config: &McConfig, stream: &str, g: F) -> Result<ComplexMcEstimate>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let e = integrate_many(config, stream, 2, |y, out| {
        let v = g(y);
        out[0] = v.re;
        out[1] = v.im;
    })?;
    Ok(ComplexMcEstimate::from_parts(e[0], e[1]))
}

/// Importance-sampled `⟨f, g⟩ = ∫ f ḡ`.
pub fn l2_inner<F, G>(f: F, g: G, config: &McConfig) -> Result<ComplexMcEstimate>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
    G: Fn(&[f64]) -> Complex64 + Sync,
{
    integrate_complex(config, "l2_inner", |y| f(y) * g(y).conj())
}
