//! Empirical Rademacher complexity over a finite set of sampled candidates.
//!
//! The supremum over an infinite class is replaced by a maximum over `N`
//! candidates drawn inside the constraint set, so every estimate here is a
//! lower estimate of the true complexity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RademacherMode {
    /// Average over `M` random sign vectors.
    McSearch,
    /// Average over all `2^S` sign vectors (`S ≤ 16`).
    ExactEnumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Sign vectors averaged over.
    pub draws: usize,
    pub candidate_count: usize,
    pub mode: RademacherMode,
    pub seed: u64,
}

pub const MAX_EXACT_SAMPLES: usize = 16;

/// `max_n Σ_s F_n(x_s) ε_s / S`
fn sup_correlation(values: &[Vec<f64>], signs: &[f64]) -> f64 {
    let s = signs.len() as f64;
    values.iter().map(|row| row.iter().zip(signs).map(|(f, e)| f * e).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
        / s
}

/// Rademacher estimate from a table `values[n][s] = F_n(x_s)`.
///
/// Signs are real `±1` with probability 1/2 each. In exact mode `draws` is
/// ignored and the result carries zero stderr.
pub fn rademacher_from_values(
    values: &[Vec<f64>],
    draws: usize,
    mode: RademacherMode,
    seed: u64,
) -> Result<RademacherEstimate> {
    let s = values.first().map_or(0, Vec::len);
    if s == 0 {
        return Err(Error::Parameter("Rademacher complexity needs at least one input point".into()));
    }
    if values.iter().any(|r| r.len() != s) {
        return Err(Error::Dimension("candidate value rows differ in length".into()));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("candidate values"));
    }
    let n = values.len();
    match mode {
        RademacherMode::ExactEnumeration => {
            if s > MAX_EXACT_SAMPLES {
                return Err(Error::Parameter(format!(
                    "exact enumeration supports at most {MAX_EXACT_SAMPLES} points, got {s}"
                )));
            }
            let patterns = 1usize << s;
            let sups: Vec<f64> = (0..patterns)
                .into_par_iter()
                .map(|p| {
                    let signs: Vec<f64> = (0..s).map(|i| if p >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                    sup_correlation(values, &signs)
                })
                .collect();
            Ok(RademacherEstimate {
                value: sups.iter().sum::<f64>() / patterns as f64,
                stderr: 0.0,
                draws: patterns,
                candidate_count: n,
                mode,
                seed,
            })
        }
        RademacherMode::McSearch => {
            if draws < 2 {
                return Err(Error::Parameter("mc_search needs at least two sign draws".into()));
            }
            let sups: Vec<f64> = (0..draws)
                .into_par_iter()
                .map(|m| {
                    let mut g = rng::substream(seed, m as u64);
                    let signs: Vec<f64> = (0..s).map(|_| if g.random::<bool>() { 1.0 } else { -1.0 }).collect();
                    sup_correlation(values, &signs)
                })
                .collect();
            let mean = sups.iter().sum::<f64>() / draws as f64;
            let var = sups.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
            Ok(RademacherEstimate {
                value: mean,
                stderr: (var / draws as f64).sqrt(),
                draws,
                candidate_count: n,
                mode,
                seed,
            })
        }
    }
}

/// Draws `candidates` members of a class and estimates its empirical
/// Rademacher complexity on `inputs`.
///
/// `sampler(rng, inputs)` draws one candidate from the constrained class and
/// returns its values at every input. Candidate `n` is drawn from its own
/// sub-stream, so the table does not depend on the thread count.
pub fn empirical_rademacher<F>(
    sampler: F,
    inputs: &[Vec<f64>],
    draws: usize,
    candidates: usize,
    mode: RademacherMode,
    root_seed: u64,
) -> Result<RademacherEstimate>
where
    F: Fn(&mut ChaCha8Rng, &[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    if inputs.is_empty() {
        return Err(Error::Parameter("Rademacher complexity needs at least one input point".into()));
    }
    if candidates == 0 {
        return Err(Error::Parameter("need at least one candidate".into()));
    }
    let values = candidate_values(&sampler, inputs, candidates, root_seed)?;
    rademacher_from_values(&values, draws, mode, rng::stream_seed(root_seed, "rademacher/signs"))
}

/// The table `F_n(x_s)` used by [`empirical_rademacher`].
pub fn candidate_values<F>(sampler: &F, inputs: &[Vec<f64>], candidates: usize, root_seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut ChaCha8Rng, &[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    let seed = rng::stream_seed(root_seed, "rademacher/candidates");
    (0..candidates).into_par_iter().map(|n| sampler(&mut rng::substream(seed, n as u64), inputs)).collect()
}
