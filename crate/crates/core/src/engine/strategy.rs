//! Negative-pair selection strategies over the queue.
//!
//! All strategies reduce to a list of (embedding, weight) terms consumed by
//! the InfoNCE denominator:
//! - `Default`: every queue entry, weight 1.
//! - `SameLateralityOnly`: only entries sharing the query's laterality.
//! - `Reweighted { target }`: every entry, with same-laterality entries
//!   weighted t/r and the rest (1-t)/(1-r), where r is the same-laterality
//!   fraction of the queue. The same-laterality share of the total weight is
//!   then exactly t.
//! - `Appended { m }`: every entry plus a random sample of m same-laterality
//!   entries appended (duplicated), all weight 1.
//! - `Synthetic { m }`: as `Appended`, plus m synthetic embeddings, each the
//!   normalized convex combination u*s_i + (1-u)*s_j of a random pair from
//!   the appended sample.
//!
//! The append-style strategies are per-query and temporary: the queue itself
//! is never modified here.

use std::borrow::Cow;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::Laterality;
use crate::error::{Error, Result};

use super::net::l2_norm;
use super::queue::NegativeQueue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum NegativeStrategy {
    Default,
    SameLateralityOnly,
    Reweighted { target: f64 },
    Appended { m: usize },
    Synthetic { m: usize },
}

impl NegativeStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            NegativeStrategy::Reweighted { target } => {
                if !(*target > 0.0 && *target < 1.0) {
                    return Err(Error::config("strategy.target", "must be in (0, 1)"));
                }
            }
            NegativeStrategy::Appended { m } | NegativeStrategy::Synthetic { m } => {
                if *m == 0 {
                    return Err(Error::config("strategy.m", "must be >= 1"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            NegativeStrategy::Default => "default",
            NegativeStrategy::SameLateralityOnly => "same-laterality-only",
            NegativeStrategy::Reweighted { .. } => "reweighted",
            NegativeStrategy::Appended { .. } => "appended",
            NegativeStrategy::Synthetic { .. } => "synthetic",
        }
    }
}

/// Negative terms for one query's loss evaluation.
pub struct NegativeSet<'a> {
    pub terms: Vec<(Cow<'a, [f64]>, f64)>,
    /// True when an append-style strategy found no same-laterality entries
    /// and fell back to `Default`.
    pub fell_back: bool,
}

/// Normalized convex combination of two embeddings.
pub fn synth_combine(s_i: &[f64], s_j: &[f64], u: f64) -> Vec<f64> {
    let mut h: Vec<f64> = s_i
        .iter()
        .zip(s_j)
        .map(|(a, b)| u * a + (1.0 - u) * b)
        .collect();
    let norm = l2_norm(&h);
    if norm < 1e-12 {
        // antipodal pair at u = 0.5; keep one endpoint instead
        return s_i.to_vec();
    }
    for v in &mut h {
        *v /= norm;
    }
    h
}

fn default_terms(queue: &NegativeQueue) -> Vec<(Cow<'_, [f64]>, f64)> {
    queue
        .iter()
        .map(|e| (Cow::Borrowed(e.embedding.as_slice()), 1.0))
        .collect()
}

/// Materializes the weighted negative terms for one query.
pub fn negative_terms<'a>(
    queue: &'a NegativeQueue,
    query_laterality: Laterality,
    strategy: &NegativeStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<NegativeSet<'a>> {
    strategy.validate()?;
    let same: Vec<&'a [f64]> = queue
        .iter()
        .filter(|e| e.laterality == query_laterality)
        .map(|e| e.embedding.as_slice())
        .collect();

    let set = match strategy {
        NegativeStrategy::Default => NegativeSet {
            terms: default_terms(queue),
            fell_back: false,
        },
        NegativeStrategy::SameLateralityOnly => NegativeSet {
            terms: same
                .iter()
                .map(|&z| (Cow::Borrowed(z), 1.0))
                .collect(),
            fell_back: false,
        },
        NegativeStrategy::Reweighted { target } => {
            let total = queue.len();
            let n_same = same.len();
            if total == 0 || n_same == 0 || n_same == total {
                return Err(Error::DegenerateProportion {
                    same: n_same,
                    total,
                });
            }
            let r = n_same as f64 / total as f64;
            let w_same = target / r;
            let w_diff = (1.0 - target) / (1.0 - r);
            NegativeSet {
                terms: queue
                    .iter()
                    .map(|e| {
                        let w = if e.laterality == query_laterality {
                            w_same
                        } else {
                            w_diff
                        };
                        (Cow::Borrowed(e.embedding.as_slice()), w)
                    })
                    .collect(),
                fell_back: false,
            }
        }
        NegativeStrategy::Appended { m } => {
            if same.is_empty() {
                log::warn!("appended strategy found no same-laterality keys; using default");
                return Ok(NegativeSet {
                    terms: default_terms(queue),
                    fell_back: true,
                });
            }
            let mut terms = default_terms(queue);
            for idx in sample_indices(rng, same.len(), *m) {
                terms.push((Cow::Borrowed(same[idx]), 1.0));
            }
            NegativeSet {
                terms,
                fell_back: false,
            }
        }
        NegativeStrategy::Synthetic { m } => {
            if same.is_empty() {
                log::warn!("synthetic strategy found no same-laterality keys; using default");
                return Ok(NegativeSet {
                    terms: default_terms(queue),
                    fell_back: true,
                });
            }
            let mut terms = default_terms(queue);
            let sample: Vec<&[f64]> = sample_indices(rng, same.len(), *m)
                .into_iter()
                .map(|idx| same[idx])
                .collect();
            for &z in &sample {
                terms.push((Cow::Borrowed(z), 1.0));
            }
            for _ in 0..sample.len() {
                let i = rng.random_range(0..sample.len());
                let j = if sample.len() > 1 {
                    let j0 = rng.random_range(0..sample.len() - 1);
                    j0 + usize::from(j0 >= i)
                } else {
                    i
                };
                let u: f64 = rng.random();
                terms.push((Cow::Owned(synth_combine(sample[i], sample[j], u)), 1.0));
            }
            NegativeSet {
                terms,
                fell_back: false,
            }
        }
    };
    Ok(set)
}

/// Uniform sample without replacement of `min(m, n)` indices.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let take = m.min(n);
    rand::seq::index::sample(rng, n, take).into_vec()
}
