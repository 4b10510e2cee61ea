//! InfoNCE with weighted negative terms.
//!
//! L = -log( exp(q.k/t) / (exp(q.k/t) + sum_i w_i exp(q.z_i/t)) ),
//! computed via a max-shifted log-sum-exp. With no negatives the fraction is
//! exactly 1 and the loss exactly 0.

use std::borrow::Cow;

use crate::error::{Error, Result};

fn logits<E: AsRef<[f64]>>(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[(E, f64)],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    if tau <= 0.0 {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let pos = dot(q, k_pos) / tau;
    let negs = negatives
        .iter()
        .map(|(z, _)| dot(q, z.as_ref()) / tau)
        .collect();
    Ok((pos, negs))
}

/// Loss value for one query.
pub fn info_nce<E: AsRef<[f64]>>(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[(E, f64)],
    tau: f64,
) -> Result<f64> {
    let (pos, negs) = logits(q, k_pos, negatives, tau)?;
    let max = negs.iter().copied().fold(pos, f64::max);
    let mut denom = (pos - max).exp();
    for (logit, (_, weight)) in negs.iter().zip(negatives) {
        debug_assert!(*weight > 0.0, "negative weights must be positive");
        denom += weight * (logit - max).exp();
    }
    Ok(-(pos - max - denom.ln()))
}

/// Loss and its gradient w.r.t. the query embedding `q`.
pub fn info_nce_with_grad(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[(Cow<'_, [f64]>, f64)],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let (pos, negs) = logits(q, k_pos, negatives, tau)?;
    let max = negs.iter().copied().fold(pos, f64::max);
    let mut denom = (pos - max).exp();
    for (logit, (_, weight)) in negs.iter().zip(negatives) {
        denom += weight * (logit - max).exp();
    }
    let loss = -(pos - max - denom.ln());

    // dL/dq = (1/tau) [ (p0 - 1) k + sum_i p_i z_i ],
    // with p0 = exp(l0)/D and p_i = w_i exp(l_i)/D.
    let p0 = (pos - max).exp() / denom;
    let mut grad = vec![0.0; q.len()];
    for (g, k) in grad.iter_mut().zip(k_pos) {
        *g += (p0 - 1.0) * k;
    }
    for (logit, (z, weight)) in negs.iter().zip(negatives) {
        let p = weight * (logit - max).exp() / denom;
        for (g, zi) in grad.iter_mut().zip(z.as_ref()) {
            *g += p * zi;
        }
    }
    for g in &mut grad {
        *g /= tau;
    }
    Ok((loss, grad))
}
