//! Clipped surrogate objectives over masked token sequences.

use serde::{Deserialize, Serialize};

use super::OptimError;
use crate::scalar::{pairwise_sum, Scalar};

pub const DEFAULT_EPS_LOW: f64 = 0.2;
pub const DEFAULT_EPS_HIGH: f64 = 0.28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds<F> {
    pub low: F,
    pub high: F,
}

impl<F: Scalar> ClipBounds<F> {
    pub fn new(low: F, high: F) -> Result<Self, OptimError> {
        if low.is_nan() || high.is_nan() || low <= F::zero() || high < low {
            return Err(OptimError::BadClip { low: low.to_f64_lossy(), high: high.to_f64_lossy() });
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(eps: F) -> Result<Self, OptimError> {
        Self::new(eps, eps)
    }
}

impl<F: Scalar> Default for ClipBounds<F> {
    fn default() -> Self {
        Self { low: F::from_f64_lossy(DEFAULT_EPS_LOW), high: F::from_f64_lossy(DEFAULT_EPS_HIGH) }
    }
}

/// Per-token inputs of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeries<F> {
    pub logp_new: Vec<F>,
    pub logp_old: Vec<F>,
    pub mask: Vec<bool>,
    pub advantage: F,
}

impl<F: Scalar> TokenSeries<F> {
    fn check(&self) -> Result<(), OptimError> {
        if self.logp_new.len() != self.mask.len() || self.logp_old.len() != self.mask.len() {
            return Err(OptimError::ShapeMismatch {
                new: self.logp_new.len(),
                old: self.logp_old.len(),
                mask: self.mask.len(),
            });
        }
        Ok(())
    }

    pub fn masked_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Trajectories grouped by prompt, plus the clip bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveInputs<F> {
    pub groups: Vec<Vec<TokenSeries<F>>>,
    pub clip: ClipBounds<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue<F> {
    pub value: F,
    /// Per-token terms indexed `[group][trajectory][token]`; zero where masked out.
    pub terms: Vec<Vec<Vec<F>>>,
    /// Derivative of `value` with respect to each new log-probability.
    pub dlogp: Vec<Vec<Vec<F>>>,
}

/// `min(r·A, clip(r, 1-low, 1+high)·A)` and its derivative in `logp_new`.
///
/// The derivative is `r·A` where the unclipped product is selected and zero
/// where the clipped constant is.
pub fn token_term<F: Scalar>(logp_new: F, logp_old: F, advantage: F, clip: ClipBounds<F>) -> (F, F) {
    let r = (logp_new - logp_old).exp();
    let clipped = r.max(F::one() - clip.low).min(F::one() + clip.high);
    let (unclipped_term, clipped_term) = (r * advantage, clipped * advantage);
    if unclipped_term <= clipped_term {
        (unclipped_term, unclipped_term)
    } else {
        (clipped_term, F::zero())
    }
}

fn validate<F: Scalar>(inputs: &ObjectiveInputs<F>) -> Result<usize, OptimError> {
    ClipBounds::new(inputs.clip.low, inputs.clip.high)?;
    let mut masked = 0;
    for series in inputs.groups.iter().flatten() {
        series.check()?;
        masked += series.masked_len();
    }
    if masked == 0 {
        return Err(OptimError::EmptyMask);
    }
    Ok(masked)
}

/// Token-level objective: masked terms averaged over every masked token in
/// the batch.
pub fn tapo_objective<F: Scalar>(inputs: &ObjectiveInputs<F>) -> Result<ObjectiveValue<F>, OptimError> {
    let masked = validate(inputs)?;
    let norm = F::from_usize_lossy(masked);
    let mut flat = Vec::with_capacity(masked);
    let mut terms = Vec::with_capacity(inputs.groups.len());
    let mut dlogp = Vec::with_capacity(inputs.groups.len());
    for group in &inputs.groups {
        let mut g_terms = Vec::with_capacity(group.len());
        let mut g_grads = Vec::with_capacity(group.len());
        for s in group {
            let mut t_terms = vec![F::zero(); s.mask.len()];
            let mut t_grads = vec![F::zero(); s.mask.len()];
            for t in (0..s.mask.len()).filter(|&t| s.mask[t]) {
                let (term, d) = token_term(s.logp_new[t], s.logp_old[t], s.advantage, inputs.clip);
                t_terms[t] = term;
                t_grads[t] = d / norm;
                flat.push(term);
            }
            g_terms.push(t_terms);
            g_grads.push(t_grads);
        }
        terms.push(g_terms);
        dlogp.push(g_grads);
    }
    Ok(ObjectiveValue { value: pairwise_sum(&flat) / norm, terms, dlogp })
}

/// Sample-level objective with a symmetric clip and a KL penalty: each
/// trajectory's masked terms are averaged over its own length, trajectories
/// are averaged within their group, and groups are averaged.
///
/// `kl[g][i][t]` is the per-token divergence from the reference policy; pass
/// an empty slice for none.
pub fn grpo_objective<F: Scalar>(
    inputs: &ObjectiveInputs<F>,
    eps: F,
    kl: &[Vec<Vec<F>>],
    beta: F,
) -> Result<F, OptimError> {
    validate(inputs)?;
    let clip = ClipBounds::symmetric(eps)?;
    let mut group_means = Vec::with_capacity(inputs.groups.len());
    for (g, group) in inputs.groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let mut per_traj = Vec::with_capacity(group.len());
        for (i, s) in group.iter().enumerate() {
            let len = s.masked_len();
            if len == 0 {
                per_traj.push(F::zero());
                continue;
            }
            let mut tokens = Vec::with_capacity(len);
            for t in (0..s.mask.len()).filter(|&t| s.mask[t]) {
                let (term, _) = token_term(s.logp_new[t], s.logp_old[t], s.advantage, clip);
                let penalty = kl.get(g).and_then(|k| k.get(i)).and_then(|k| k.get(t)).copied().unwrap_or(F::zero());
                tokens.push(term - beta * penalty);
            }
            per_traj.push(pairwise_sum(&tokens) / F::from_usize_lossy(len));
        }
        group_means.push(pairwise_sum(&per_traj) / F::from_usize_lossy(group.len()));
    }
    Ok(pairwise_sum(&group_means) / F::from_usize_lossy(group_means.len()))
}

/// Exact `KL(p || q)` over a discrete support; zero-probability entries of `p` are skipped.
pub fn exact_kl<F: Scalar>(p: &[F], q: &[F]) -> F {
    let parts: Vec<F> =
        p.iter().zip(q).filter(|(&pi, _)| pi > F::zero()).map(|(&pi, &qi)| pi * (pi / qi).ln()).collect();
    pairwise_sum(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(logp_new: Vec<f64>, logp_old: Vec<f64>, mask: Vec<bool>, advantage: f64) -> TokenSeries<f64> {
        TokenSeries { logp_new, logp_old, mask, advantage }
    }

    #[test]
    fn identity_ratio_averages_advantages() {
        let inputs = ObjectiveInputs {
            groups: vec![vec![
                series(vec![-1.0, -2.0], vec![-1.0, -2.0], vec![true, true], 1.0),
                series(vec![-0.5, -0.1, -0.3], vec![-0.5, -0.1, -0.3], vec![true, false, true], -1.0),
            ]],
            clip: ClipBounds::default(),
        };
        assert_eq!(tapo_objective(&inputs).unwrap().value, 0.0);
    }

    #[test]
    fn clip_examples() {
        let clip = ClipBounds::default();
        assert_eq!(token_term(2f64.ln(), 0.0, 1.0, clip), (1.28, 0.0));
        let (term, d) = token_term(0.5f64.ln(), 0.0, -1.0, clip);
        assert_eq!(term, -0.8);
        assert_eq!(d, 0.0);
        // inside the trust region the unclipped branch is taken
        let (term, d) = token_term(1.1f64.ln(), 0.0, 2.0, clip);
        assert_abs_diff_eq!(term, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 2.2, epsilon = 1e-12);
    }

    #[test]
    fn sample_and_token_weighting_differ() {
        // lengths 1 and 3, advantages +1 and -1, identity ratio:
        // token level (1 - 3) / 4 = -0.5; sample level (1 + -1) / 2 = 0
        let inputs = ObjectiveInputs {
            groups: vec![vec![
                series(vec![-1.0], vec![-1.0], vec![true], 1.0),
                series(vec![-1.0; 3], vec![-1.0; 3], vec![true; 3], -1.0),
            ]],
            clip: ClipBounds::symmetric(0.2).unwrap(),
        };
        assert_eq!(tapo_objective(&inputs).unwrap().value, -0.5);
        assert_eq!(grpo_objective(&inputs, 0.2, &[], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let empty = ObjectiveInputs {
            groups: vec![vec![series(vec![-1.0], vec![-1.0], vec![false], 1.0)]],
            clip: ClipBounds::default(),
        };
        assert_eq!(tapo_objective(&empty), Err(OptimError::EmptyMask));
        let ragged = ObjectiveInputs {
            groups: vec![vec![series(vec![-1.0], vec![-1.0, -2.0], vec![true], 1.0)]],
            clip: ClipBounds::default(),
        };
        assert!(matches!(tapo_objective(&ragged), Err(OptimError::ShapeMismatch { .. })));
        assert!(ClipBounds::new(0.3f64, 0.2).is_err());
        assert!(ClipBounds::new(0.0f64, 0.2).is_err());
        assert!(ClipBounds::new(0.2f64, f64::NAN).is_err());
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = [0.25f64, 0.25, 0.5];
        assert_eq!(exact_kl(&p, &p), 0.0);
        assert_abs_diff_eq!(exact_kl(&[1.0f64, 0.0], &[0.5, 0.5]), 2f64.ln(), epsilon = 1e-15);
    }
}
