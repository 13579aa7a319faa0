use serde::Serialize;

use super::clip::{classify_regime, effective_multiplier, ClipConfig, Multiplier, Normalization, Regime};
use crate::error::{Error, Result};
use crate::policy::{add_scaled_grad_log_prob, PolicyParams, TokenDistribution};
use crate::sampler::GroupBatch;
use crate::scalar::Scalar;

/// Per-token bookkeeping emitted by [`accumulate_gradient`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenUpdateRecord<S> {
    pub group: usize,
    pub response: usize,
    pub position: usize,
    pub log_prob_live: S,
    pub log_prob_ref: S,
    pub ratio: S,
    pub advantage: S,
    pub regime: Regime,
    pub effective_multiplier: S,
    pub gradient_gated: bool,
    /// Dropped because the response was incorrect under `correct_only`.
    pub masked: bool,
    /// Entropy of the live next-token distribution at this position.
    pub live_entropy: S,
}

impl<S> TokenUpdateRecord<S> {
    pub fn contributes(&self) -> bool {
        !self.gradient_gated && !self.masked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutput<S> {
    /// Ascent direction of the objective.
    pub gradient: Vec<S>,
    pub records: Vec<TokenUpdateRecord<S>>,
}

impl<S: Scalar> GradientOutput<S> {
    /// Counts of contributing tokens in `[R1, R2, R3, R4]`.
    pub fn regime_counts(&self) -> [u64; 4] {
        let mut counts = [0u64; 4];
        for rec in self.records.iter().filter(|r| r.contributes()) {
            if let Some(i) = rec.regime.index() {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// Per-response scale factors for the batch under the given normalisation.
pub fn normalizers<S: Scalar>(batch: &[GroupBatch<S>], normalization: Normalization) -> Vec<Vec<S>> {
    match normalization {
        Normalization::PerToken => {
            let total: usize = batch.iter().map(GroupBatch::token_count).sum();
            let norm = S::one() / S::lit(total as f64);
            batch.iter().map(|g| vec![norm; g.group_size()]).collect()
        }
        Normalization::PerResponse => {
            let responses: usize = batch.iter().map(GroupBatch::group_size).sum();
            let n = S::lit(responses as f64);
            batch
                .iter()
                .map(|g| {
                    g.rollouts
                        .iter()
                        .map(|r| S::one() / (n * S::lit(r.len() as f64)))
                        .collect()
                })
                .collect()
        }
    }
}

/// Gradient (ascent direction) of the configured objective at the live
/// parameters, treating the importance weight as a constant wherever the
/// objective stops its gradient.
///
/// Tokens are visited group by group, response by response, position by
/// position, so the floating-point reduction order is fixed.
pub fn accumulate_gradient<S: Scalar>(
    batch: &[GroupBatch<S>],
    cfg: &ClipConfig<S>,
    live: &PolicyParams<S>,
) -> Result<GradientOutput<S>> {
    cfg.validate()?;
    for (gi, group) in batch.iter().enumerate() {
        if !group.kept || group.advantage_set.advantages.is_none() {
            return Err(Error::Contract(format!(
                "group {gi} is degenerate or filtered; dynamic sampling must drop it first"
            )));
        }
    }
    let v = live.vocab_size();
    let norms = normalizers(batch, cfg.normalization());
    let mut gradient = vec![S::zero(); live.weights().len()];
    let mut records = Vec::with_capacity(batch.iter().map(GroupBatch::token_count).sum());

    for (gi, group) in batch.iter().enumerate() {
        let advantages = group.advantage_set.advantages.as_ref().expect("checked above");
        for (ri, rollout) in group.rollouts.iter().enumerate() {
            let advantage = advantages[ri];
            let masked = cfg.correct_only && !rollout.reward.is_correct();
            let mut context = group.task.question.clone();
            context.reserve(rollout.len());
            for (pos, &token) in rollout.tokens.iter().enumerate() {
                let active = live.active_features(&context);
                let dist = TokenDistribution::from_logits(live.logits_for(&active))?;
                let log_prob_live = dist.log_probs[token];
                let log_prob_ref = rollout.ref_log_probs[pos];
                let ratio = (log_prob_live - log_prob_ref).exp();
                // A response scored exactly at the group mean has nothing to say.
                let m = if advantage == S::zero() {
                    Multiplier {
                        value: S::zero(),
                        gated: false,
                    }
                } else {
                    effective_multiplier(ratio, advantage, cfg)?
                };
                if !m.gated && !masked {
                    let coef = norms[gi][ri] * m.value * advantage;
                    add_scaled_grad_log_prob(&mut gradient, v, &active, &dist, token, coef);
                }
                records.push(TokenUpdateRecord {
                    group: gi,
                    response: ri,
                    position: pos,
                    log_prob_live,
                    log_prob_ref,
                    ratio,
                    advantage,
                    regime: classify_regime(ratio, advantage),
                    effective_multiplier: m.value,
                    gradient_gated: m.gated,
                    masked,
                    live_entropy: dist.entropy,
                });
                context.push(token);
            }
        }
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("accumulated gradient".into()));
    }
    Ok(GradientOutput { gradient, records })
}
