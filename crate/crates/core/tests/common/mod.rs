//! Reference implementations written from the definitions, used to check
//! the library against something other than itself.
#![allow(dead_code)]

use dispo_core::objectives::{Algorithm, ClipConfig, Normalization};
use dispo_core::policy::{num_features, FeatureMap, PolicyParams};
use dispo_core::sampler::{GroupBatch, Rollout, Termination};
use dispo_core::task::{RewardOutcome, Task, TaskKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Policy shapes with at most 60 parameters.
pub const SMALL_SHAPES: [(usize, usize, FeatureMap); 5] = [
    (4, 2, FeatureMap::OneHotConcat),
    (3, 2, FeatureMap::OneHotPairs),
    (3, 3, FeatureMap::OneHotConcat),
    (5, 2, FeatureMap::OneHotConcat),
    (2, 3, FeatureMap::OneHotPairs),
];

/// Bias, one-hot of each of the last `k` tokens (slot 0 is the most
/// recent), then one block per slot pair `(i, j)`, `i < j`, indexed by
/// `a·V + b`.
pub fn dense_features(v: usize, k: usize, fm: FeatureMap, context: &[usize]) -> Vec<f64> {
    let pairs = fm == FeatureMap::OneHotPairs;
    let n = 1 + k * v + if pairs { k * (k - 1) / 2 * v * v } else { 0 };
    let slot = |s: usize| -> Option<usize> {
        if s < context.len() {
            let t = context[context.len() - 1 - s];
            (t < v).then_some(t)
        } else {
            None
        }
    };
    let mut phi = vec![0.0; n];
    phi[0] = 1.0;
    for s in 0..k {
        if let Some(t) = slot(s) {
            phi[1 + s * v + t] = 1.0;
        }
    }
    if pairs {
        let mut block = 1 + k * v;
        for i in 0..k {
            for j in (i + 1)..k {
                if let (Some(a), Some(b)) = (slot(i), slot(j)) {
                    phi[block + a * v + b] = 1.0;
                }
                block += v * v;
            }
        }
    }
    phi
}

pub fn oracle_log_probs(weights: &[f64], v: usize, k: usize, fm: FeatureMap, context: &[usize]) -> Vec<f64> {
    let phi = dense_features(v, k, fm, context);
    assert_eq!(phi.len() * v, weights.len());
    let logits: Vec<f64> = (0..v)
        .map(|c| phi.iter().enumerate().map(|(f, x)| x * weights[f * v + c]).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    logits.iter().map(|l| l - max - z.ln()).collect()
}

/// `(R − mean) / population std`, or `None` when every reward is equal.
pub fn oracle_advantages(rewards: &[f64]) -> Option<Vec<f64>> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return None;
    }
    let std = var.sqrt();
    Some(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn oracle_normalization(cfg: &ClipConfig<f64>) -> Normalization {
    cfg.normalization.unwrap_or(match cfg.algorithm {
        Algorithm::Reinforce | Algorithm::Grpo => Normalization::PerResponse,
        _ => Normalization::PerToken,
    })
}

pub fn oracle_normalizers(batch: &[GroupBatch<f64>], norm: Normalization) -> Vec<Vec<f64>> {
    let responses: usize = batch.iter().map(|g| g.rollouts.len()).sum();
    let tokens: usize = batch.iter().flat_map(|g| &g.rollouts).map(|r| r.tokens.len()).sum();
    batch
        .iter()
        .map(|g| {
            g.rollouts
                .iter()
                .map(|r| match norm {
                    Normalization::PerToken => 1.0 / tokens as f64,
                    Normalization::PerResponse => 1.0 / (responses as f64 * r.tokens.len() as f64),
                })
                .collect()
        })
        .collect()
}

/// A small batch scored under a random reference policy, plus live
/// parameters drifted away from it.
pub struct Instance {
    pub v: usize,
    pub k: usize,
    pub fm: FeatureMap,
    pub reference: Vec<f64>,
    pub live: PolicyParams<f64>,
    pub batch: Vec<GroupBatch<f64>>,
}

pub fn random_instance<R: Rng>(rng: &mut R, groups: usize, group_size: usize, drift: f64) -> Instance {
    let (v, k, fm) = *SMALL_SHAPES.choose(rng).unwrap();
    let n = num_features(v, k, fm) * v;
    let init = Normal::new(0.0, 0.6).unwrap();
    let reference: Vec<f64> = (0..n).map(|_| init.sample(rng)).collect();
    let live_w: Vec<f64> = if drift > 0.0 {
        let step = Normal::new(0.0, drift).unwrap();
        reference.iter().map(|w| w + step.sample(rng)).collect()
    } else {
        reference.clone()
    };
    let live = PolicyParams::from_weights(v, k, fm, live_w).unwrap();
    let batch = (0..groups)
        .map(|g| random_group(rng, g as u64, v, k, fm, &reference, group_size))
        .collect();
    Instance {
        v,
        k,
        fm,
        reference,
        live,
        batch,
    }
}

/// `group_size` responses with at least one correct and one incorrect.
pub fn random_group<R: Rng>(
    rng: &mut R,
    id: u64,
    v: usize,
    k: usize,
    fm: FeatureMap,
    reference: &[f64],
    group_size: usize,
) -> GroupBatch<f64> {
    let question: Vec<usize> = (0..2).map(|_| rng.gen_range(0..v)).collect();
    let task = Task {
        kind: TaskKind::Copy,
        operands: vec![0],
        modulus: 2,
        question: question.clone(),
        ground_truth: vec![0],
    };
    let mut correct: Vec<bool> = (0..group_size).map(|_| rng.gen_bool(0.5)).collect();
    correct[0] = true;
    correct[1] = false;
    correct.shuffle(rng);
    let rollouts = correct
        .into_iter()
        .map(|ok| {
            let len = rng.gen_range(1..=5);
            let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..v)).collect();
            let mut ctx = question.clone();
            let mut ref_log_probs = Vec::new();
            let mut ref_entropies = Vec::new();
            for &t in &tokens {
                let lp = oracle_log_probs(reference, v, k, fm, &ctx);
                ref_log_probs.push(lp[t]);
                ref_entropies.push(-lp.iter().map(|l| l.exp() * l).sum::<f64>());
                ctx.push(t);
            }
            let base = if ok { 1 } else { -1 };
            Rollout {
                task_id: id,
                tokens,
                ref_log_probs,
                ref_entropies,
                live_log_probs: Vec::new(),
                reward: RewardOutcome {
                    base_reward: base,
                    length_penalty: 0.0,
                    shaped_reward: base as f64,
                    truncated: false,
                    repetition_truncated: false,
                },
                termination: Termination::Eos,
            }
        })
        .collect();
    GroupBatch::new(task, id, rollouts).unwrap()
}

fn window(cfg: &ClipConfig<f64>, advantage: f64) -> (f64, f64) {
    match cfg.algorithm {
        Algorithm::Dispo if advantage > 0.0 => (1.0 - cfg.eps_plus_low, 1.0 + cfg.eps_plus_high),
        Algorithm::Dispo => (1.0 - cfg.eps_minus_low, 1.0 + cfg.eps_minus_high),
        _ => (1.0 - cfg.eps_low, 1.0 + cfg.eps_high),
    }
}

/// Objective at `weights`, with every stop-gradient weight evaluated at
/// `base`:
///
/// * REINFORCE: `Σ n·Â·r`
/// * GRPO/DAPO: `Σ n·min(r·Â, clip(r)·Â)`
/// * CISPO/DISPO: `Σ n·sg(clip(r))·Â·log π`
pub fn oracle_objective(inst: &Instance, cfg: &ClipConfig<f64>, weights: &[f64], base: &[f64]) -> f64 {
    let norms = oracle_normalizers(&inst.batch, oracle_normalization(cfg));
    let mut total = 0.0;
    for (g, group) in inst.batch.iter().enumerate() {
        let rewards: Vec<f64> = group.rollouts.iter().map(|r| r.reward.shaped_reward).collect();
        let adv = oracle_advantages(&rewards).expect("instances have mixed rewards");
        for (i, rollout) in group.rollouts.iter().enumerate() {
            if cfg.correct_only && rollout.reward.base_reward <= 0 {
                continue;
            }
            let a = adv[i];
            let mut ctx = group.task.question.clone();
            for (p, &t) in rollout.tokens.iter().enumerate() {
                let lp = oracle_log_probs(weights, inst.v, inst.k, inst.fm, &ctx)[t];
                let r = (lp - rollout.ref_log_probs[p]).exp();
                let (lo, hi) = window(cfg, a);
                let term = match cfg.algorithm {
                    Algorithm::Reinforce => r * a,
                    Algorithm::Grpo | Algorithm::Dapo => (r * a).min(r.max(lo).min(hi) * a),
                    Algorithm::Cispo | Algorithm::Dispo => {
                        let lp0 = oracle_log_probs(base, inst.v, inst.k, inst.fm, &ctx)[t];
                        let r0 = (lp0 - rollout.ref_log_probs[p]).exp();
                        r0.max(lo).min(hi) * a * lp
                    }
                };
                total += norms[g][i] * term;
                ctx.push(t);
            }
        }
    }
    total
}

/// Every importance ratio at the live parameters.
pub fn live_ratios(inst: &Instance) -> Vec<(f64, f64)> {
    let w = inst.live.weights();
    let mut out = Vec::new();
    for group in &inst.batch {
        let rewards: Vec<f64> = group.rollouts.iter().map(|r| r.reward.shaped_reward).collect();
        let adv = oracle_advantages(&rewards).unwrap();
        for (i, rollout) in group.rollouts.iter().enumerate() {
            let mut ctx = group.task.question.clone();
            for (p, &t) in rollout.tokens.iter().enumerate() {
                let lp = oracle_log_probs(w, inst.v, inst.k, inst.fm, &ctx)[t];
                out.push(((lp - rollout.ref_log_probs[p]).exp(), adv[i]));
                ctx.push(t);
            }
        }
    }
    out
}

/// True if some ratio sits within `tol` of a min-surrogate kink, where the
/// objective is not differentiable.
pub fn near_kink(inst: &Instance, cfg: &ClipConfig<f64>, tol: f64) -> bool {
    if !cfg.algorithm.is_min_surrogate() {
        return false;
    }
    let (lo, hi) = (1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
    live_ratios(inst)
        .iter()
        .any(|(r, _)| (r - lo).abs() < tol || (r - hi).abs() < tol)
}

/// Central differences of [`oracle_objective`] at the live weights.
pub fn finite_difference_gradient(inst: &Instance, cfg: &ClipConfig<f64>, h: f64) -> Vec<f64> {
    let base = inst.live.weights().to_vec();
    let mut w = base.clone();
    (0..base.len())
        .map(|j| {
            w[j] = base[j] + h;
            let plus = oracle_objective(inst, cfg, &w, &base);
            w[j] = base[j] - h;
            let minus = oracle_objective(inst, cfg, &w, &base);
            w[j] = base[j];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `max |a − b| / max |b|`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / scale
}

/// Configurations for the five algorithms with windows narrow enough that
/// typical drifted ratios land on both sides of every bound.
pub fn random_configs<R: Rng>(rng: &mut R) -> Vec<ClipConfig<f64>> {
    let mut eps = || rng.gen_range(0.05..0.5);
    let grpo = eps();
    vec![
        ClipConfig::reinforce(),
        ClipConfig::grpo(grpo),
        ClipConfig::dapo(eps(), eps()),
        ClipConfig::cispo(eps(), eps()),
        ClipConfig::dispo(eps(), eps(), eps(), eps()),
    ]
}

/// Gradient of the unit-weight objective `Σ n·Â·log π` assembled from the
/// library's dense `∇log π`, token by token.
pub fn unit_weight_gradient(batch: &[GroupBatch<f64>], live: &PolicyParams<f64>, norm: Normalization) -> Vec<f64> {
    let norms = oracle_normalizers(batch, norm);
    let mut grad = vec![0.0; live.weights().len()];
    for (g, group) in batch.iter().enumerate() {
        for (i, rollout) in group.rollouts.iter().enumerate() {
            let coef = norms[g][i] * group.advantage(i).unwrap();
            let mut ctx = group.task.question.clone();
            for &t in &rollout.tokens {
                let d = live.grad_log_prob(&ctx, t).unwrap();
                for (acc, x) in grad.iter_mut().zip(d) {
                    *acc += coef * x;
                }
                ctx.push(t);
            }
        }
    }
    grad
}
