use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::sampler::{sample_rollout, RolloutLimits};
use crate::scalar::Scalar;
use crate::task::Task;

/// Avg@k evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub update_index: u64,
    pub rollout_round: u64,
    pub k: usize,
    pub per_task_accuracy: Vec<f64>,
    pub avg_at_k: f64,
    pub mean_entropy: f64,
    pub mean_length: f64,
    pub best_so_far: bool,
}

/// Samples `k` completions per task at temperature 1 and averages
/// correctness; entropy and length come from the same completions.
///
/// Each task draws from its own RNG seeded off `rng`, in task order.
pub fn evaluate<S: Scalar, R: Rng + ?Sized>(
    params: &PolicyParams<S>,
    eval_tasks: &[Task],
    k: usize,
    limits: &RolloutLimits,
    rng: &mut R,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::Contract("evaluation needs k >= 1".into()));
    }
    if eval_tasks.is_empty() {
        return Err(Error::Contract("evaluation needs at least one task".into()));
    }
    let snapshot = params.snapshot();
    let mut per_task_accuracy = Vec::with_capacity(eval_tasks.len());
    let mut entropy_sum = 0.0;
    let mut token_count = 0usize;
    let mut length_sum = 0usize;
    for (i, task) in eval_tasks.iter().enumerate() {
        let mut task_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let mut correct = 0usize;
        for _ in 0..k {
            let rollout = sample_rollout(task, i as u64, &snapshot, limits, &mut task_rng)?;
            correct += usize::from(rollout.reward.is_correct());
            entropy_sum += rollout.ref_entropies.iter().map(|e| e.as_f64()).sum::<f64>();
            token_count += rollout.len();
            length_sum += rollout.len();
        }
        per_task_accuracy.push(correct as f64 / k as f64);
    }
    let completions = (eval_tasks.len() * k) as f64;
    Ok(EvalReport {
        update_index: 0,
        rollout_round: 0,
        k,
        avg_at_k: per_task_accuracy.iter().sum::<f64>() / per_task_accuracy.len() as f64,
        per_task_accuracy,
        mean_entropy: entropy_sum / token_count as f64,
        mean_length: length_sum as f64 / completions,
        best_so_far: false,
    })
}

/// Index of the highest Avg@k; ties go to the earliest entry.
pub fn select_best_checkpoint(history: &[EvalReport]) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::Contract("checkpoint selection needs a non-empty history".into()));
    }
    let mut best = 0;
    for (i, report) in history.iter().enumerate().skip(1) {
        if report.avg_at_k > history[best].avg_at_k {
            best = i;
        }
    }
    Ok(best)
}

/// Probability that a uniform policy over `vocab_size` tokens emits a
/// response ending in `A <answer> E` within `hard_limit` tokens, for an
/// answer of `answer_len` digits.
///
/// Every position before the final `E` must avoid `E`; the last
/// `answer_len + 1` of those are pinned. Repetition truncation is ignored;
/// under a uniform policy it fires with probability around `V^-(n·t - n)`.
pub fn chance_accuracy_uniform(vocab_size: usize, answer_len: usize, hard_limit: usize) -> f64 {
    let v = vocab_size as f64;
    let pinned = answer_len + 2;
    if hard_limit < pinned {
        return 0.0;
    }
    let free_ok = (v - 1.0) / v;
    let mut total = 0.0;
    for n in pinned..=hard_limit {
        total += free_ok.powi((n - pinned) as i32);
    }
    total * v.powi(-(pinned as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: f64) -> EvalReport {
        EvalReport {
            update_index: 0,
            rollout_round: 0,
            k: 1,
            per_task_accuracy: vec![acc],
            avg_at_k: acc,
            mean_entropy: 0.0,
            mean_length: 0.0,
            best_so_far: false,
        }
    }

    #[test]
    fn best_checkpoint_selection() {
        let h: Vec<_> = [0.2, 0.5, 0.4].into_iter().map(report).collect();
        assert_eq!(select_best_checkpoint(&h).unwrap(), 1);
        let tie: Vec<_> = [0.5, 0.5].into_iter().map(report).collect();
        assert_eq!(select_best_checkpoint(&tie).unwrap(), 0);
        assert!(select_best_checkpoint(&[]).is_err());
    }

    #[test]
    fn chance_formula_matches_closed_form() {
        // Geometric sum: (1/V²)(1 − ((V−1)/V)^(H−2)) for one-digit answers.
        for (v, h) in [(15usize, 64usize), (15, 3), (20, 10)] {
            let vf = v as f64;
            let closed = (1.0 - ((vf - 1.0) / vf).powi(h as i32 - 2)) / (vf * vf);
            assert!((chance_accuracy_uniform(v, 1, h) - closed).abs() < 1e-15);
        }
        assert_eq!(chance_accuracy_uniform(15, 1, 2), 0.0);
    }
}
