//! Group rollouts against a frozen snapshot, dynamic-sampling filtration
//! and early truncation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StarvationStats};
use crate::objectives::{compute_advantages, AdvantageSet};
use crate::policy::PolicySnapshot;
use crate::scalar::Scalar;
use crate::task::{shape_reward, verify, LengthLimits, RewardOutcome, Task, TaskStream, TokenId, Vocab};

pub const DEFAULT_REP_WINDOW: usize = 4;
pub const DEFAULT_REP_THRESHOLD: usize = 8;
pub const DEFAULT_GROUP_SIZE: usize = 16;

/// True iff the trailing `window_n`-gram occurs `repeat_threshold` times
/// back to back at the end of `tokens`.
pub fn truncate_on_repetition(tokens: &[TokenId], window_n: usize, repeat_threshold: usize) -> bool {
    assert!(
        window_n >= 1 && repeat_threshold >= 2,
        "window_n >= 1 and repeat_threshold >= 2"
    );
    let span = window_n * repeat_threshold;
    if tokens.len() < span {
        return false;
    }
    let tail = &tokens[tokens.len() - span..];
    let last = &tail[span - window_n..];
    tail.chunks_exact(window_n).all(|chunk| chunk == last)
}

/// Generation limits shared by every rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutLimits {
    pub lengths: LengthLimits,
    pub rep_window: usize,
    pub rep_threshold: usize,
}

impl RolloutLimits {
    pub fn new(soft_limit: usize, hard_limit: usize, rep_window: usize, rep_threshold: usize) -> Result<Self> {
        if rep_window == 0 || rep_threshold < 2 {
            return Err(Error::Config(format!(
                "repetition detector needs window >= 1 and threshold >= 2, got {rep_window} and {rep_threshold}"
            )));
        }
        Ok(Self {
            lengths: LengthLimits::new(soft_limit, hard_limit)?,
            rep_window,
            rep_threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    HardLimit,
    Repetition,
}

/// One sampled response with its reference log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<S> {
    pub task_id: u64,
    pub tokens: Vec<TokenId>,
    /// Log-probabilities under the generating snapshot; never recomputed.
    pub ref_log_probs: Vec<S>,
    /// Next-token entropy of the generating snapshot at each position.
    pub ref_entropies: Vec<S>,
    /// Log-probabilities under the live policy at the most recent update.
    pub live_log_probs: Vec<S>,
    pub reward: RewardOutcome,
    pub termination: Termination,
}

impl<S: Scalar> Rollout<S> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a rollout from explicit tokens, scoring them with the verifier
    /// and recording reference log-probabilities under `snapshot`.
    pub fn score(
        task: &Task,
        task_id: u64,
        tokens: Vec<TokenId>,
        snapshot: &PolicySnapshot<S>,
        limits: &RolloutLimits,
    ) -> Result<Self> {
        let mut context = task.question.clone();
        let mut ref_log_probs = Vec::with_capacity(tokens.len());
        let mut ref_entropies = Vec::with_capacity(tokens.len());
        for &t in &tokens {
            let dist = snapshot.distribution(&context)?;
            if t >= dist.log_probs.len() {
                return Err(Error::Contract(format!("token {t} outside policy vocabulary")));
            }
            ref_log_probs.push(dist.log_probs[t]);
            ref_entropies.push(dist.entropy);
            context.push(t);
        }
        let termination = if tokens.last() == Some(&Vocab::EOS) {
            Termination::Eos
        } else if tokens.len() == limits.lengths.hard_limit {
            Termination::HardLimit
        } else {
            Termination::Repetition
        };
        Self::finish(task, task_id, tokens, ref_log_probs, ref_entropies, termination, limits)
    }

    fn finish(
        task: &Task,
        task_id: u64,
        tokens: Vec<TokenId>,
        ref_log_probs: Vec<S>,
        ref_entropies: Vec<S>,
        termination: Termination,
        limits: &RolloutLimits,
    ) -> Result<Self> {
        let base = verify(&tokens, task);
        let mut reward = shape_reward(base, tokens.len(), limits.lengths.soft_limit, limits.lengths.hard_limit)?;
        reward.truncated = termination == Termination::HardLimit;
        reward.repetition_truncated = termination == Termination::Repetition;
        Ok(Self {
            task_id,
            live_log_probs: ref_log_probs.clone(),
            tokens,
            ref_log_probs,
            ref_entropies,
            reward,
            termination,
        })
    }
}

/// Samples one response autoregressively from the snapshot at temperature 1.
pub fn sample_rollout<S: Scalar, R: Rng + ?Sized>(
    task: &Task,
    task_id: u64,
    snapshot: &PolicySnapshot<S>,
    limits: &RolloutLimits,
    rng: &mut R,
) -> Result<Rollout<S>> {
    let hard = limits.lengths.hard_limit;
    let mut context = task.question.clone();
    let mut tokens = Vec::new();
    let mut ref_log_probs = Vec::new();
    let mut ref_entropies = Vec::new();
    let termination = loop {
        let dist = snapshot.distribution(&context)?;
        let t = dist.sample(rng);
        ref_log_probs.push(dist.log_probs[t]);
        ref_entropies.push(dist.entropy);
        tokens.push(t);
        context.push(t);
        if t == Vocab::EOS {
            break Termination::Eos;
        }
        if truncate_on_repetition(&tokens, limits.rep_window, limits.rep_threshold) {
            break Termination::Repetition;
        }
        if tokens.len() == hard {
            break Termination::HardLimit;
        }
    };
    Rollout::finish(task, task_id, tokens, ref_log_probs, ref_entropies, termination, limits)
}

/// Why a group was dropped by dynamic sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    Kept,
    AllCorrect,
    AllIncorrect,
    /// Mixed correctness but identical shaped rewards.
    ZeroVariance,
}

/// `G` rollouts for one question together with their advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBatch<S> {
    pub task: Task,
    pub task_id: u64,
    pub rollouts: Vec<Rollout<S>>,
    /// Advantages computed from the shaped rewards.
    pub advantage_set: AdvantageSet<S>,
    pub status: GroupStatus,
    pub kept: bool,
}

impl<S: Scalar> GroupBatch<S> {
    pub fn new(task: Task, task_id: u64, rollouts: Vec<Rollout<S>>) -> Result<Self> {
        let shaped: Vec<S> = rollouts.iter().map(|r| S::lit(r.reward.shaped_reward)).collect();
        let advantage_set = compute_advantages(&shaped)?;
        let correct = rollouts.iter().filter(|r| r.reward.is_correct()).count();
        let status = if correct == rollouts.len() {
            GroupStatus::AllCorrect
        } else if correct == 0 {
            GroupStatus::AllIncorrect
        } else if advantage_set.degenerate {
            GroupStatus::ZeroVariance
        } else {
            GroupStatus::Kept
        };
        Ok(Self {
            task,
            task_id,
            rollouts,
            advantage_set,
            kept: status == GroupStatus::Kept,
            status,
        })
    }

    pub fn group_size(&self) -> usize {
        self.rollouts.len()
    }

    pub fn token_count(&self) -> usize {
        self.rollouts.iter().map(Rollout::len).sum()
    }

    /// Advantage of response `i`; `None` for degenerate groups.
    pub fn advantage(&self, i: usize) -> Option<S> {
        self.advantage_set.advantages.as_ref().map(|a| a[i])
    }
}

/// Samples `group_size` independent responses to `task`.
pub fn rollout_group<S: Scalar, R: Rng + ?Sized>(
    task: &Task,
    task_id: u64,
    snapshot: &PolicySnapshot<S>,
    group_size: usize,
    limits: &RolloutLimits,
    rng: &mut R,
) -> Result<GroupBatch<S>> {
    if group_size < 2 {
        return Err(Error::Contract(format!("group size must be >= 2, got {group_size}")));
    }
    let rollouts = (0..group_size)
        .map(|_| sample_rollout(task, task_id, snapshot, limits, rng))
        .collect::<Result<Vec<_>>>()?;
    GroupBatch::new(task.clone(), task_id, rollouts)
}

/// A filled batch of kept groups plus filtration statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBatch<S> {
    pub groups: Vec<GroupBatch<S>>,
    pub attempts: usize,
    pub filtered_all_correct: usize,
    pub filtered_all_incorrect: usize,
    pub filtered_zero_variance: usize,
    /// Correct responses across every sampled group, kept or not.
    pub sampled_correct: usize,
    pub sampled_responses: usize,
}

impl<S> EffectiveBatch<S> {
    pub fn groups_filtered(&self) -> usize {
        self.filtered_all_correct + self.filtered_all_incorrect + self.filtered_zero_variance
    }

    pub fn stats(&self, target_groups: usize) -> StarvationStats {
        StarvationStats {
            target_groups,
            kept_groups: self.groups.len(),
            attempts: self.attempts,
            filtered_all_correct: self.filtered_all_correct,
            filtered_all_incorrect: self.filtered_all_incorrect,
            filtered_zero_variance: self.filtered_zero_variance,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FillError<S: std::fmt::Debug> {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("batch starvation: kept {} of {target_groups} groups after {} attempts", .partial.groups.len(), .partial.attempts)]
    Starved {
        target_groups: usize,
        partial: EffectiveBatch<S>,
    },
}

impl<S: std::fmt::Debug> From<FillError<S>> for Error {
    fn from(err: FillError<S>) -> Self {
        match err {
            FillError::Invalid(e) => e,
            FillError::Starved { target_groups, partial } => Error::BatchStarvation(partial.stats(target_groups)),
        }
    }
}

/// Dynamic sampling: draws fresh tasks and rolls out groups until
/// `target_groups` informative groups are collected.
///
/// Each attempt gets its own RNG seeded from `rng`, and kept groups are
/// returned in attempt order.
#[allow(clippy::too_many_arguments)]
pub fn fill_effective_batch<S: Scalar, R: Rng + ?Sized>(
    tasks: &mut TaskStream,
    snapshot: &PolicySnapshot<S>,
    group_size: usize,
    limits: &RolloutLimits,
    target_groups: usize,
    max_attempts: usize,
    rng: &mut R,
) -> std::result::Result<EffectiveBatch<S>, FillError<S>> {
    if target_groups == 0 {
        return Err(Error::Contract("target_groups must be >= 1".into()).into());
    }
    if max_attempts < target_groups {
        return Err(Error::Contract(format!(
            "max_attempts ({max_attempts}) must be >= target_groups ({target_groups})"
        ))
        .into());
    }
    let mut batch = EffectiveBatch {
        groups: Vec::with_capacity(target_groups),
        attempts: 0,
        filtered_all_correct: 0,
        filtered_all_incorrect: 0,
        filtered_zero_variance: 0,
        sampled_correct: 0,
        sampled_responses: 0,
    };
    while batch.groups.len() < target_groups {
        if batch.attempts == max_attempts {
            return Err(FillError::Starved {
                target_groups,
                partial: batch,
            });
        }
        batch.attempts += 1;
        let (task_id, task) = tasks.next_task();
        let mut group_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let group = rollout_group(&task, task_id, snapshot, group_size, limits, &mut group_rng)?;
        batch.sampled_responses += group.group_size();
        batch.sampled_correct += group.rollouts.iter().filter(|r| r.reward.is_correct()).count();
        match group.status {
            GroupStatus::Kept => batch.groups.push(group),
            GroupStatus::AllCorrect => batch.filtered_all_correct += 1,
            GroupStatus::AllIncorrect => batch.filtered_all_incorrect += 1,
            GroupStatus::ZeroVariance => batch.filtered_zero_variance += 1,
        }
    }
    Ok(batch)
}

/// One line of the optional rollout dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutDumpRecord {
    pub task_id: u64,
    pub question: String,
    pub ground_truth: String,
    pub response: String,
    pub base_reward: i8,
    pub shaped_reward: f64,
    pub truncated: bool,
    pub repetition_truncated: bool,
}

impl RolloutDumpRecord {
    pub fn new<S: Scalar>(group: &GroupBatch<S>, rollout: &Rollout<S>, vocab: &Vocab) -> Self {
        Self {
            task_id: group.task_id,
            question: vocab.decode(&group.task.question),
            ground_truth: vocab.decode(&group.task.ground_truth),
            response: vocab.decode(&rollout.tokens),
            base_reward: rollout.reward.base_reward,
            shaped_reward: rollout.reward.shaped_reward,
            truncated: rollout.reward.truncated,
            repetition_truncated: rollout.reward.repetition_truncated,
        }
    }
}
