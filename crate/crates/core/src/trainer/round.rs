use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::optimizer::{apply_adamw_step, clip_grad_norm, OptimizerState};
use crate::error::{Error, Result};
use crate::metrics::{RegimeCounts, StepMetrics};
use crate::objectives::{accumulate_gradient, ClipConfig, Regime, TokenUpdateRecord};
use crate::policy::PolicyParams;
use crate::sampler::{fill_effective_batch, EffectiveBatch, GroupBatch, RolloutLimits};
use crate::scalar::Scalar;
use crate::task::{TaskKind, TaskStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainSchedule {
    pub mini_batch_groups: usize,
    pub micro_batch_groups: usize,
    pub total_rollout_rounds: usize,
    pub grad_clip_norm: f64,
    /// Evaluate every this many rollout rounds; 0 disables.
    pub eval_every: usize,
}

impl TrainSchedule {
    pub fn updates_per_rollout(&self) -> usize {
        self.mini_batch_groups / self.micro_batch_groups
    }

    pub fn validate(&self) -> Result<()> {
        if self.micro_batch_groups == 0 || !self.mini_batch_groups.is_multiple_of(self.micro_batch_groups) {
            return Err(Error::Config(format!(
                "micro_batch_groups ({}) must be positive and divide mini_batch_groups ({})",
                self.micro_batch_groups, self.mini_batch_groups
            )));
        }
        if self.mini_batch_groups == 0 {
            return Err(Error::Config("mini_batch_groups must be positive".into()));
        }
        if !(self.grad_clip_norm > 0.0 && self.grad_clip_norm.is_finite()) {
            return Err(Error::Config(format!(
                "grad_clip_norm must be positive, got {}",
                self.grad_clip_norm
            )));
        }
        Ok(())
    }
}

/// Where training tasks come from and how responses are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainEnv {
    pub task_kind: TaskKind,
    pub modulus: u32,
    pub limits: RolloutLimits,
    pub group_size: usize,
    pub max_attempts: usize,
}

/// One line of the per-token regime log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeLogRecord {
    pub update_index: u64,
    pub rollout_round: u64,
    pub task_id: u64,
    #[serde(flatten)]
    pub token: TokenUpdateRecord<f64>,
}

#[derive(Debug, Clone)]
pub struct RoundOutput<S> {
    pub metrics: Vec<StepMetrics>,
    pub regime_log: Vec<RegimeLogRecord>,
    pub batch: EffectiveBatch<S>,
}

/// Live parameters plus everything needed to run rollout rounds.
///
/// The task stream and rollout RNG advance across rounds, so a sequence of
/// `train_round` calls is reproducible from the two seeds.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    params: PolicyParams<S>,
    optimizer: OptimizerState<S>,
    clip: ClipConfig<S>,
    schedule: TrainSchedule,
    env: TrainEnv,
    tasks: TaskStream,
    rng: ChaCha8Rng,
    rounds_completed: u64,
    updates_applied: u64,
    regime_log_stride: u64,
}

impl<S: Scalar> Trainer<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: PolicyParams<S>,
        optimizer: OptimizerState<S>,
        clip: ClipConfig<S>,
        schedule: TrainSchedule,
        env: TrainEnv,
        task_seed: u64,
        rollout_seed: u64,
    ) -> Result<Self> {
        clip.validate()?;
        schedule.validate()?;
        if optimizer.first_moment.len() != params.weights().len() {
            return Err(Error::Contract("optimizer state does not match parameter count".into()));
        }
        Ok(Self {
            params,
            optimizer,
            clip,
            schedule,
            env,
            tasks: TaskStream::new(task_seed, env.task_kind, env.modulus)?,
            rng: ChaCha8Rng::seed_from_u64(rollout_seed),
            rounds_completed: 0,
            updates_applied: 0,
            regime_log_stride: 0,
        })
    }

    /// Keep per-token records for every `stride`-th update (the first
    /// update of a run is always included); 0 disables.
    pub fn with_regime_log_stride(mut self, stride: u64) -> Self {
        self.regime_log_stride = stride;
        self
    }

    pub fn params(&self) -> &PolicyParams<S> {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams<S> {
        self.params
    }

    pub fn optimizer(&self) -> &OptimizerState<S> {
        &self.optimizer
    }

    pub fn clip(&self) -> &ClipConfig<S> {
        &self.clip
    }

    pub fn schedule(&self) -> &TrainSchedule {
        &self.schedule
    }

    pub fn env(&self) -> &TrainEnv {
        &self.env
    }

    pub fn rounds_completed(&self) -> u64 {
        self.rounds_completed
    }

    pub fn updates_applied(&self) -> u64 {
        self.updates_applied
    }

    /// Snapshot, fill one mini-batch of kept groups, then apply one update
    /// per micro-batch.
    pub fn train_round(&mut self) -> Result<RoundOutput<S>> {
        let round = self.rounds_completed;
        let snapshot = self.params.snapshot();
        let mut batch = fill_effective_batch(
            &mut self.tasks,
            &snapshot,
            self.env.group_size,
            &self.env.limits,
            self.schedule.mini_batch_groups,
            self.env.max_attempts,
            &mut self.rng,
        )
        .map_err(Error::from)?;
        let sampled_accuracy = batch.sampled_correct as f64 / batch.sampled_responses as f64;
        let groups_filtered = batch.groups_filtered() as u64;
        let attempts = batch.attempts as u64;
        let max_norm = S::lit(self.schedule.grad_clip_norm);

        let mut metrics = Vec::with_capacity(self.schedule.updates_per_rollout());
        let mut regime_log = Vec::new();
        for (mb, chunk) in batch.groups.chunks_mut(self.schedule.micro_batch_groups).enumerate() {
            let update_index = self.updates_applied + 1;
            let diag = |e: Error| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("round {round}, micro-batch {mb}, update {update_index}: {msg}"))
                }
                other => other,
            };
            let mut out = accumulate_gradient(chunk, &self.clip, &self.params).map_err(diag)?;
            record_live_log_probs(chunk, &out.records);
            let (pre, post) = clip_grad_norm(&mut out.gradient, max_norm);
            apply_adamw_step(&mut self.optimizer, &mut self.params, &out.gradient).map_err(diag)?;
            self.updates_applied = update_index;

            let mut step = summarize(chunk, &out.records);
            step.update_index = update_index;
            step.rollout_round = round;
            step.micro_batch = mb as u64;
            step.sampled_accuracy = sampled_accuracy;
            step.grad_norm_pre_clip = pre.as_f64();
            step.grad_norm_post_clip = post.as_f64();
            step.groups_filtered = groups_filtered;
            step.attempts = attempts;
            metrics.push(step);

            if self.regime_log_stride > 0 && (update_index - 1).is_multiple_of(self.regime_log_stride) {
                regime_log.extend(out.records.iter().map(|rec| RegimeLogRecord {
                    update_index,
                    rollout_round: round,
                    task_id: chunk[rec.group].task_id,
                    token: to_f64_record(rec),
                }));
            }
        }
        self.rounds_completed += 1;
        Ok(RoundOutput {
            metrics,
            regime_log,
            batch,
        })
    }
}

fn record_live_log_probs<S: Scalar>(groups: &mut [GroupBatch<S>], records: &[TokenUpdateRecord<S>]) {
    for rec in records {
        let rollout = &mut groups[rec.group].rollouts[rec.response];
        if rollout.live_log_probs.len() != rollout.len() {
            rollout.live_log_probs = vec![S::zero(); rollout.len()];
        }
        rollout.live_log_probs[rec.position] = rec.log_prob_live;
    }
}

fn to_f64_record<S: Scalar>(rec: &TokenUpdateRecord<S>) -> TokenUpdateRecord<f64> {
    TokenUpdateRecord {
        group: rec.group,
        response: rec.response,
        position: rec.position,
        log_prob_live: rec.log_prob_live.as_f64(),
        log_prob_ref: rec.log_prob_ref.as_f64(),
        ratio: rec.ratio.as_f64(),
        advantage: rec.advantage.as_f64(),
        regime: rec.regime,
        effective_multiplier: rec.effective_multiplier.as_f64(),
        gradient_gated: rec.gradient_gated,
        masked: rec.masked,
        live_entropy: rec.live_entropy.as_f64(),
    }
}

/// Micro-batch statistics; index, norm and filtration fields are left for
/// the caller.
fn summarize<S: Scalar>(groups: &[GroupBatch<S>], records: &[TokenUpdateRecord<S>]) -> StepMetrics {
    let responses: usize = groups.iter().map(GroupBatch::group_size).sum();
    let correct: usize = groups
        .iter()
        .flat_map(|g| &g.rollouts)
        .filter(|r| r.reward.is_correct())
        .count();
    let mut counts = [0u64; 4];
    let (mut neutral, mut gated, mut masked) = (0u64, 0u64, 0u64);
    let mut entropy = 0.0;
    for rec in records {
        entropy += rec.live_entropy.as_f64();
        if rec.masked {
            masked += 1;
        } else if rec.gradient_gated {
            gated += 1;
        } else {
            match rec.regime {
                Regime::Neutral => neutral += 1,
                r => counts[r.index().expect("non-neutral regime has an index")] += 1,
            }
        }
    }
    let tokens = records.len() as u64;
    StepMetrics {
        update_index: 0,
        rollout_round: 0,
        micro_batch: 0,
        train_accuracy: correct as f64 / responses as f64,
        sampled_accuracy: 0.0,
        mean_token_entropy: if tokens > 0 { entropy / tokens as f64 } else { 0.0 },
        mean_response_length: tokens as f64 / responses as f64,
        regime_counts: RegimeCounts::from_array(counts),
        neutral_tokens: neutral,
        gated_tokens: gated,
        masked_tokens: masked,
        tokens,
        grad_norm_pre_clip: 0.0,
        grad_norm_post_clip: 0.0,
        groups_filtered: 0,
        attempts: 0,
    }
}
