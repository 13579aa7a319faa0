use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::optimizer::OptimizerState;
use super::round::{RegimeLogRecord, TrainEnv, TrainSchedule, Trainer};
use crate::error::{Error, Result, StarvationStats};
use crate::metrics::{evaluate, EvalReport, StepMetrics};
use crate::policy::PolicyParams;
use crate::sampler::RolloutDumpRecord;
use crate::scalar::Scalar;
use crate::task::{Task, TaskStream};

/// Independent random streams derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    TrainTasks,
    Rollouts,
    EvalTasks,
    EvalSampling,
    Init,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: SeedStream) -> u64 {
    let tag = match stream {
        SeedStream::TrainTasks => 1,
        SeedStream::Rollouts => 2,
        SeedStream::EvalTasks => 3,
        SeedStream::EvalSampling => 4,
        SeedStream::Init => 5,
    };
    splitmix64(splitmix64(seed) ^ tag)
}

/// Seed of the evaluation taken after `rollout_round` completed rounds.
pub fn eval_seed(seed: u64, rollout_round: u64) -> u64 {
    splitmix64(derive_seed(seed, SeedStream::EvalSampling) ^ rollout_round)
}

/// The held-out evaluation tasks for `config`.
pub fn eval_task_set(config: &ExperimentConfig) -> Result<Vec<Task>> {
    Ok(TaskStream::new(
        derive_seed(config.seed, SeedStream::EvalTasks),
        config.task_kind,
        config.modulus,
    )?
    .take_tasks(config.eval_tasks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// The observer asked to stop after this many updates.
    Stopped {
        updates: u64,
    },
    BatchStarvation {
        rollout_round: u64,
        stats: StarvationStats,
    },
}

/// Everything a finished (or stopped) run produced.
#[derive(Debug, Clone)]
pub struct RunResult<S> {
    pub config: ExperimentConfig,
    pub metrics: Vec<StepMetrics>,
    pub evals: Vec<EvalReport>,
    pub regime_log: Vec<RegimeLogRecord>,
    pub rollout_dump: Vec<RolloutDumpRecord>,
    pub eval_tasks: Vec<Task>,
    pub final_params: PolicyParams<S>,
    /// Parameters at the best evaluation, with its index into `evals`.
    pub best: Option<(usize, PolicyParams<S>)>,
    pub stop: StopReason,
}

/// Returned by the observer after each rollout round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub fn run_experiment<S: Scalar>(config: &ExperimentConfig) -> Result<RunResult<S>> {
    run_experiment_with(config, |_| Control::Continue)
}

/// Runs `config.rounds` rollout rounds, calling `observer` with the metrics
/// so far after each one.
///
/// Evaluations happen before training, every `eval_every` rounds and after
/// the last round. Batch starvation ends the run early with a
/// [`StopReason::BatchStarvation`] instead of an error.
pub fn run_experiment_with<S, F>(config: &ExperimentConfig, mut observer: F) -> Result<RunResult<S>>
where
    S: Scalar,
    F: FnMut(&[StepMetrics]) -> Control,
{
    config.validate()?;
    let vocab = config.vocab()?;
    let limits = config.rollout_limits()?;
    let clip = config.clip_config()?.cast::<S>();
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SeedStream::Init));
    let params = PolicyParams::<S>::init(
        vocab.size(),
        config.context_window,
        config.feature_map,
        config.init_scheme()?,
        &mut init_rng,
    )?;
    let optimizer = OptimizerState::new(params.weights().len(), config.adamw())?;
    let schedule = TrainSchedule {
        mini_batch_groups: config.mini_batch_groups,
        micro_batch_groups: config.micro_batch_groups,
        total_rollout_rounds: config.rounds,
        grad_clip_norm: config.grad_clip_norm,
        eval_every: config.eval_every,
    };
    let env = TrainEnv {
        task_kind: config.task_kind,
        modulus: config.modulus,
        limits,
        group_size: config.group_size,
        max_attempts: config.max_attempts(),
    };
    let mut trainer = Trainer::new(
        params,
        optimizer,
        clip,
        schedule,
        env,
        derive_seed(config.seed, SeedStream::TrainTasks),
        derive_seed(config.seed, SeedStream::Rollouts),
    )?
    .with_regime_log_stride(config.regime_log_stride);

    let eval_tasks = eval_task_set(config)?;

    let mut metrics: Vec<StepMetrics> = Vec::new();
    let mut evals: Vec<EvalReport> = Vec::new();
    let mut regime_log = Vec::new();
    let mut rollout_dump = Vec::new();
    let mut best: Option<(usize, PolicyParams<S>)> = None;

    let run_eval = |trainer: &Trainer<S>,
                    evals: &mut Vec<EvalReport>,
                    best: &mut Option<(usize, PolicyParams<S>)>|
     -> Result<()> {
        let round = trainer.rounds_completed();
        let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(config.seed, round));
        let mut report = evaluate(trainer.params(), &eval_tasks, config.eval_k, &limits, &mut rng)?;
        report.update_index = trainer.updates_applied();
        report.rollout_round = round;
        let improved = best.as_ref().is_none_or(|(i, _)| report.avg_at_k > evals[*i].avg_at_k);
        report.best_so_far = improved;
        evals.push(report);
        if improved {
            *best = Some((evals.len() - 1, trainer.params().clone()));
        }
        Ok(())
    };

    run_eval(&trainer, &mut evals, &mut best)?;
    let mut stop = StopReason::Completed;
    for round in 0..config.rounds {
        let out = match trainer.train_round() {
            Ok(out) => out,
            Err(Error::BatchStarvation(stats)) => {
                stop = StopReason::BatchStarvation {
                    rollout_round: round as u64,
                    stats,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        metrics.extend(out.metrics);
        regime_log.extend(out.regime_log);
        if config.dump_rollouts {
            for group in &out.batch.groups {
                for rollout in &group.rollouts {
                    rollout_dump.push(RolloutDumpRecord::new(group, rollout, &vocab));
                }
            }
        }
        let last = round + 1 == config.rounds;
        if !last && config.eval_every > 0 && (round + 1) % config.eval_every == 0 {
            run_eval(&trainer, &mut evals, &mut best)?;
        }
        if !last && observer(&metrics) == Control::Stop {
            stop = StopReason::Stopped {
                updates: trainer.updates_applied(),
            };
            break;
        }
    }
    if evals.last().map(|e| e.update_index) != Some(trainer.updates_applied()) {
        run_eval(&trainer, &mut evals, &mut best)?;
    }

    Ok(RunResult {
        config: config.clone(),
        metrics,
        evals,
        regime_log,
        rollout_dump,
        eval_tasks,
        final_params: trainer.into_params(),
        best,
        stop,
    })
}
