//! Off-policy training loop: snapshot, dynamic sampling, micro-batch
//! updates with AdamW, plus experiment configuration and presets.

mod config;
mod experiment;
mod optimizer;
mod presets;
mod round;

pub use config::{ExperimentConfig, DEFAULT_MAX_ATTEMPTS_FACTOR};
pub use experiment::{
    derive_seed, eval_seed, eval_task_set, run_experiment, run_experiment_with, Control, RunResult, SeedStream,
    StopReason,
};
pub use optimizer::{apply_adamw_step, clip_grad_norm, AdamWConfig, OptimizerState};
pub use presets::{algorithm_default, preset, Preset, ABLATION_GRID, COMPARISON_GRID, PRESETS};
pub use round::{RegimeLogRecord, RoundOutput, TrainEnv, TrainSchedule, Trainer};
