use std::path::PathBuf;

use clap::Args;
use dispo_core::objectives::{Algorithm, Normalization};
use dispo_core::policy::FeatureMap;
use dispo_core::task::TaskKind;
use dispo_core::trainer::ExperimentConfig;
use dispo_core::Result;

/// Experiment keys settable from the command line. Each flag mirrors the
/// config key of the same name with dashes for underscores.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub eps_low: Option<f64>,
    #[arg(long)]
    pub eps_high: Option<f64>,
    #[arg(long)]
    pub eps_plus_low: Option<f64>,
    #[arg(long)]
    pub eps_plus_high: Option<f64>,
    #[arg(long)]
    pub eps_minus_low: Option<f64>,
    #[arg(long)]
    pub eps_minus_high: Option<f64>,
    #[arg(long)]
    pub correct_only: Option<bool>,
    #[arg(long)]
    pub normalization: Option<Normalization>,

    #[arg(long)]
    pub task_kind: Option<TaskKind>,
    #[arg(long)]
    pub modulus: Option<u32>,
    #[arg(long)]
    pub extra_symbols: Option<usize>,
    #[arg(long)]
    pub soft_limit: Option<usize>,
    #[arg(long)]
    pub hard_limit: Option<usize>,
    #[arg(long)]
    pub rep_window: Option<usize>,
    #[arg(long)]
    pub rep_threshold: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub max_attempts: Option<usize>,

    #[arg(long)]
    pub context_window: Option<usize>,
    #[arg(long)]
    pub feature_map: Option<FeatureMap>,
    /// `zeros` or `gaussian:<std>`.
    #[arg(long)]
    pub init: Option<String>,

    /// Kept groups per rollout round.
    #[arg(long, visible_alias = "target-groups")]
    pub mini_batch_groups: Option<usize>,
    #[arg(long)]
    pub micro_batch_groups: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_tasks: Option<usize>,
    #[arg(long)]
    pub eval_k: Option<usize>,

    #[arg(long, visible_alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_epsilon: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,

    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub regime_log_stride: Option<u64>,
    #[arg(long)]
    pub dump_rollouts: Option<bool>,
    #[arg(long)]
    pub plot_smoothing: Option<usize>,
}

macro_rules! apply {
    ($args:expr, $cfg:expr, [$($plain:ident),*], [$($optional:ident),*]) => {{
        $(if let Some(v) = $args.$plain.clone() { $cfg.$plain = v; })*
        $(if let Some(v) = $args.$optional.clone() { $cfg.$optional = Some(v); })*
    }};
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        apply!(
            self,
            cfg,
            [
                seed,
                algorithm,
                task_kind,
                modulus,
                extra_symbols,
                soft_limit,
                hard_limit,
                rep_window,
                rep_threshold,
                group_size,
                context_window,
                feature_map,
                init,
                mini_batch_groups,
                micro_batch_groups,
                rounds,
                grad_clip_norm,
                eval_every,
                eval_tasks,
                eval_k,
                learning_rate,
                beta1,
                beta2,
                adam_epsilon,
                weight_decay,
                regime_log_stride,
                dump_rollouts,
                plot_smoothing
            ],
            [
                preset,
                eps_low,
                eps_high,
                eps_plus_low,
                eps_plus_high,
                eps_minus_low,
                eps_minus_high,
                correct_only,
                normalization,
                max_attempts,
                output_dir
            ]
        );
        cfg.validate()?;
        Ok(cfg)
    }

    /// True when the flags or config file pick a specific clipping setup.
    pub fn names_algorithm(&self, cfg: &ExperimentConfig) -> bool {
        self.algorithm.is_some() || cfg.preset.is_some() || self.config.is_some()
    }
}
