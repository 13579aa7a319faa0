use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optimizer::AdamWConfig;
use super::presets::{algorithm_default, preset};
use crate::error::{Error, Result};
use crate::objectives::{Algorithm, ClipConfig, Normalization};
use crate::policy::{FeatureMap, Init};
use crate::sampler::{RolloutLimits, DEFAULT_GROUP_SIZE, DEFAULT_REP_THRESHOLD, DEFAULT_REP_WINDOW};
use crate::task::{TaskKind, Vocab};

/// Multiplier applied to `mini_batch_groups` when `max_attempts` is unset.
pub const DEFAULT_MAX_ATTEMPTS_FACTOR: usize = 40;

/// Flat key/value experiment description, read from TOML.
///
/// Clipping resolves in three layers: the algorithm's default window, then
/// the named preset (which also fixes the algorithm), then any explicit
/// `eps_*`, `correct_only` or `normalization` keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preset: Option<String>,
    pub algorithm: Algorithm,
    pub eps_low: Option<f64>,
    pub eps_high: Option<f64>,
    pub eps_plus_low: Option<f64>,
    pub eps_plus_high: Option<f64>,
    pub eps_minus_low: Option<f64>,
    pub eps_minus_high: Option<f64>,
    pub correct_only: Option<bool>,
    pub normalization: Option<Normalization>,

    pub task_kind: TaskKind,
    pub modulus: u32,
    pub extra_symbols: usize,
    pub soft_limit: usize,
    pub hard_limit: usize,
    pub rep_window: usize,
    pub rep_threshold: usize,
    pub group_size: usize,
    pub max_attempts: Option<usize>,

    pub context_window: usize,
    pub feature_map: FeatureMap,
    pub init: String,

    pub mini_batch_groups: usize,
    pub micro_batch_groups: usize,
    pub rounds: usize,
    pub grad_clip_norm: f64,
    pub eval_every: usize,
    pub eval_tasks: usize,
    pub eval_k: usize,

    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,

    pub output_dir: Option<PathBuf>,
    /// Log per-token regime records every this many updates; 0 disables.
    pub regime_log_stride: u64,
    pub dump_rollouts: bool,
    /// Moving-average window applied by the SVG plots.
    pub plot_smoothing: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            seed: 0,
            preset: None,
            algorithm: Algorithm::Dispo,
            eps_low: None,
            eps_high: None,
            eps_plus_low: None,
            eps_plus_high: None,
            eps_minus_low: None,
            eps_minus_high: None,
            correct_only: None,
            normalization: None,
            task_kind: TaskKind::AddMod,
            modulus: 10,
            extra_symbols: 0,
            soft_limit: 32,
            hard_limit: 64,
            rep_window: DEFAULT_REP_WINDOW,
            rep_threshold: DEFAULT_REP_THRESHOLD,
            group_size: DEFAULT_GROUP_SIZE,
            max_attempts: None,
            context_window: 8,
            feature_map: FeatureMap::OneHotPairs,
            init: "zeros".into(),
            mini_batch_groups: 32,
            micro_batch_groups: 2,
            rounds: 125,
            grad_clip_norm: 1.0,
            eval_every: 5,
            eval_tasks: 50,
            eval_k: 16,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            weight_decay: adam.weight_decay,
            output_dir: None,
            regime_log_stride: 0,
            dump_rollouts: false,
            plot_smoothing: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    /// Resolved clipping switchboard.
    pub fn clip_config(&self) -> Result<ClipConfig<f64>> {
        let mut clip = match &self.preset {
            Some(name) => preset(name)?.clip,
            None => algorithm_default(self.algorithm),
        };
        let overrides = [
            (&mut clip.eps_low, self.eps_low),
            (&mut clip.eps_high, self.eps_high),
            (&mut clip.eps_plus_low, self.eps_plus_low),
            (&mut clip.eps_plus_high, self.eps_plus_high),
            (&mut clip.eps_minus_low, self.eps_minus_low),
            (&mut clip.eps_minus_high, self.eps_minus_high),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(c) = self.correct_only {
            clip.correct_only = c;
        }
        if self.normalization.is_some() {
            clip.normalization = self.normalization;
        }
        clip.validate()?;
        Ok(clip)
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::with_extra_symbols(self.extra_symbols)
    }

    pub fn rollout_limits(&self) -> Result<RolloutLimits> {
        RolloutLimits::new(self.soft_limit, self.hard_limit, self.rep_window, self.rep_threshold)
    }

    pub fn init_scheme(&self) -> Result<Init> {
        self.init.parse()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn max_attempts(&self) -> usize {
        self.max_attempts
            .unwrap_or(DEFAULT_MAX_ATTEMPTS_FACTOR * self.mini_batch_groups)
    }

    pub fn updates_per_rollout(&self) -> usize {
        self.mini_batch_groups / self.micro_batch_groups.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.clip_config()?;
        self.vocab()?;
        self.rollout_limits()?;
        self.init_scheme()?;
        self.adamw().validate()?;
        crate::task::generate_task(0, self.task_kind, self.modulus)?;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.group_size < 2 {
            return fail(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if self.context_window == 0 {
            return fail("context_window must be positive".into());
        }
        if self.micro_batch_groups == 0 || self.mini_batch_groups == 0 {
            return fail("batch sizes must be positive".into());
        }
        if !self.mini_batch_groups.is_multiple_of(self.micro_batch_groups) {
            return fail(format!(
                "micro_batch_groups ({}) must divide mini_batch_groups ({})",
                self.micro_batch_groups, self.mini_batch_groups
            ));
        }
        if self.max_attempts() < self.mini_batch_groups {
            return fail(format!(
                "max_attempts ({}) must be >= mini_batch_groups ({})",
                self.max_attempts(),
                self.mini_batch_groups
            ));
        }
        if !(self.grad_clip_norm > 0.0 && self.grad_clip_norm.is_finite()) {
            return fail(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        if self.eval_k == 0 || self.eval_tasks == 0 {
            return fail("eval_k and eval_tasks must be positive".into());
        }
        if self.plot_smoothing == 0 {
            return fail("plot_smoothing must be >= 1".into());
        }
        Ok(())
    }
}
