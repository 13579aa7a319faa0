//! Evaluation, per-update metrics, checkpoint selection and run outputs.

mod eval;
mod output;
mod plot;

use serde::{Deserialize, Serialize};

pub use eval::{chance_accuracy_uniform, evaluate, select_best_checkpoint, EvalReport};
pub use output::{
    default_profile_configs, default_profile_grid, emit_outputs, eval_csv, metrics_jsonl, parse_metrics_jsonl,
    EVAL_CSV_HEADER,
};
pub use plot::{render_plots, PlotFile};

/// Regime counters over contributing tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeCounts {
    pub r1_amp_pos: u64,
    pub r2_sup_pos: u64,
    pub r3_amp_neg: u64,
    pub r4_sup_neg: u64,
}

impl RegimeCounts {
    pub fn from_array(c: [u64; 4]) -> Self {
        Self {
            r1_amp_pos: c[0],
            r2_sup_pos: c[1],
            r3_amp_neg: c[2],
            r4_sup_neg: c[3],
        }
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.r1_amp_pos, self.r2_sup_pos, self.r3_amp_neg, self.r4_sup_neg]
    }

    pub fn total(&self) -> u64 {
        self.as_array().iter().sum()
    }

    pub fn add(&mut self, other: &RegimeCounts) {
        self.r1_amp_pos += other.r1_amp_pos;
        self.r2_sup_pos += other.r2_sup_pos;
        self.r3_amp_neg += other.r3_amp_neg;
        self.r4_sup_neg += other.r4_sup_neg;
    }
}

/// One record per applied optimizer update.
///
/// Accuracy, entropy and length describe the micro-batch the update
/// consumed. `tokens` equals the regime counts plus the neutral, gated and
/// masked counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 1-based count of applied updates.
    pub update_index: u64,
    /// 0-based rollout round the update belongs to.
    pub rollout_round: u64,
    pub micro_batch: u64,
    /// Fraction of rollouts in the micro-batch's kept groups that the
    /// verifier accepted.
    pub train_accuracy: f64,
    /// Accuracy over every group sampled this round, filtered or not.
    pub sampled_accuracy: f64,
    /// Mean live-policy next-token entropy over generated positions (nats).
    pub mean_token_entropy: f64,
    pub mean_response_length: f64,
    pub regime_counts: RegimeCounts,
    pub neutral_tokens: u64,
    pub gated_tokens: u64,
    pub masked_tokens: u64,
    pub tokens: u64,
    pub grad_norm_pre_clip: f64,
    pub grad_norm_post_clip: f64,
    /// Groups dropped by dynamic sampling in this update's rollout round.
    pub groups_filtered: u64,
    pub attempts: u64,
}
