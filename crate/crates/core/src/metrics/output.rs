use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::plot::render_plots;
use super::{EvalReport, StepMetrics};
use crate::error::{Error, Result};
use crate::objectives::{linear_grid, profile_rows, profiles_csv, ClipConfig};
use crate::scalar::Scalar;
use crate::task::write_manifest;
use crate::trainer::{RunResult, StopReason};

pub const EVAL_CSV_HEADER: &str = "update_index,rollout_round,k,avg_at_k,mean_entropy,mean_length,best_so_far";

/// One JSON object per line, in update order.
pub fn metrics_jsonl(metrics: &[StepMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("step metrics serialize"));
        out.push('\n');
    }
    out
}

/// Parses `metrics.jsonl`, checking that update indices strictly increase.
pub fn parse_metrics_jsonl(text: &str) -> Result<Vec<StepMetrics>> {
    let mut out: Vec<StepMetrics> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: StepMetrics =
            serde_json::from_str(line).map_err(|e| Error::Config(format!("metrics line {}: {e}", n + 1)))?;
        if let Some(prev) = out.last() {
            if m.update_index <= prev.update_index {
                return Err(Error::Config(format!(
                    "metrics line {}: update_index {} does not follow {}",
                    n + 1,
                    m.update_index,
                    prev.update_index
                )));
            }
        }
        out.push(m);
    }
    Ok(out)
}

pub fn eval_csv(evals: &[EvalReport]) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for e in evals {
        out.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{}\n",
            e.update_index, e.rollout_round, e.k, e.avg_at_k, e.mean_entropy, e.mean_length, e.best_so_far
        ));
    }
    out
}

/// Configurations profiled into every run's `profiles.csv`. CISPO shares
/// DAPO's window here so its plateau shows up next to DAPO's cutoff.
pub fn default_profile_configs() -> Vec<ClipConfig<f64>> {
    vec![
        ClipConfig::reinforce(),
        ClipConfig::grpo(0.2),
        ClipConfig::dapo(0.2, 0.28),
        ClipConfig::cispo(0.2, 0.28),
        ClipConfig::dispo(0.2, 10.0, 1.0, 100.0),
    ]
}

/// `0.05, 0.10, …, 12.0`.
pub fn default_profile_grid() -> Vec<f64> {
    linear_grid(0.05, 12.0, 240).expect("static grid is valid")
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    stop: &'a StopReason,
    updates: u64,
    rollout_rounds: u64,
    final_train_accuracy: Option<f64>,
    final_avg_at_k: Option<f64>,
    best_eval_index: Option<usize>,
    best_update_index: Option<u64>,
    best_avg_at_k: Option<f64>,
    num_parameters: usize,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes every run artifact into `dir`, creating it if needed, and
/// returns the paths written.
pub fn emit_outputs<S: Scalar>(run: &RunResult<S>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir, "metrics.jsonl", metrics_jsonl(&run.metrics), &mut written)?;
    write(dir, "eval.csv", eval_csv(&run.evals), &mut written)?;
    let rows = profile_rows(&default_profile_configs(), &default_profile_grid())?;
    write(dir, "profiles.csv", profiles_csv(&rows), &mut written)?;
    write(dir, "config.toml", run.config.to_toml_string(), &mut written)?;
    write(
        dir,
        "eval_tasks.jsonl",
        write_manifest(&run.eval_tasks, &run.config.vocab()?),
        &mut written,
    )?;
    write(dir, "final.ckpt", run.final_params.to_checkpoint_bytes(), &mut written)?;
    if let Some((_, best)) = &run.best {
        write(dir, "best.ckpt", best.to_checkpoint_bytes(), &mut written)?;
    }
    for plot in render_plots(&run.metrics, &run.evals, run.config.plot_smoothing) {
        write(dir, plot.name, plot.svg, &mut written)?;
    }
    if run.config.regime_log_stride > 0 {
        let mut text = String::new();
        for rec in &run.regime_log {
            text.push_str(&serde_json::to_string(rec).expect("regime record serializes"));
            text.push('\n');
        }
        write(dir, "regime_log.jsonl", text, &mut written)?;
    }
    if run.config.dump_rollouts {
        let mut text = String::new();
        for rec in &run.rollout_dump {
            text.push_str(&serde_json::to_string(rec).expect("rollout record serializes"));
            text.push('\n');
        }
        write(dir, "rollouts.jsonl", text, &mut written)?;
    }

    let best = run.best.as_ref().map(|(i, _)| &run.evals[*i]);
    let summary = Summary {
        stop: &run.stop,
        updates: run.metrics.last().map_or(0, |m| m.update_index),
        rollout_rounds: run.metrics.last().map_or(0, |m| m.rollout_round + 1),
        final_train_accuracy: run.metrics.last().map(|m| m.train_accuracy),
        final_avg_at_k: run.evals.last().map(|e| e.avg_at_k),
        best_eval_index: run.best.as_ref().map(|(i, _)| *i),
        best_update_index: best.map(|e| e.update_index),
        best_avg_at_k: best.map(|e| e.avg_at_k),
        num_parameters: run.final_params.weights().len(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(dir, "summary.json", text + "\n", &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RegimeCounts;

    fn step(i: u64) -> StepMetrics {
        StepMetrics {
            update_index: i,
            rollout_round: 0,
            micro_batch: i - 1,
            train_accuracy: 0.5,
            sampled_accuracy: 0.25,
            mean_token_entropy: 1.0,
            mean_response_length: 4.0,
            regime_counts: RegimeCounts::from_array([1, 2, 3, 4]),
            neutral_tokens: 0,
            gated_tokens: 0,
            masked_tokens: 0,
            tokens: 10,
            grad_norm_pre_clip: 2.0,
            grad_norm_post_clip: 1.0,
            groups_filtered: 3,
            attempts: 7,
        }
    }

    #[test]
    fn metrics_round_trip_one_line_per_update() {
        let m: Vec<_> = (1..=100).map(step).collect();
        let text = metrics_jsonl(&m);
        assert_eq!(text.lines().count(), 100);
        assert_eq!(parse_metrics_jsonl(&text).unwrap(), m);
    }

    #[test]
    fn parse_rejects_non_monotone_indices() {
        let text = metrics_jsonl(&[step(2), step(1)]);
        assert!(parse_metrics_jsonl(&text).is_err());
    }

    #[test]
    fn eval_csv_has_header_and_rows() {
        let e = EvalReport {
            update_index: 16,
            rollout_round: 1,
            k: 4,
            per_task_accuracy: vec![0.5],
            avg_at_k: 0.5,
            mean_entropy: 1.25,
            mean_length: 3.0,
            best_so_far: true,
        };
        assert_eq!(eval_csv(&[e]), format!("{EVAL_CSV_HEADER}\n16,1,4,0.5,1.25,3.0,true\n"));
    }
}
