mod overrides;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dispo_core::metrics::{
    default_profile_configs, emit_outputs, evaluate, parse_metrics_jsonl, render_plots, EvalReport, StepMetrics,
};
use dispo_core::objectives::{linear_grid, profile_rows, profiles_csv};
use dispo_core::policy::PolicyParams;
use dispo_core::task::read_manifest;
use dispo_core::trainer::{
    eval_seed, eval_task_set, run_experiment_with, Control, ExperimentConfig, RunResult, ABLATION_GRID, COMPARISON_GRID,
};
use dispo_core::{Error, Result, Scalar};
use overrides::ConfigArgs;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "dispo",
    version,
    about = "Clipped off-policy REINFORCE on tiny verifiable tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
        /// Suppress per-round progress on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate a checkpoint with Avg@k and print the report as JSON.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task manifest to evaluate on instead of the seed's held-out set.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Rollout round whose evaluation seed to reuse.
        #[arg(long, default_value_t = 0)]
        round: u64,
    },
    /// Write the gradient-weight profile CSV.
    Profile {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0.05)]
        r_min: f64,
        #[arg(long, default_value_t = 12.0)]
        r_max: f64,
        #[arg(long, default_value_t = 240)]
        points: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every preset of a grid for each seed, one after another.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Grid::Ablation)]
        grid: Grid,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Regenerate the SVG plots of a finished run directory.
    Plot {
        run_dir: PathBuf,
        #[arg(long)]
        smoothing: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Ablation,
    Comparison,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let record = json!({ "error": "usage", "message": e.to_string().trim() });
            eprintln!("{record}");
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { cfg, precision, quiet } => {
            let cfg = cfg.resolve()?;
            let dir = output_dir(&cfg)?;
            let summary = match precision {
                Precision::F64 => train::<f64>(&cfg, &dir, quiet)?,
                Precision::F32 => train::<f32>(&cfg, &dir, quiet)?,
            };
            println!("{summary}");
            Ok(())
        }
        Command::Eval {
            cfg,
            checkpoint,
            tasks,
            round,
        } => {
            let cfg = cfg.resolve()?;
            let report = eval_checkpoint(&cfg, &checkpoint, tasks.as_deref(), round)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(())
        }
        Command::Profile {
            cfg: args,
            r_min,
            r_max,
            points,
            out,
        } => {
            let cfg = args.resolve()?;
            let configs = if args.names_algorithm(&cfg) {
                vec![cfg.clip_config()?]
            } else {
                default_profile_configs()
            };
            let csv = profiles_csv(&profile_rows(&configs, &linear_grid(r_min, r_max, points)?)?);
            match out {
                Some(path) => fs::write(&path, csv).map_err(|e| Error::Io { path, source: e }),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Command::Ablate {
            cfg,
            grid,
            seeds,
            quiet,
        } => {
            let base = cfg.resolve()?;
            ablate(&base, grid, &seeds, quiet)
        }
        Command::Plot { run_dir, smoothing } => plot(&run_dir, smoothing),
    }
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir is required (--output-dir or config key)".into()))
}

fn train<S: Scalar>(cfg: &ExperimentConfig, dir: &Path, quiet: bool) -> Result<String> {
    let run = run_verbose::<S>(cfg, quiet)?;
    emit_outputs(&run, dir)?;
    let path = dir.join("summary.json");
    fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })
}

fn run_verbose<S: Scalar>(cfg: &ExperimentConfig, quiet: bool) -> Result<RunResult<S>> {
    let per_round = cfg.updates_per_rollout();
    run_experiment_with::<S, _>(cfg, |m| {
        if !quiet {
            let round = &m[m.len() - per_round..];
            let mean = |f: fn(&StepMetrics) -> f64| round.iter().map(f).sum::<f64>() / round.len() as f64;
            eprintln!(
                "round {:>4}/{} update {:>6} train_acc {:.3} entropy {:.4} length {:.1}",
                round[0].rollout_round + 1,
                cfg.rounds,
                m.len(),
                mean(|s| s.train_accuracy),
                mean(|s| s.mean_token_entropy),
                mean(|s| s.mean_response_length),
            );
        }
        Control::Continue
    })
}

fn eval_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, tasks: Option<&Path>, round: u64) -> Result<EvalReport> {
    let params = PolicyParams::<f64>::load(checkpoint)?;
    let vocab = cfg.vocab()?;
    if params.vocab_size() != vocab.size() {
        return Err(Error::Config(format!(
            "checkpoint vocabulary has {} symbols but the config has {}",
            params.vocab_size(),
            vocab.size()
        )));
    }
    let tasks = match tasks {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            read_manifest(&text, &vocab)?
        }
        None => eval_task_set(cfg)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(cfg.seed, round));
    let mut report = evaluate(&params, &tasks, cfg.eval_k, &cfg.rollout_limits()?, &mut rng)?;
    report.rollout_round = round;
    Ok(report)
}

const ABLATION_CSV_HEADER: &str =
    "preset,seed,updates,final_train_accuracy,final_third_entropy,final_avg_at_k,best_avg_at_k,stop";

fn ablate(base: &ExperimentConfig, grid: Grid, seeds: &[u64], quiet: bool) -> Result<()> {
    let root = output_dir(base)?;
    let presets = match grid {
        Grid::Ablation => ABLATION_GRID,
        Grid::Comparison => COMPARISON_GRID,
    };
    let mut csv = format!("{ABLATION_CSV_HEADER}\n");
    for &name in presets {
        for &seed in seeds {
            let dir = root.join(name).join(format!("seed-{seed}"));
            let cfg = ExperimentConfig {
                seed,
                preset: Some(name.to_string()),
                output_dir: Some(dir.clone()),
                ..base.clone()
            };
            if !quiet {
                eprintln!("== {name} seed {seed}");
            }
            let run = run_verbose::<f64>(&cfg, quiet)?;
            emit_outputs(&run, &dir)?;
            let n = run.metrics.len();
            let tail = &run.metrics[2 * n / 3..];
            let entropy = tail.iter().map(|m| m.mean_token_entropy).sum::<f64>() / tail.len().max(1) as f64;
            let best = run.best.as_ref().map(|(i, _)| run.evals[*i].avg_at_k);
            csv.push_str(&format!(
                "{name},{seed},{n},{:?},{entropy:?},{:?},{:?},{}\n",
                run.metrics.last().map_or(f64::NAN, |m| m.train_accuracy),
                run.evals.last().map_or(f64::NAN, |e| e.avg_at_k),
                best.unwrap_or(f64::NAN),
                stop_name(&run.stop),
            ));
        }
    }
    fs::create_dir_all(&root).map_err(|e| Error::Io {
        path: root.clone(),
        source: e,
    })?;
    let path = root.join("ablation.csv");
    fs::write(&path, &csv).map_err(|e| Error::Io { path, source: e })?;
    print!("{csv}");
    Ok(())
}

fn stop_name(stop: &dispo_core::trainer::StopReason) -> &'static str {
    use dispo_core::trainer::StopReason::*;
    match stop {
        Completed => "completed",
        Stopped { .. } => "stopped",
        BatchStarvation { .. } => "batch_starvation",
    }
}

fn read(path: PathBuf) -> Result<String> {
    fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })
}

fn parse_eval_csv(text: &str) -> Result<Vec<EvalReport>> {
    let bad = |line: &str| Error::Config(format!("malformed eval.csv line: {line}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(line));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(line));
            Ok(EvalReport {
                update_index: f[0].parse().map_err(|_| bad(line))?,
                rollout_round: f[1].parse().map_err(|_| bad(line))?,
                k: f[2].parse().map_err(|_| bad(line))?,
                per_task_accuracy: Vec::new(),
                avg_at_k: num(3)?,
                mean_entropy: num(4)?,
                mean_length: num(5)?,
                best_so_far: f[6].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

fn plot(run_dir: &Path, smoothing: Option<usize>) -> Result<()> {
    let metrics = parse_metrics_jsonl(&read(run_dir.join("metrics.jsonl"))?)?;
    let evals = match run_dir.join("eval.csv") {
        p if p.exists() => parse_eval_csv(&read(p)?)?,
        _ => Vec::new(),
    };
    let smoothing = match smoothing {
        Some(s) => s,
        None => ExperimentConfig::load(&run_dir.join("config.toml")).map_or(1, |c| c.plot_smoothing),
    };
    for file in render_plots(&metrics, &evals, smoothing.max(1)) {
        let path = run_dir.join(file.name);
        fs::write(&path, file.svg).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        println!("{}", path.display());
    }
    Ok(())
}
