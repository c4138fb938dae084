//! Experiment orchestration: multi-trial runs, algorithm comparisons, the
//! observation-range sweep and the update ablation, with CSV, SVG and
//! checkpoint output.

pub mod baseline;
pub mod config;
pub mod plot;
pub mod report;
pub mod trial;

use std::fs;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{parse_config, Algorithm, ExperimentConfig};
pub use plot::{Chart, Series};
pub use report::{Aggregate, AggregateRow, Stat};
pub use trial::{run_trial, EpisodeRow, Phase, TrialResult};

use crate::nn::{checkpoint, NnError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] NnError),
    #[error("trial {trial} diverged in episode {episode}")]
    Diverged { trial: usize, episode: usize },
    #[error("trial {trial} panicked: {message}")]
    Panicked { trial: usize, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Outcome of a multi-trial run.
#[derive(Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    /// Completed trials in trial order. Network snapshots are dropped once
    /// written.
    pub trials: Vec<TrialResult>,
    pub failures: Vec<(usize, String)>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_guarded(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult, HarnessError> {
    match catch_unwind(AssertUnwindSafe(|| run_trial(cfg, trial))) {
        Ok(r) => r,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(HarnessError::Panicked { trial, message })
        }
    }
}

fn write_checkpoints(dir: &Path, result: &TrialResult) -> Result<(), HarnessError> {
    let dir = dir.join(format!("trial_{:03}", result.trial));
    create_dir(&dir)?;
    for (name, net) in &result.networks {
        let path = dir.join(format!("{name}.bin"));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        checkpoint::write_binary(net, &mut w)?;
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn write_world_dump(dir: &Path, result: &TrialResult) -> Result<(), HarnessError> {
    create_dir(dir)?;
    let path = dir.join(format!("trial_{:03}.jsonl", result.trial));
    let mut text = String::new();
    for rec in &result.world_dump {
        text.push_str(&serde_json::to_string(rec).expect("step record serializes"));
        text.push('\n');
    }
    write_file(&path, &text)
}

/// Runs `cfg.trials` seeded trials and writes everything under `out`.
///
/// A failing trial is logged and listed in `failures.txt`; the remaining
/// trials are still aggregated.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    create_dir(out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;
    log::info!(
        "{} on {}: {} trials, {}+{} episodes, dp {}",
        cfg.algorithm,
        cfg.scenario.name(),
        cfg.trials,
        cfg.episodes_centralized,
        cfg.episodes_decentralized,
        cfg.dp
    );
    let outcomes: Vec<Result<TrialResult, HarnessError>> =
        (0..cfg.trials).into_par_iter().map(|t| run_guarded(cfg, t)).collect();

    let trials_dir = out.join("trials");
    create_dir(&trials_dir)?;
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(mut r) => {
                report::write_trial_csv(&trials_dir.join(format!("trial_{t:03}.csv")), &r.rows)?;
                if cfg.checkpoints {
                    write_checkpoints(&out.join("checkpoints"), &r)?;
                }
                if cfg.dump_world {
                    write_world_dump(&out.join("trajectories"), &r)?;
                }
                r.networks.clear();
                trials.push(r);
            }
            Err(e) => {
                log::error!("trial {t} failed: {e}");
                failures.push((t, e.to_string()));
            }
        }
    }
    let failure_path = out.join("failures.txt");
    if failures.is_empty() {
        if failure_path.exists() {
            fs::remove_file(&failure_path).map_err(io_err(&failure_path))?;
        }
    } else {
        let text: String = failures.iter().map(|(t, m)| format!("trial {t}: {m}\n")).collect();
        write_file(&failure_path, &text)?;
    }
    let rows: Vec<&[EpisodeRow]> = trials.iter().map(|t| t.rows.as_slice()).collect();
    let aggregate = Aggregate::from_trials(&rows);
    aggregate.write_csv(&out.join("aggregate.csv"))?;
    render_charts(out, "aggregate.csv", &aggregate)?;
    Ok(ExperimentReport {
        out_dir: out.to_path_buf(),
        trials,
        failures,
        aggregate,
    })
}

/// Side-by-side table of one metric taken from several aggregates.
pub fn side_by_side(parts: &[(String, &Aggregate)], metric: &str) -> Aggregate {
    let n_episodes = parts.iter().map(|(_, a)| a.rows.len()).max().unwrap_or(0);
    let columns = parts.iter().map(|(label, _)| format!("{metric}_{label}")).collect();
    let rows = (0..n_episodes)
        .map(|e| {
            let phase = parts
                .iter()
                .find_map(|(_, a)| a.rows.get(e).map(|r| r.phase))
                .unwrap_or(0);
            let stats = parts
                .iter()
                .map(|(_, a)| {
                    let c = a.column(metric)?;
                    a.rows.get(e).and_then(|r| r.stats[c])
                })
                .collect();
            AggregateRow {
                episode: e,
                phase,
                stats,
            }
        })
        .collect();
    Aggregate { columns, rows }
}

fn chart_from(agg: &Aggregate, title: &str, y_label: &str, columns: &[usize]) -> Chart {
    Chart {
        title: title.to_string(),
        x_label: "episode".into(),
        y_label: y_label.to_string(),
        series: columns
            .iter()
            .map(|&c| Series {
                label: agg.columns[c].clone(),
                points: agg
                    .rows
                    .iter()
                    .filter_map(|r| r.stats[c].map(|s| (r.episode as f64, s.mean, s.std)))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect(),
        marker: agg.phase_boundary().map(|b| b as f64 - 0.5),
    }
}

/// Charts drawn for each known table name.
fn charts_for(table: &str, agg: &Aggregate) -> Vec<(&'static str, Chart)> {
    let with_prefix = |p: &str| -> Vec<usize> {
        (0..agg.columns.len())
            .filter(|&c| agg.columns[c].starts_with(p))
            .collect()
    };
    let all: Vec<usize> = (0..agg.columns.len()).collect();
    let mut charts = match table {
        "aggregate.csv" => {
            let rewards: Vec<usize> = ["coop_reward", "adv_reward"]
                .iter()
                .filter_map(|m| agg.column(m))
                .collect();
            vec![
                ("reward.svg", chart_from(agg, "episode reward", "reward", &rewards)),
                (
                    "mse.svg",
                    chart_from(agg, "reconstruction error", "MSE", &with_prefix("recon_mse")),
                ),
            ]
        }
        "comparison.csv" => vec![("comparison.svg", chart_from(agg, "cooperator reward", "reward", &all))],
        "sweep.csv" => vec![
            (
                "sweep_mse.svg",
                chart_from(agg, "reconstruction error by range", "MSE", &with_prefix("recon_mse")),
            ),
            (
                "sweep_masked.svg",
                chart_from(
                    agg,
                    "masked fraction by range",
                    "fraction",
                    &with_prefix("masked_fraction"),
                ),
            ),
        ],
        "ablation.csv" => vec![("ablation.svg", chart_from(agg, "total reward by arm", "reward", &all))],
        _ => Vec::new(),
    };
    charts.retain(|(_, c)| !c.series.is_empty());
    charts
}

fn render_charts(dir: &Path, table: &str, agg: &Aggregate) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    for (name, chart) in charts_for(table, agg) {
        let path = dir.join(name);
        write_file(&path, &plot::render(&chart))?;
        written.push(path);
    }
    Ok(written)
}

fn write_table(dir: &Path, table: &str, agg: &Aggregate) -> Result<(), HarnessError> {
    agg.write_csv(&dir.join(table))?;
    render_charts(dir, table, agg)?;
    Ok(())
}

/// Runs each algorithm with the same seeds into `out/<algorithm>/` and writes
/// a cooperator-reward comparison.
pub fn compare_algorithms(
    cfg: &ExperimentConfig,
    algorithms: &[Algorithm],
    out: &Path,
) -> Result<Vec<(Algorithm, ExperimentReport)>, HarnessError> {
    create_dir(out)?;
    let mut reports = Vec::new();
    for &algorithm in algorithms {
        let arm = ExperimentConfig {
            algorithm,
            ..cfg.clone()
        };
        reports.push((algorithm, run_experiment(&arm, &out.join(algorithm.name()))?));
    }
    let parts: Vec<(String, &Aggregate)> = reports
        .iter()
        .map(|(a, r)| (a.name().to_string(), &r.aggregate))
        .collect();
    write_table(out, "comparison.csv", &side_by_side(&parts, "coop_reward"))?;
    Ok(reports)
}

pub const DEFAULT_SWEEP: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

/// One run per observation range into `out/dp_<range>/`, plus reconstruction
/// error and masked-fraction tables across ranges.
pub fn sweep_dp(
    cfg: &ExperimentConfig,
    ranges: &[f64],
    out: &Path,
) -> Result<Vec<(f64, ExperimentReport)>, HarnessError> {
    if let Some(bad) = ranges.iter().find(|d| !(**d >= 0.0)) {
        return Err(HarnessError::Config {
            key: "dp".into(),
            message: format!("sweep value {bad} must be non-negative"),
        });
    }
    create_dir(out)?;
    let mut reports = Vec::new();
    for &dp in ranges {
        let arm = ExperimentConfig { dp, ..cfg.clone() };
        reports.push((dp, run_experiment(&arm, &out.join(format!("dp_{dp}")))?));
    }
    let parts: Vec<(String, &Aggregate)> = reports
        .iter()
        .map(|(dp, r)| (format!("dp_{dp}"), &r.aggregate))
        .collect();
    let mse = side_by_side(&parts, "recon_mse");
    let masked = side_by_side(&parts, "masked_fraction");
    let table = Aggregate {
        columns: mse.columns.iter().chain(&masked.columns).cloned().collect(),
        rows: mse
            .rows
            .iter()
            .zip(&masked.rows)
            .map(|(a, b)| AggregateRow {
                episode: a.episode,
                phase: a.phase,
                stats: a.stats.iter().chain(&b.stats).copied().collect(),
            })
            .collect(),
    };
    write_table(out, "sweep.csv", &table)?;
    Ok(reports)
}

fn switch(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

/// `(policy_updates, gan_updates)` and the run for that arm.
pub type AblationArm = ((bool, bool), ExperimentReport);

/// The four policy/GAN update arms of the decentralized phase, each into
/// `out/policy_<on|off>_gan_<on|off>/`.
pub fn ablate_updates(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AblationArm>, HarnessError> {
    create_dir(out)?;
    let mut reports = Vec::new();
    for (policy_updates, gan_updates) in [(true, true), (true, false), (false, true), (false, false)] {
        let arm = ExperimentConfig {
            policy_updates,
            gan_updates,
            ..cfg.clone()
        };
        let dir = out.join(format!("policy_{}_gan_{}", switch(policy_updates), switch(gan_updates)));
        reports.push(((policy_updates, gan_updates), run_experiment(&arm, &dir)?));
    }
    let parts: Vec<(String, &Aggregate)> = reports
        .iter()
        .map(|((p, g), r)| (format!("policy_{}_gan_{}", switch(*p), switch(*g)), &r.aggregate))
        .collect();
    write_table(out, "ablation.csv", &side_by_side(&parts, "total_reward"))?;
    Ok(reports)
}

const TABLES: [&str; 4] = ["aggregate.csv", "comparison.csv", "sweep.csv", "ablation.csv"];

/// Regenerates every chart from the tables found in `dir` and its
/// subdirectories. Returns the written SVG paths.
pub fn replot(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::Io {
            path: dir.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut written = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for table in TABLES {
            let path = d.join(table);
            if path.is_file() {
                let agg = Aggregate::read_csv(&path)?;
                written.extend(render_charts(&d, table, &agg)?);
            }
        }
        let mut subdirs: Vec<PathBuf> = fs::read_dir(&d)
            .map_err(io_err(&d))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        stack.extend(subdirs.into_iter().rev());
    }
    Ok(written)
}
