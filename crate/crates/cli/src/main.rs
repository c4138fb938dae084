use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use decfine::harness::{
    ablate_updates, compare_algorithms, parse_config, replot, run_experiment, sweep_dp, Algorithm, ExperimentConfig,
    ExperimentReport, DEFAULT_SWEEP,
};

#[derive(Parser)]
#[command(
    name = "decfine",
    version,
    about = "Centralized-to-decentralized multi-agent training experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more algorithms (comma separated) over several trials.
    Run(RunArgs),
    /// Repeat a run for several observation ranges.
    SweepDp {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated observation ranges.
        #[arg(long, value_delimiter = ',')]
        dps: Option<Vec<f64>>,
    },
    /// Compare policy/GAN update toggles in the decentralized phase.
    AblateUpdates {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Regenerate SVG charts from the CSV tables under a directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Algorithm(s): maddpg_infer, maddpg, ddpg.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 2000 + 1000 episodes.
    Full,
    /// 60 + 30 episodes.
    Smoke,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    dp: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes_centralized: Option<usize>,
    #[arg(long)]
    episodes_decentralized: Option<usize>,
    /// Perturb actions and observations in the decentralized phase.
    #[arg(long)]
    perturb: bool,
    #[arg(long)]
    policy_updates: Option<bool>,
    #[arg(long)]
    gan_updates: Option<bool>,
    /// Extra `key=value` overrides for any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl CommonArgs {
    fn resolve(&self, algo: Option<&str>) -> Result<ExperimentConfig> {
        let mut ov: Vec<(String, String)> = Vec::new();
        if let Some(p) = self.preset {
            let base = match p {
                Preset::Full => ExperimentConfig::default(),
                Preset::Smoke => ExperimentConfig::smoke(),
            };
            ov.push(("episodes_centralized".into(), base.episodes_centralized.to_string()));
            ov.push(("episodes_decentralized".into(), base.episodes_decentralized.to_string()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                ov.push((k.to_string(), v));
            }
        };
        push("scenario", self.scenario.as_ref().map(|s| format!("{s:?}")));
        push("algorithm", algo.map(|s| format!("{s:?}")));
        push("dp", self.dp.map(|v| format!("{v:?}")));
        push("trials", self.trials.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("episodes_centralized", self.episodes_centralized.map(|v| v.to_string()));
        push(
            "episodes_decentralized",
            self.episodes_decentralized.map(|v| v.to_string()),
        );
        push("perturb", self.perturb.then(|| "true".to_string()));
        push("policy_updates", self.policy_updates.map(|v| v.to_string()));
        push("gan_updates", self.gan_updates.map(|v| v.to_string()));
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            ov.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(parse_config(self.config.as_deref(), &ov)?)
    }
}

fn summarize(label: &str, report: &ExperimentReport) -> bool {
    let finals: Vec<f64> = report
        .trials
        .iter()
        .filter_map(|t| t.rows.last().map(|r| r.coop_reward))
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    println!(
        "{label}: {} trials completed, {} failed, final cooperator reward {mean:.3} -> {}",
        report.trials.len(),
        report.failures.len(),
        report.out_dir.display()
    );
    for (t, msg) in &report.failures {
        eprintln!("  trial {t} failed: {msg}");
    }
    report.is_success()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let algos: Vec<Algorithm> = args
                .algo
                .iter()
                .map(|a| a.parse::<Algorithm>())
                .collect::<Result<_, _>>()?;
            match algos.as_slice() {
                [] | [_] => {
                    let cfg = args.common.resolve(algos.first().map(|a| a.name()))?;
                    let report = run_experiment(&cfg, &args.common.out)?;
                    Ok(summarize(cfg.algorithm.name(), &report))
                }
                _ => {
                    let cfg = args.common.resolve(None)?;
                    let reports = compare_algorithms(&cfg, &algos, &args.common.out)?;
                    Ok(reports.iter().fold(true, |ok, (a, r)| summarize(a.name(), r) && ok))
                }
            }
        }
        Command::SweepDp { common, dps } => {
            let cfg = common.resolve(None)?;
            let dps = dps.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
            let reports = sweep_dp(&cfg, &dps, &common.out)?;
            Ok(reports
                .iter()
                .fold(true, |ok, (dp, r)| summarize(&format!("dp {dp}"), r) && ok))
        }
        Command::AblateUpdates { common } => {
            let cfg = common.resolve(None)?;
            let reports = ablate_updates(&cfg, &common.out)?;
            Ok(reports.iter().fold(true, |ok, ((p, g), r)| {
                summarize(&format!("policy updates {p}, gan updates {g}"), r) && ok
            }))
        }
        Command::Plot { out } => {
            let written = replot(&out).with_context(|| format!("replotting {}", display(&out)))?;
            if written.is_empty() {
                bail!("no result tables found under {}", display(&out));
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
