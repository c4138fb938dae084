//! Per-trial and aggregate CSV tables. Missing values are empty fields.

use std::path::Path;

use super::trial::EpisodeRow;
use super::HarnessError;

const METRICS: [&str; 10] = [
    "coop_reward",
    "adv_reward",
    "total_reward",
    "critic_loss",
    "policy_value",
    "approx_loss",
    "d_loss",
    "g_loss",
    "recon_mse",
    "masked_fraction",
];

/// Metric column names, in file order, for `n_agents` agents.
pub fn metric_columns(n_agents: usize) -> Vec<String> {
    let mut cols: Vec<String> = METRICS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..n_agents).map(|i| format!("reward_agent_{i}")));
    cols
}

fn metric_values(row: &EpisodeRow) -> Vec<Option<f64>> {
    let mut v = vec![
        Some(row.coop_reward),
        row.adv_reward,
        Some(row.total_reward),
        row.critic_loss,
        row.policy_value,
        row.approx_loss,
        row.d_loss,
        row.g_loss,
        row.recon_mse,
        Some(row.masked_fraction),
    ];
    v.extend(row.agent_rewards.iter().map(|&r| Some(r)));
    v
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_field(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse::<f64>().map(Some).map_err(|e| format!("`{s}`: {e}"))
    }
}

fn create_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, HarnessError> {
    csv::Writer::from_path(path).map_err(|e| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    }
}

pub fn write_trial_csv(path: &Path, rows: &[EpisodeRow]) -> Result<(), HarnessError> {
    let n_agents = rows.first().map_or(0, |r| r.agent_rewards.len());
    let mut w = create_writer(path)?;
    let mut header = vec!["episode".to_string(), "phase".to_string()];
    header.extend(metric_columns(n_agents));
    w.write_record(&header).map_err(csv_err(path))?;
    for row in rows {
        let mut rec = vec![row.episode.to_string(), row.phase.index().to_string()];
        rec.extend(metric_values(row).into_iter().map(field));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Mean and sample standard deviation of one metric at one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// `None` when no trial has the value; std is 0 for a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub phase: usize,
    pub stats: Vec<Option<Stat>>,
}

/// Across-trial statistics per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub columns: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

impl Aggregate {
    pub fn from_trials(trials: &[&[EpisodeRow]]) -> Self {
        let n_agents = trials
            .iter()
            .find_map(|t| t.first())
            .map_or(0, |r| r.agent_rewards.len());
        let columns = metric_columns(n_agents);
        let n_episodes = trials.iter().map(|t| t.len()).max().unwrap_or(0);
        let rows = (0..n_episodes)
            .map(|e| {
                let present: Vec<&EpisodeRow> = trials.iter().filter_map(|t| t.get(e)).collect();
                let values: Vec<Vec<Option<f64>>> = present.iter().map(|r| metric_values(r)).collect();
                let stats = (0..columns.len())
                    .map(|c| {
                        let xs: Vec<f64> = values.iter().filter_map(|v| v.get(c).copied().flatten()).collect();
                        Stat::of(&xs)
                    })
                    .collect();
                AggregateRow {
                    episode: e,
                    phase: present[0].phase.index(),
                    stats,
                }
            })
            .collect();
        Self { columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// `(episode, stat)` pairs of one metric, skipping missing entries.
    pub fn series(&self, name: &str) -> Vec<(usize, Stat)> {
        let Some(c) = self.column(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| r.stats[c].map(|s| (r.episode, s)))
            .collect()
    }

    /// First decentralized episode, if any.
    pub fn phase_boundary(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.phase == 1).map(|r| r.episode)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = create_writer(path)?;
        let mut header = vec!["episode".to_string(), "phase".to_string()];
        for c in &self.columns {
            header.push(format!("{c}_mean"));
            header.push(format!("{c}_std"));
        }
        w.write_record(&header).map_err(csv_err(path))?;
        for row in &self.rows {
            let mut rec = vec![row.episode.to_string(), row.phase.to_string()];
            for s in &row.stats {
                rec.push(field(s.map(|s| s.mean)));
                rec.push(field(s.map(|s| s.std)));
            }
            w.write_record(&rec).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Reads a file written by [`Aggregate::write_csv`]. Trial counts are not
    /// stored, so every parsed stat has `n = 0`.
    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let header = r.headers().map_err(csv_err(path))?.clone();
        let bad = |message: String| HarnessError::Parse {
            path: path.display().to_string(),
            message,
        };
        if header.len() < 2 || (header.len() - 2) % 2 != 0 {
            return Err(bad("unexpected header".into()));
        }
        let columns: Vec<String> = header
            .iter()
            .skip(2)
            .step_by(2)
            .map(|h| h.trim_end_matches("_mean").to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err(path))?;
            let episode = rec[0].parse().map_err(|e| bad(format!("episode: {e}")))?;
            let phase = rec[1].parse().map_err(|e| bad(format!("phase: {e}")))?;
            let mut stats = Vec::with_capacity(columns.len());
            for c in 0..columns.len() {
                let mean = parse_field(&rec[2 + 2 * c]).map_err(bad)?;
                let std = parse_field(&rec[3 + 2 * c]).map_err(bad)?;
                stats.push(mean.map(|mean| Stat {
                    mean,
                    std: std.unwrap_or(0.0),
                    n: 0,
                }));
            }
            rows.push(AggregateRow { episode, phase, stats });
        }
        Ok(Self { columns, rows })
    }
}
