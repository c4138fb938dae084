//! Experiment configuration: a flat `key = value` file (TOML syntax) plus
//! command-line overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ccwgan::GanConfig;
use crate::env::ScenarioKind;
use crate::marl::MarlConfig;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MaddpgInfer,
    Maddpg,
    Ddpg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::MaddpgInfer, Algorithm::Maddpg, Algorithm::Ddpg];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MaddpgInfer => "maddpg_infer",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Ddpg => "ddpg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HarnessError::Config {
                key: "algorithm".into(),
                message: format!(
                    "unknown algorithm `{s}`; valid: {}",
                    Self::ALL.map(|a| a.name()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub algorithm: Algorithm,
    pub episodes_centralized: usize,
    pub episodes_decentralized: usize,
    /// Partial observability distance in the decentralized phase.
    pub dp: f64,
    pub trials: usize,
    pub seed: u64,
    pub perturb: bool,
    pub action_noise_scale: f64,
    pub obs_noise_scale: f64,
    pub max_translation: f64,
    pub policy_updates: bool,
    pub gan_updates: bool,
    pub gan_store_inferred: bool,
    pub update_every: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_approx: f64,
    pub explore_sigma: f64,
    pub explore_sigma_final: f64,
    pub approx_log_std: f64,
    pub entropy_weight: f64,
    pub policy_reg: f64,
    /// Gradient-norm cap for actor and critic steps; 0 disables it.
    pub grad_clip: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub gan_beta1: f64,
    pub gan_beta2: f64,
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub gan_batch_size: usize,
    pub gan_buffer_capacity: usize,
    pub gan_hidden: usize,
    pub checkpoints: bool,
    pub dump_world: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let marl = MarlConfig::default();
        let gan = GanConfig::default();
        Self {
            scenario: ScenarioKind::PhysicalDeception,
            algorithm: Algorithm::MaddpgInfer,
            episodes_centralized: 2000,
            episodes_decentralized: 1000,
            dp: 1.0,
            trials: 30,
            seed: 0,
            perturb: false,
            action_noise_scale: 0.05,
            obs_noise_scale: 0.05,
            max_translation: 0.1,
            policy_updates: true,
            gan_updates: true,
            gan_store_inferred: true,
            update_every: 100,
            gamma: marl.gamma,
            tau: marl.tau,
            batch_size: marl.batch_size,
            buffer_capacity: marl.buffer_capacity,
            hidden: marl.hidden,
            lr_actor: marl.actor_adam.lr,
            lr_critic: marl.critic_adam.lr,
            lr_approx: marl.approx_adam.lr,
            explore_sigma: marl.explore_sigma,
            explore_sigma_final: marl.explore_sigma_final,
            approx_log_std: marl.approx_log_std,
            entropy_weight: marl.entropy_weight,
            policy_reg: marl.policy_reg,
            grad_clip: 0.0,
            lr_generator: gan.generator_adam.lr,
            lr_discriminator: gan.discriminator_adam.lr,
            gan_beta1: gan.generator_adam.beta1,
            gan_beta2: gan.generator_adam.beta2,
            lambda_gp: gan.lambda_gp,
            n_critic: gan.n_critic,
            gan_batch_size: gan.batch_size,
            gan_buffer_capacity: gan.buffer_capacity,
            gan_hidden: gan.hidden,
            checkpoints: true,
            dump_world: false,
        }
    }
}

fn out_of_range(key: &str, message: &str) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    /// 60 centralized + 30 decentralized episodes.
    pub fn smoke() -> Self {
        Self {
            episodes_centralized: 60,
            episodes_decentralized: 30,
            ..Self::default()
        }
    }

    pub fn total_episodes(&self) -> usize {
        self.episodes_centralized + self.episodes_decentralized
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(out_of_range("trials", "must be at least 1"));
        }
        if !(self.dp >= 0.0) {
            return Err(out_of_range("dp", "must be non-negative"));
        }
        let positive = [
            ("update_every", self.update_every),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("hidden", self.hidden),
            ("n_critic", self.n_critic),
            ("gan_batch_size", self.gan_batch_size),
            ("gan_buffer_capacity", self.gan_buffer_capacity),
            ("gan_hidden", self.gan_hidden),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(out_of_range(key, "must be positive"));
            }
        }
        let non_negative = [
            ("action_noise_scale", self.action_noise_scale),
            ("obs_noise_scale", self.obs_noise_scale),
            ("max_translation", self.max_translation),
            ("explore_sigma", self.explore_sigma),
            ("explore_sigma_final", self.explore_sigma_final),
            ("entropy_weight", self.entropy_weight),
            ("policy_reg", self.policy_reg),
            ("lambda_gp", self.lambda_gp),
            ("grad_clip", self.grad_clip),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0) {
                return Err(out_of_range(key, "must be non-negative"));
            }
        }
        let rates = [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_approx", self.lr_approx),
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ];
        for (key, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(out_of_range(key, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(out_of_range("gamma", "must lie in [0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(out_of_range("tau", "must lie in (0, 1]"));
        }
        for (key, b) in [("gan_beta1", self.gan_beta1), ("gan_beta2", self.gan_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(out_of_range(key, "must lie in [0, 1)"));
            }
        }
        if self.approx_log_std.is_nan() {
            return Err(out_of_range("approx_log_std", "must be a number"));
        }
        Ok(())
    }

    pub fn marl(&self) -> MarlConfig {
        MarlConfig {
            gamma: self.gamma,
            tau: self.tau,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            hidden: self.hidden,
            actor_adam: AdamConfig::with_lr(self.lr_actor),
            critic_adam: AdamConfig::with_lr(self.lr_critic),
            approx_adam: AdamConfig::with_lr(self.lr_approx),
            explore_sigma: self.explore_sigma,
            explore_sigma_final: self.explore_sigma_final,
            approx_log_std: self.approx_log_std,
            entropy_weight: self.entropy_weight,
            policy_reg: self.policy_reg,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }

    pub fn gan(&self) -> GanConfig {
        let adam = |lr| AdamConfig {
            lr,
            beta1: self.gan_beta1,
            beta2: self.gan_beta2,
            ..AdamConfig::default()
        };
        GanConfig {
            lambda_gp: self.lambda_gp,
            n_critic: self.n_critic,
            batch_size: self.gan_batch_size,
            hidden: self.gan_hidden,
            generator_adam: adam(self.lr_generator),
            discriminator_adam: adam(self.lr_discriminator),
            buffer_capacity: self.gan_buffer_capacity,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn known_keys() -> Vec<String> {
    match toml::Value::try_from(ExperimentConfig::default()).expect("config serializes") {
        toml::Value::Table(t) => t.keys().cloned().collect(),
        _ => unreachable!(),
    }
}

/// Interprets an override value as a TOML scalar, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn config_error_from_toml(e: toml::de::Error, table: &toml::Table) -> HarnessError {
    // retry key by key to find the one that does not deserialize
    let key = table
        .iter()
        .find(|(k, v)| {
            let mut single = toml::Table::new();
            single.insert((*k).clone(), (*v).clone());
            toml::Value::Table(single).try_into::<ExperimentConfig>().is_err()
        })
        .map(|(k, _)| k.clone())
        .unwrap_or_else(|| "<config>".into());
    HarnessError::Config {
        key,
        message: e.message().to_string(),
    }
}

/// Loads `path` (if given), applies `overrides` on top and validates.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig, HarnessError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            toml::from_str::<toml::Table>(&text).map_err(|e| HarnessError::Config {
                key: "<file>".into(),
                message: e.to_string(),
            })?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), override_value(v));
    }
    let keys = known_keys();
    if let Some(unknown) = table.keys().find(|k| !keys.contains(k)) {
        return Err(HarnessError::Config {
            key: unknown.clone(),
            message: "unknown key".into(),
        });
    }
    // scenario names get a friendlier error than serde's variant list
    if let Some(toml::Value::String(s)) = table.get("scenario") {
        s.parse::<ScenarioKind>().map_err(|e| HarnessError::Config {
            key: "scenario".into(),
            message: e.to_string(),
        })?;
    }
    if let Some(toml::Value::String(s)) = table.get("algorithm") {
        s.parse::<Algorithm>()?;
    }
    let cfg: ExperimentConfig = table
        .clone()
        .try_into()
        .map_err(|e| config_error_from_toml(e, &table))?;
    cfg.validate()?;
    Ok(cfg)
}
