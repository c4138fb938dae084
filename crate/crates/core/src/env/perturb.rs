use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Noise-plus-offset shift applied to actions and observations once the
/// world is "deployed".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPerturbation {
    pub action_noise_scale: f64,
    pub obs_noise_scale: f64,
    pub action_translation: [f64; 2],
    pub obs_translation: Vec<f64>,
    pub enabled: bool,
}

impl DynamicsPerturbation {
    pub fn disabled(obs_len: usize) -> Self {
        Self {
            action_noise_scale: 0.0,
            obs_noise_scale: 0.0,
            action_translation: [0.0; 2],
            obs_translation: vec![0.0; obs_len],
            enabled: false,
        }
    }

    /// Fixed noise scales with translations drawn once, uniformly in
    /// `[-max_translation, max_translation]` per element.
    pub fn sampled<R: Rng + ?Sized>(
        action_noise_scale: f64,
        obs_noise_scale: f64,
        max_translation: f64,
        obs_len: usize,
        rng: &mut R,
    ) -> Self {
        assert!(action_noise_scale >= 0.0 && obs_noise_scale >= 0.0);
        let mut draw = || {
            if max_translation > 0.0 {
                rng.random_range(-max_translation..=max_translation)
            } else {
                0.0
            }
        };
        let action_translation = [draw(), draw()];
        let obs_translation = (0..obs_len).map(|_| draw()).collect();
        Self {
            action_noise_scale,
            obs_noise_scale,
            action_translation,
            obs_translation,
            enabled: true,
        }
    }

    pub fn perturb_action<R: Rng + ?Sized>(&self, action: [f64; 2], rng: &mut R) -> [f64; 2] {
        if !self.enabled {
            return action;
        }
        let mut out = action;
        for (k, v) in out.iter_mut().enumerate() {
            *v += self.action_translation[k] + self.action_noise_scale * rng.sample::<f64, _>(StandardNormal);
        }
        out
    }

    /// Perturbs a flattened joint observation in place.
    pub fn perturb_observation<R: Rng + ?Sized>(&self, obs: &mut [f64], rng: &mut R) {
        if !self.enabled {
            return;
        }
        assert_eq!(obs.len(), self.obs_translation.len(), "observation length mismatch");
        for (v, t) in obs.iter_mut().zip(&self.obs_translation) {
            *v += t + self.obs_noise_scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}
