//! Independent DDPG learner: the critic sees only the agent's own observation
//! and action, and other agents are part of the environment.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{
    critic_input, critic_loss, regularized_policy_backward, MarlConfig, RlReplayBuffer, UpdateMetrics, ACTION_DIM,
};
use crate::nn::{Gradient, Mlp, MlpShape, NnError, OutputActivation};

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub index: usize,
    pub policy: Mlp,
    pub target_policy: Mlp,
    pub critic: Mlp,
    pub target_critic: Mlp,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(index: usize, obs_len: usize, cfg: &MarlConfig, rng: &mut R) -> Self {
        let policy = Mlp::init(
            &MlpShape::three_layer(obs_len, cfg.hidden, ACTION_DIM, OutputActivation::Tanh),
            rng,
        );
        let critic = Mlp::init(
            &MlpShape::three_layer(obs_len + ACTION_DIM, cfg.hidden, 1, OutputActivation::Linear),
            rng,
        );
        Self {
            index,
            target_policy: policy.clone(),
            policy,
            target_critic: critic.clone(),
            critic,
        }
    }

    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        vec![
            ("policy", &self.policy),
            ("critic", &self.critic),
            ("target_policy", &self.target_policy),
            ("target_critic", &self.target_critic),
        ]
    }
}

/// `mean Q(o, π(o)) − reg · mean z²` and its policy gradient.
pub fn ddpg_policy_objective(
    agent: &DdpgAgent,
    obs: ArrayView2<f64>,
    preact_reg: f64,
) -> Result<(f64, Gradient), NnError> {
    let b = obs.nrows();
    if b == 0 {
        return Err(NnError::Shape("empty policy batch".into()));
    }
    let policy_tape = agent.policy.forward(obs)?;
    let input = critic_input(obs, policy_tape.output().view());
    let critic_tape = agent.critic.forward(input.view())?;
    let value = critic_tape.output().mean().unwrap();
    let weight = Array2::from_elem((b, 1), 1.0 / b as f64);
    let (_, dq) = agent.critic.backward(&critic_tape, weight.view())?;
    let dq_da = dq.slice(s![.., obs.ncols()..]).to_owned();
    regularized_policy_backward(&agent.policy, &policy_tape, value, dq_da, preact_reg)
}

/// One DDPG round on the agent's local buffer of single-agent transitions.
pub fn ddpg_update<R: Rng + ?Sized>(
    agent: &mut DdpgAgent,
    buffer: &RlReplayBuffer,
    cfg: &MarlConfig,
    rng: &mut R,
) -> Option<UpdateMetrics> {
    if buffer.len() < cfg.batch_size {
        return None;
    }
    let batch = buffer.sample(cfg.batch_size, rng);
    let rewards = batch.rewards.column(0).to_owned();
    let y = if cfg.gamma == 0.0 {
        rewards
    } else {
        let next_a = agent
            .target_policy
            .forward(batch.next_obs.view())
            .expect("shape")
            .output()
            .clone();
        let q = agent
            .target_critic
            .forward(critic_input(batch.next_obs.view(), next_a.view()).view())
            .expect("shape")
            .output()
            .clone();
        rewards + q.index_axis(Axis(1), 0).mapv(|v| cfg.gamma * v)
    };
    let input = critic_input(batch.obs.view(), batch.actions.view());
    let (critic_loss, mut grad) = critic_loss(&agent.critic, input.view(), &y).expect("critic shapes");
    if critic_loss.is_finite() {
        if let Some(c) = cfg.grad_clip {
            grad.clip_norm(c);
        }
        if let Err(e) = agent.critic.adam_step(&grad, &cfg.critic_adam) {
            log::warn!("ddpg critic update skipped: {e}");
        }
    }
    let (value, mut pgrad) = ddpg_policy_objective(agent, batch.obs.view(), cfg.policy_reg).expect("policy shapes");
    pgrad.scale(-1.0);
    if let Some(c) = cfg.grad_clip {
        pgrad.clip_norm(c);
    }
    if let Err(e) = agent.policy.adam_step(&pgrad, &cfg.actor_adam) {
        log::warn!("ddpg policy update skipped: {e}");
    }
    agent.target_policy.polyak_update(&agent.policy, cfg.tau);
    agent.target_critic.polyak_update(&agent.critic, cfg.tau);
    Some(UpdateMetrics {
        critic_loss,
        policy_value: value,
        approx_loss: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn critic_sees_own_action_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = DdpgAgent::new(0, 14, &MarlConfig::default(), &mut rng);
        assert_eq!(agent.critic.input_len(), 14 + 2);
    }

    #[test]
    fn update_runs_once_buffer_is_full_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = MarlConfig {
            hidden: 8,
            batch_size: 8,
            ..Default::default()
        };
        let mut agent = DdpgAgent::new(0, 3, &cfg, &mut rng);
        let mut buffer = RlReplayBuffer::new(100);
        assert!(ddpg_update(&mut agent, &buffer, &cfg, &mut rng).is_none());
        for _ in 0..10 {
            buffer.push(Transition {
                obs: vec![rng.random_range(-1.0..1.0); 3],
                actions: vec![0.1, -0.1],
                rewards: vec![1.0],
                next_obs: vec![0.0; 3],
                mask: vec![1.0; 3],
                next_mask: vec![1.0; 3],
            });
        }
        let m = ddpg_update(&mut agent, &buffer, &cfg, &mut rng).unwrap();
        assert!(m.critic_loss.is_finite());
        assert_eq!(agent.policy.adam_state().step, 1);
        assert_eq!(agent.target_policy.adam_state().step, 0);
    }
}
