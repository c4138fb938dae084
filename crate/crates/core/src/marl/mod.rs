//! MADDPG with approximate policies of other agents, plus an independent
//! DDPG baseline.
//!
//! Each MADDPG agent owns a deterministic tanh policy over its own slice of
//! the joint observation, a centralized critic over the whole joint
//! observation and every agent's action, and one Gaussian approximate policy
//! per other agent. Every loss is exposed as a value-plus-gradient function
//! so it can be checked against finite differences; the `update_*`
//! functions wrap those with an Adam step.

mod buffer;
pub mod ddpg;
pub mod inference;

use std::f64::consts::PI;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::JointLayout;
use crate::nn::{AdamConfig, Gradient, Mlp, MlpShape, NnError, OutputActivation};

pub use buffer::{Batch, RlReplayBuffer, Transition};
pub use ddpg::{ddpg_update, DdpgAgent};
pub use inference::{infer_joint_observation, InferredJoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarlConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub approx_adam: AdamConfig,
    pub explore_sigma: f64,
    pub explore_sigma_final: f64,
    pub approx_log_std: f64,
    pub entropy_weight: f64,
    /// Weight of the mean squared policy pre-activation penalty.
    pub policy_reg: f64,
    /// Global gradient-norm cap applied before every actor/critic step.
    pub grad_clip: Option<f64>,
}

impl Default for MarlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.01,
            batch_size: 1024,
            buffer_capacity: 1_000_000,
            hidden: 64,
            actor_adam: AdamConfig::with_lr(1e-2),
            critic_adam: AdamConfig::with_lr(1e-2),
            approx_adam: AdamConfig::with_lr(1e-2),
            explore_sigma: 0.1,
            explore_sigma_final: 0.0,
            approx_log_std: -1.0,
            entropy_weight: 0.001,
            policy_reg: 1e-3,
            grad_clip: None,
        }
    }
}

pub const ACTION_DIM: usize = 2;

/// Discounted return `Σ γᵗ rₜ`.
pub fn compute_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

/// Deterministic action, optionally with Gaussian exploration, clamped to the
/// unit box. No randomness is drawn when `noise_std` is zero.
pub fn select_action<R: Rng + ?Sized>(policy: &Mlp, obs: &[f64], noise_std: f64, rng: &mut R) -> [f64; 2] {
    let out = policy.predict(obs);
    let mut a = [out[0], out[1]];
    if noise_std > 0.0 {
        for v in &mut a {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    a.map(|v| v.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaddpgAgent {
    pub index: usize,
    pub policy: Mlp,
    pub target_policy: Mlp,
    pub critic: Mlp,
    pub target_critic: Mlp,
    /// `approx[j]` models agent j; `None` at the agent's own index.
    pub approx: Vec<Option<Mlp>>,
    pub target_approx: Vec<Option<Mlp>>,
}

impl MaddpgAgent {
    pub fn new<R: Rng + ?Sized>(index: usize, layout: &JointLayout, cfg: &MarlConfig, rng: &mut R) -> Self {
        let n = layout.n_agents();
        let policy = Mlp::init(
            &MlpShape::three_layer(layout.agent_len(index), cfg.hidden, ACTION_DIM, OutputActivation::Tanh),
            rng,
        );
        let critic = Mlp::init(
            &MlpShape::three_layer(critic_input_len(layout), cfg.hidden, 1, OutputActivation::Linear),
            rng,
        );
        let approx: Vec<Option<Mlp>> = (0..n)
            .map(|j| {
                (j != index).then(|| {
                    Mlp::init(
                        &MlpShape::three_layer(layout.agent_len(j), cfg.hidden, ACTION_DIM, OutputActivation::Tanh),
                        rng,
                    )
                })
            })
            .collect();
        Self {
            index,
            target_policy: policy.clone(),
            policy,
            target_critic: critic.clone(),
            critic,
            target_approx: approx.clone(),
            approx,
        }
    }

    /// All networks in a fixed order: policy, critic, approx…, then targets.
    pub fn networks(&self) -> Vec<(&'static str, Option<usize>, &Mlp)> {
        let mut out = vec![("policy", None, &self.policy), ("critic", None, &self.critic)];
        for (j, m) in self.approx.iter().enumerate() {
            if let Some(m) = m {
                out.push(("approx", Some(j), m));
            }
        }
        out.push(("target_policy", None, &self.target_policy));
        out.push(("target_critic", None, &self.target_critic));
        for (j, m) in self.target_approx.iter().enumerate() {
            if let Some(m) = m {
                out.push(("target_approx", Some(j), m));
            }
        }
        out
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        self.target_policy.polyak_update(&self.policy, tau);
        self.target_critic.polyak_update(&self.critic, tau);
        for (t, o) in self.target_approx.iter_mut().zip(&self.approx) {
            if let (Some(t), Some(o)) = (t, o) {
                t.polyak_update(o, tau);
            }
        }
    }
}

/// Joint observation length plus two action components per agent.
pub fn critic_input_len(layout: &JointLayout) -> usize {
    layout.total_len() + ACTION_DIM * layout.n_agents()
}

pub fn critic_input(obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, actions]).expect("batch rows agree")
}

fn agent_columns(obs: ArrayView2<f64>, layout: &JointLayout, agent: usize) -> Array2<f64> {
    let r = layout.agent_range(agent);
    obs.slice(s![.., r.start..r.end]).to_owned()
}

fn forward_output(net: &Mlp, x: ArrayView2<f64>) -> Array2<f64> {
    net.forward(x).expect("network input shape").output().clone()
}

/// Joint next action for the critic target: own target policy for the agent
/// itself, target approximate policies for everyone else.
fn target_joint_action(agent: &MaddpgAgent, next_obs: ArrayView2<f64>, layout: &JointLayout) -> Array2<f64> {
    let mut actions = Array2::zeros((next_obs.nrows(), ACTION_DIM * layout.n_agents()));
    for j in 0..layout.n_agents() {
        let net = if j == agent.index {
            &agent.target_policy
        } else {
            agent.target_approx[j]
                .as_ref()
                .expect("approximate policy for every other agent")
        };
        let a = forward_output(net, agent_columns(next_obs, layout, j).view());
        actions
            .slice_mut(s![.., ACTION_DIM * j..ACTION_DIM * (j + 1)])
            .assign(&a);
    }
    actions
}

/// TD targets `y = r_i + γ Q'_i(ô', a')`.
pub fn critic_targets(agent: &MaddpgAgent, batch: &Batch, layout: &JointLayout, gamma: f64) -> Array1<f64> {
    let rewards = batch.rewards.column(agent.index).to_owned();
    if gamma == 0.0 {
        return rewards;
    }
    let next_actions = target_joint_action(agent, batch.next_obs.view(), layout);
    let q_next = forward_output(
        &agent.target_critic,
        critic_input(batch.next_obs.view(), next_actions.view()).view(),
    );
    rewards + q_next.column(0).mapv(|q| gamma * q)
}

/// Mean squared TD error and its gradient for the critic parameters.
pub fn critic_loss(critic: &Mlp, input: ArrayView2<f64>, targets: &Array1<f64>) -> Result<(f64, Gradient), NnError> {
    let b = input.nrows();
    if b == 0 {
        return Err(NnError::Shape("empty critic batch".into()));
    }
    let tape = critic.forward(input)?;
    let err = &tape.output().column(0) - targets;
    let loss = err.mapv(|e| e * e).sum() / b as f64;
    let cot = err.mapv(|e| 2.0 * e / b as f64).insert_axis(Axis(1));
    let (grad, _) = critic.backward(&tape, cot.view())?;
    Ok((loss, grad))
}

/// Joint action used by the policy objective: `π_i(ô_i)` for the agent
/// itself, approximate policies `μ_i^j(ô_j)` for the others.
fn policy_joint_action(agent: &MaddpgAgent, obs: ArrayView2<f64>, layout: &JointLayout) -> Array2<f64> {
    let mut actions = Array2::zeros((obs.nrows(), ACTION_DIM * layout.n_agents()));
    for j in 0..layout.n_agents() {
        if j == agent.index {
            continue;
        }
        let net = agent.approx[j]
            .as_ref()
            .expect("approximate policy for every other agent");
        let a = forward_output(net, agent_columns(obs, layout, j).view());
        actions
            .slice_mut(s![.., ACTION_DIM * j..ACTION_DIM * (j + 1)])
            .assign(&a);
    }
    actions
}

/// `J = mean Q_i(ô, a) − reg · mean z²` and `∇_θ J` for the agent's policy,
/// chaining the critic's input gradient at `a_i` through the policy. `z` is
/// the policy's pre-tanh output.
pub fn policy_objective(
    agent: &MaddpgAgent,
    obs: ArrayView2<f64>,
    layout: &JointLayout,
    preact_reg: f64,
) -> Result<(f64, Gradient), NnError> {
    let b = obs.nrows();
    if b == 0 {
        return Err(NnError::Shape("empty policy batch".into()));
    }
    let i = agent.index;
    let own = agent_columns(obs, layout, i);
    let policy_tape = agent.policy.forward(own.view())?;
    let mut actions = policy_joint_action(agent, obs, layout);
    actions
        .slice_mut(s![.., ACTION_DIM * i..ACTION_DIM * (i + 1)])
        .assign(policy_tape.output());
    let input = critic_input(obs, actions.view());
    let critic_tape = agent.critic.forward(input.view())?;
    let value = critic_tape.output().mean().unwrap();
    let weight = Array2::from_elem((b, 1), 1.0 / b as f64);
    let (_, dq_dinput) = agent.critic.backward(&critic_tape, weight.view())?;
    let offset = layout.total_len() + ACTION_DIM * i;
    let dq_da = dq_dinput.slice(s![.., offset..offset + ACTION_DIM]).to_owned();
    regularized_policy_backward(&agent.policy, &policy_tape, value, dq_da, preact_reg)
}

/// Adds `−reg · mean z²` to a policy objective and backpropagates both parts.
pub(crate) fn regularized_policy_backward(
    policy: &Mlp,
    tape: &crate::nn::Tape,
    value: f64,
    dq_da: Array2<f64>,
    preact_reg: f64,
) -> Result<(f64, Gradient), NnError> {
    if preact_reg == 0.0 {
        let (grad, _) = policy.backward(tape, dq_da.view())?;
        return Ok((value, grad));
    }
    let z = policy.preactivation(tape)?;
    let count = z.len() as f64;
    let penalty = preact_reg * z.mapv(|v| v * v).sum() / count;
    let cot_pre = z.mapv(|v| -2.0 * preact_reg * v / count);
    let (grad, _) = policy.backward_with_preactivation(tape, dq_da.view(), cot_pre.view())?;
    Ok((value - penalty, grad))
}

/// Entropy of a diagonal Gaussian over the action dimensions.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    ACTION_DIM as f64 * (0.5 * (2.0 * PI * std::f64::consts::E).ln() + log_std)
}

/// `−mean log N(a_j; μ(ô_j), σ²) − λ H` and its gradient, with a fixed
/// log-std shared across action components.
pub fn approx_policy_loss(
    net: &Mlp,
    obs_j: ArrayView2<f64>,
    actions_j: ArrayView2<f64>,
    log_std: f64,
    entropy_weight: f64,
) -> Result<(f64, Gradient), NnError> {
    let b = obs_j.nrows();
    if b == 0 {
        return Err(NnError::Shape("empty approximate-policy batch".into()));
    }
    let tape = net.forward(obs_j)?;
    let var = (2.0 * log_std).exp();
    let diff = &actions_j - tape.output();
    let per_dim_const = log_std + 0.5 * (2.0 * PI).ln();
    let log_lik = -diff.mapv(|d| d * d / (2.0 * var)).sum() / b as f64 - ACTION_DIM as f64 * per_dim_const;
    let loss = -log_lik - entropy_weight * gaussian_entropy(log_std);
    let cot = diff.mapv(|d| -d / (var * b as f64));
    let (grad, _) = net.backward(&tape, cot.view())?;
    Ok((loss, grad))
}

fn apply(net: &mut Mlp, mut grad: Gradient, adam: &AdamConfig, clip: Option<f64>, what: &str) -> bool {
    if let Some(c) = clip {
        grad.clip_norm(c);
    }
    match net.adam_step(&grad, adam) {
        Ok(()) => true,
        Err(e) => {
            log::warn!("{what} update skipped: {e}");
            false
        }
    }
}

/// One Adam step on `Q_i`; returns the pre-step loss.
pub fn update_critic(agent: &mut MaddpgAgent, batch: &Batch, layout: &JointLayout, cfg: &MarlConfig) -> f64 {
    let y = critic_targets(agent, batch, layout, cfg.gamma);
    let input = critic_input(batch.obs.view(), batch.actions.view());
    let (loss, grad) = critic_loss(&agent.critic, input.view(), &y).expect("critic shapes");
    if !loss.is_finite() {
        log::warn!("agent {} critic loss is not finite; skipping", agent.index);
        return loss;
    }
    apply(&mut agent.critic, grad, &cfg.critic_adam, cfg.grad_clip, "critic");
    loss
}

/// One Adam ascent step on the policy objective; returns the pre-step value.
pub fn update_policy(agent: &mut MaddpgAgent, batch: &Batch, layout: &JointLayout, cfg: &MarlConfig) -> f64 {
    let (value, mut grad) = policy_objective(agent, batch.obs.view(), layout, cfg.policy_reg).expect("policy shapes");
    grad.scale(-1.0);
    apply(&mut agent.policy, grad, &cfg.actor_adam, cfg.grad_clip, "policy");
    value
}

pub fn update_approx_policy(
    agent: &mut MaddpgAgent,
    other: usize,
    batch: &Batch,
    layout: &JointLayout,
    cfg: &MarlConfig,
) -> f64 {
    assert_ne!(other, agent.index, "no approximate policy of oneself");
    let obs_j = agent_columns(batch.obs.view(), layout, other);
    let actions_j = batch
        .actions
        .slice(s![.., ACTION_DIM * other..ACTION_DIM * (other + 1)]);
    let net = agent.approx[other].as_mut().expect("approximate policy present");
    let (loss, grad) =
        approx_policy_loss(net, obs_j.view(), actions_j, cfg.approx_log_std, cfg.entropy_weight).expect("shapes");
    apply(net, grad, &cfg.approx_adam, None, "approximate policy");
    loss
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UpdateMetrics {
    pub critic_loss: f64,
    pub policy_value: f64,
    pub approx_loss: f64,
}

/// Full MADDPG round: approximate policies, critic and policy for every
/// agent, then soft target updates. A no-op until the buffer holds a batch.
pub fn maddpg_update<R: Rng + ?Sized>(
    agents: &mut [MaddpgAgent],
    buffer: &RlReplayBuffer,
    layout: &JointLayout,
    cfg: &MarlConfig,
    rng: &mut R,
) -> Option<UpdateMetrics> {
    if buffer.len() < cfg.batch_size {
        return None;
    }
    let n = agents.len();
    let mut metrics = UpdateMetrics::default();
    for agent in agents.iter_mut() {
        let batch = buffer.sample(cfg.batch_size, rng);
        let mut approx = 0.0;
        let me = agent.index;
        for j in (0..n).filter(|&j| j != me) {
            approx += update_approx_policy(agent, j, &batch, layout, cfg);
        }
        metrics.approx_loss += approx / (n - 1).max(1) as f64;
        metrics.critic_loss += update_critic(agent, &batch, layout, cfg);
        metrics.policy_value += update_policy(agent, &batch, layout, cfg);
    }
    for agent in agents.iter_mut() {
        agent.soft_update_targets(cfg.tau);
    }
    metrics.critic_loss /= n as f64;
    metrics.policy_value /= n as f64;
    metrics.approx_loss /= n as f64;
    Some(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> JointLayout {
        JointLayout::uniform(2, 3)
    }

    fn small_cfg() -> MarlConfig {
        MarlConfig {
            hidden: 8,
            batch_size: 4,
            ..Default::default()
        }
    }

    fn zero_net(net: &Mlp) -> Mlp {
        let layers = net
            .layers()
            .iter()
            .map(|l| Layer {
                weight: Array2::zeros(l.weight.dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        Mlp::from_layers(layers, net.output_activation()).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize, reward: f64) -> Batch {
        let l = layout();
        let items: Vec<Transition> = (0..n)
            .map(|_| Transition {
                obs: (0..l.total_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                actions: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rewards: vec![reward; 2],
                next_obs: (0..l.total_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                mask: vec![1.0; l.total_len()],
                next_mask: vec![1.0; l.total_len()],
            })
            .collect();
        Batch::from_transitions(&items.iter().collect::<Vec<_>>())
    }

    #[test]
    fn discounted_return_cases() {
        assert!((compute_return(&[1.0, 1.0, 1.0], 0.95) - 2.8525).abs() < 1e-12);
        assert_eq!(compute_return(&[3.0, 5.0], 0.0), 3.0);
        assert_eq!(compute_return(&[], 0.9), 0.0);
    }

    #[test]
    fn action_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = MaddpgAgent::new(0, &layout(), &small_cfg(), &mut rng);
        let obs = [0.2, -0.1, 0.5];
        let a = select_action(&agent.policy, &obs, 0.0, &mut rng);
        assert_eq!(a, select_action(&agent.policy, &obs, 0.0, &mut rng));
        let zero = zero_net(&agent.policy);
        assert_eq!(select_action(&zero, &obs, 0.0, &mut rng), [0.0, 0.0]);
        for _ in 0..100 {
            let a = select_action(&agent.policy, &obs, 5.0, &mut rng);
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn critic_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = MaddpgAgent::new(1, &layout(), &small_cfg(), &mut rng);
        assert_eq!(agent.critic.input_len(), 6 + 4);
        assert!(agent.approx[1].is_none() && agent.approx[0].is_some());
    }

    #[test]
    fn zero_discount_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = MaddpgAgent::new(0, &layout(), &small_cfg(), &mut rng);
        let b = batch(&mut rng, 5, 0.7);
        let y = critic_targets(&agent, &b, &layout(), 0.0);
        assert!(y.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn zero_critic_unit_reward_loss_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = MaddpgAgent::new(0, &layout(), &small_cfg(), &mut rng);
        agent.critic = zero_net(&agent.critic);
        agent.target_critic = zero_net(&agent.critic);
        let b = batch(&mut rng, 7, 1.0);
        let y = critic_targets(&agent, &b, &layout(), 0.95);
        let input = critic_input(b.obs.view(), b.actions.view());
        let (loss, _) = critic_loss(&agent.critic, input.view(), &y).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn constant_critic_gives_zero_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = MaddpgAgent::new(0, &layout(), &small_cfg(), &mut rng);
        let mut critic = zero_net(&agent.critic);
        let last = critic.layers().len() - 1;
        let mut layers = critic.layers().to_vec();
        layers[last].bias[0] = 4.0;
        critic = Mlp::from_layers(layers, OutputActivation::Linear).unwrap();
        agent.critic = critic;
        let b = batch(&mut rng, 6, 0.0);
        let (value, grad) = policy_objective(&agent, b.obs.view(), &layout(), 0.0).unwrap();
        assert_eq!(value, 4.0);
        assert_eq!(grad.norm(), 0.0);
    }

    #[test]
    fn linear_action_critic_passes_policy_output_gradient() {
        // Q = a_0,x, so ∇_θ J is the mean gradient of the policy's first output.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = layout();
        let mut agent = MaddpgAgent::new(0, &l, &small_cfg(), &mut rng);
        let mut w = Array2::zeros((1, critic_input_len(&l)));
        w[[0, l.total_len()]] = 1.0;
        agent.critic = Mlp::from_layers(
            vec![Layer {
                weight: w,
                bias: Array1::zeros(1),
            }],
            OutputActivation::Linear,
        )
        .unwrap();
        let b = batch(&mut rng, 5, 0.0);
        let (_, grad) = policy_objective(&agent, b.obs.view(), &l, 0.0).unwrap();
        let own = agent_columns(b.obs.view(), &l, 0);
        let tape = agent.policy.forward(own.view()).unwrap();
        let mut cot = Array2::zeros((5, 2));
        cot.column_mut(0).fill(1.0 / 5.0);
        let (expected, _) = agent.policy.backward(&tape, cot.view()).unwrap();
        for (a, e) in grad.to_flat().iter().zip(expected.to_flat()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn approx_loss_at_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::init(&MlpShape::three_layer(3, 8, 2, OutputActivation::Tanh), &mut rng);
        let obs = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let mean = net.forward(obs.view()).unwrap().output().clone();
        let log_std = -1.0f64;
        let (loss, grad) = approx_policy_loss(&net, obs.view(), mean.view(), log_std, 0.0).unwrap();
        let sigma = log_std.exp();
        let expected_loglik = -2.0 * (sigma * (2.0 * PI).sqrt()).ln();
        assert!((-loss - expected_loglik).abs() < 1e-12);
        assert_eq!(grad.norm(), 0.0);
        assert_eq!(small_cfg().entropy_weight, 0.001);
    }

    #[test]
    fn update_noop_below_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = layout();
        let cfg = small_cfg();
        let mut agents: Vec<_> = (0..2).map(|i| MaddpgAgent::new(i, &l, &cfg, &mut rng)).collect();
        let before = agents.clone();
        let buffer = RlReplayBuffer::new(10);
        assert!(maddpg_update(&mut agents, &buffer, &l, &cfg, &mut rng).is_none());
        assert_eq!(agents, before);
    }

    #[test]
    fn update_touches_targets_only_by_polyak() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = layout();
        let cfg = small_cfg();
        let mut agents: Vec<_> = (0..2).map(|i| MaddpgAgent::new(i, &l, &cfg, &mut rng)).collect();
        let mut buffer = RlReplayBuffer::new(100);
        let b = batch(&mut rng, 1, 0.0);
        for _ in 0..20 {
            let mut t = Transition {
                obs: b.obs.row(0).to_vec(),
                actions: b.actions.row(0).to_vec(),
                rewards: vec![0.3, -0.2],
                next_obs: b.next_obs.row(0).to_vec(),
                mask: vec![1.0; 6],
                next_mask: vec![1.0; 6],
            };
            t.obs[0] += rng.random_range(-0.1..0.1);
            buffer.push(t);
        }
        let before = agents.clone();
        maddpg_update(&mut agents, &buffer, &l, &cfg, &mut rng).unwrap();
        for (a, b) in agents.iter().zip(&before) {
            assert_eq!(a.target_policy.adam_state().step, 0);
            assert_eq!(a.target_critic.adam_state().step, 0);
            assert_eq!(a.policy.adam_state().step, 1);
            let mut expected = b.target_critic.clone();
            expected.polyak_update(&a.critic, cfg.tau);
            assert_eq!(a.target_critic.layers(), expected.layers());
        }
    }
}
