//! One seeded trial: a centralized phase with full observations followed by a
//! decentralized phase with distance masking (and optional perturbation).

use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ExperimentConfig};
use super::HarnessError;
use crate::ccwgan::{mask_random, reconstruction_mse, train_step, GanConfig, GanNets, ObsReplayBuffer};
use crate::env::visibility::fill_masked;
use crate::env::{
    DynamicsPerturbation, JointObservation, ParticleEnv, ScenarioSpec, StepRecord, VisibilityGraph, EPISODE_LENGTH,
};
use crate::marl::{
    ddpg_update, infer_joint_observation, maddpg_update, select_action, DdpgAgent, MaddpgAgent, MarlConfig,
    RlReplayBuffer, Transition,
};
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Centralized,
    Decentralized,
}

impl Phase {
    pub fn index(self) -> usize {
        match self {
            Phase::Centralized => 0,
            Phase::Decentralized => 1,
        }
    }
}

/// Per-episode metrics of one trial. Loss fields are `None` in episodes
/// without the corresponding update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub phase: Phase,
    /// Undiscounted episode return of every agent.
    pub agent_rewards: Vec<f64>,
    /// Mean return over non-adversary agents.
    pub coop_reward: f64,
    pub adv_reward: Option<f64>,
    pub total_reward: f64,
    pub critic_loss: Option<f64>,
    pub policy_value: Option<f64>,
    pub approx_loss: Option<f64>,
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    /// Decentralized phase: error of the acting joint view against the
    /// truth, every step. Centralized phase, inference arm only: a random-mask
    /// probe at each update.
    pub recon_mse: Option<f64>,
    /// Mean fraction of masked joint-observation entries per step.
    pub masked_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    /// Hash of every network parameter when the decentralized phase starts.
    pub boundary_digest: u64,
    pub final_digest: u64,
    pub networks: Vec<(String, Mlp)>,
    /// Step records of the last episode, when world dumps are enabled.
    pub world_dump: Vec<StepRecord>,
}

/// Independent streams so that, say, enabling inference does not shift the
/// environment or exploration noise.
struct Streams {
    init: ChaCha8Rng,
    env: ChaCha8Rng,
    action: ChaCha8Rng,
    mask: ChaCha8Rng,
    update: ChaCha8Rng,
    gan: ChaCha8Rng,
    perturb: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            init: stream(0),
            env: stream(1),
            action: stream(2),
            mask: stream(3),
            update: stream(4),
            gan: stream(5),
            perturb: stream(6),
        }
    }
}

enum Learners {
    Maddpg {
        agents: Vec<MaddpgAgent>,
        buffer: RlReplayBuffer,
    },
    Ddpg {
        agents: Vec<DdpgAgent>,
        buffers: Vec<RlReplayBuffer>,
    },
}

struct Gan {
    nets: GanNets,
    buffer: ObsReplayBuffer,
    cfg: GanConfig,
}

/// What the agents have to act on at one step.
struct StepView {
    /// Joint observation without range limits (perturbed when applicable).
    truth: Vec<f64>,
    /// Joint vector stored for the centralized critic.
    joint: Vec<f64>,
    mask: Vec<f64>,
    own: Vec<Vec<f64>>,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default)]
struct EpisodeAcc {
    critic: Mean,
    policy: Mean,
    approx: Mean,
    d: Mean,
    g: Mean,
    mse: Mean,
    masked: Mean,
}

struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    marl: MarlConfig,
    spec: ScenarioSpec,
    env: ParticleEnv,
    rng: Streams,
    learners: Learners,
    gan: Option<Gan>,
    perturbation: DynamicsPerturbation,
}

fn digest<'a>(nets: impl Iterator<Item = &'a Mlp>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for net in nets {
        for v in net.flat_params() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

impl<'a> Trial<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: u64) -> Self {
        let spec = ScenarioSpec::new(cfg.scenario);
        let layout = spec.joint_layout().clone();
        let n = spec.n_agents;
        let marl = cfg.marl();
        let mut rng = Streams::new(seed);
        let learners = match cfg.algorithm {
            Algorithm::MaddpgInfer | Algorithm::Maddpg => Learners::Maddpg {
                agents: (0..n)
                    .map(|i| MaddpgAgent::new(i, &layout, &marl, &mut rng.init))
                    .collect(),
                buffer: RlReplayBuffer::new(marl.buffer_capacity),
            },
            Algorithm::Ddpg => Learners::Ddpg {
                agents: (0..n)
                    .map(|i| DdpgAgent::new(i, layout.agent_len(i), &marl, &mut rng.init))
                    .collect(),
                buffers: (0..n).map(|_| RlReplayBuffer::new(marl.buffer_capacity)).collect(),
            },
        };
        let gan = (cfg.algorithm == Algorithm::MaddpgInfer).then(|| {
            let gcfg = cfg.gan();
            Gan {
                nets: GanNets::new(layout.total_len(), gcfg.hidden, &mut rng.gan),
                buffer: ObsReplayBuffer::new(gcfg.buffer_capacity),
                cfg: gcfg,
            }
        });
        let perturbation = if cfg.perturb {
            DynamicsPerturbation::sampled(
                cfg.action_noise_scale,
                cfg.obs_noise_scale,
                cfg.max_translation,
                layout.total_len(),
                &mut rng.perturb,
            )
        } else {
            DynamicsPerturbation::disabled(layout.total_len())
        };
        Self {
            cfg,
            marl,
            env: ParticleEnv::new(spec.clone()),
            spec,
            rng,
            learners,
            gan,
            perturbation,
        }
    }

    fn networks(&self) -> Vec<(String, &Mlp)> {
        let mut out = Vec::new();
        match &self.learners {
            Learners::Maddpg { agents, .. } => {
                for a in agents {
                    for (name, j, net) in a.networks() {
                        let label = match j {
                            Some(j) => format!("agent{}_{name}{j}", a.index),
                            None => format!("agent{}_{name}", a.index),
                        };
                        out.push((label, net));
                    }
                }
            }
            Learners::Ddpg { agents, .. } => {
                for a in agents {
                    for (name, net) in a.networks() {
                        out.push((format!("agent{}_{name}", a.index), net));
                    }
                }
            }
        }
        if let Some(g) = &self.gan {
            out.push(("gan_generator".into(), &g.nets.generator));
            out.push(("gan_discriminator".into(), &g.nets.discriminator));
        }
        out
    }

    fn digest(&self) -> u64 {
        digest(self.networks().into_iter().map(|(_, n)| n))
    }

    fn slices(&self, joint: &[f64]) -> Vec<Vec<f64>> {
        let layout = self.spec.joint_layout();
        (0..layout.n_agents())
            .map(|i| joint[layout.agent_range(i)].to_vec())
            .collect()
    }

    fn view(&mut self, obs: &JointObservation, phase: Phase) -> StepView {
        let layout = self.spec.joint_layout().clone();
        let mut truth = obs.flatten();
        let view = match phase {
            Phase::Centralized => StepView {
                joint: truth.clone(),
                mask: vec![1.0; truth.len()],
                own: self.slices(&truth),
                truth,
            },
            Phase::Decentralized => {
                self.perturbation.perturb_observation(&mut truth, &mut self.rng.perturb);
                let graph = VisibilityGraph::from_positions(&self.env.state().positions(), self.cfg.dp);
                match &self.gan {
                    Some(gan) => {
                        let inferred = infer_joint_observation(&gan.nets, &layout, &truth, &graph, &mut self.rng.mask);
                        let (joint, mask) = inferred.assembled(&layout);
                        let own = (0..layout.n_agents())
                            .map(|i| inferred.own_observation(&layout, i).to_vec())
                            .collect();
                        StepView {
                            truth,
                            joint,
                            mask,
                            own,
                        }
                    }
                    None => {
                        let mask = layout.mask_for_pairs(|i, j| graph.sees(i, j));
                        let joint = fill_masked(&truth, &mask, &mut self.rng.mask);
                        StepView {
                            own: self.slices(&joint),
                            truth,
                            joint,
                            mask,
                        }
                    }
                }
            }
        };
        if let Some(gan) = &mut self.gan {
            match phase {
                Phase::Centralized => gan.buffer.push(view.truth.clone()),
                Phase::Decentralized if self.cfg.gan_store_inferred => gan.buffer.push(view.joint.clone()),
                Phase::Decentralized => {}
            }
        }
        view
    }

    fn act(&mut self, view: &StepView, sigma: f64) -> Vec<[f64; 2]> {
        let policies: Vec<&Mlp> = match &self.learners {
            Learners::Maddpg { agents, .. } => agents.iter().map(|a| &a.policy).collect(),
            Learners::Ddpg { agents, .. } => agents.iter().map(|a| &a.policy).collect(),
        };
        policies
            .iter()
            .zip(&view.own)
            .map(|(p, o)| select_action(p, o, sigma, &mut self.rng.action))
            .collect()
    }

    fn store(&mut self, prev: &StepView, actions: &[[f64; 2]], rewards: &[f64], next: &StepView) {
        match &mut self.learners {
            Learners::Maddpg { buffer, .. } => buffer.push(Transition {
                obs: prev.joint.clone(),
                actions: actions.iter().flatten().copied().collect(),
                rewards: rewards.to_vec(),
                next_obs: next.joint.clone(),
                mask: prev.mask.clone(),
                next_mask: next.mask.clone(),
            }),
            Learners::Ddpg { buffers, .. } => {
                let layout = self.spec.joint_layout();
                for (i, buffer) in buffers.iter_mut().enumerate() {
                    let r = layout.agent_range(i);
                    buffer.push(Transition {
                        obs: prev.own[i].clone(),
                        actions: actions[i].to_vec(),
                        rewards: vec![rewards[i]],
                        next_obs: next.own[i].clone(),
                        mask: prev.mask[r.clone()].to_vec(),
                        next_mask: next.mask[r].to_vec(),
                    });
                }
            }
        }
    }

    fn update(&mut self, phase: Phase, latest: &StepView, acc: &mut EpisodeAcc) {
        let layout = self.spec.joint_layout().clone();
        if phase == Phase::Centralized || self.cfg.policy_updates {
            match &mut self.learners {
                Learners::Maddpg { agents, buffer } => {
                    if let Some(m) = maddpg_update(agents, buffer, &layout, &self.marl, &mut self.rng.update) {
                        acc.critic.add(m.critic_loss);
                        acc.policy.add(m.policy_value);
                        acc.approx.add(m.approx_loss);
                    }
                }
                Learners::Ddpg { agents, buffers } => {
                    for (agent, buffer) in agents.iter_mut().zip(buffers.iter()) {
                        if let Some(m) = ddpg_update(agent, buffer, &self.marl, &mut self.rng.update) {
                            acc.critic.add(m.critic_loss);
                            acc.policy.add(m.policy_value);
                        }
                    }
                }
            }
        }
        if let Some(gan) = &mut self.gan {
            let train = phase == Phase::Centralized || self.cfg.gan_updates;
            if train && gan.buffer.len() >= gan.cfg.batch_size {
                let m = train_step(&mut gan.nets, &gan.buffer, &layout, &gan.cfg, &mut self.rng.gan);
                if !m.skipped {
                    acc.d.add(m.d_loss);
                    acc.g.add(m.g_loss);
                }
            }
            if phase == Phase::Centralized {
                // probe: hide random agents of the latest observation
                let s = mask_random(&latest.truth, &layout, &mut self.rng.gan);
                let (inferred, _) = gan.nets.infer(&s.partial, &s.mask);
                acc.mse.add(reconstruction_mse(&s.full, &inferred));
            }
        }
    }

    fn exploration(&self, episode: usize) -> f64 {
        let c = self.cfg.episodes_centralized;
        let frac = if c == 0 {
            1.0
        } else {
            (episode as f64 / c as f64).min(1.0)
        };
        self.cfg.explore_sigma + (self.cfg.explore_sigma_final - self.cfg.explore_sigma) * frac
    }

    fn row(&self, episode: usize, phase: Phase, returns: Vec<f64>, acc: &EpisodeAcc) -> EpisodeRow {
        let coop: Vec<f64> = self.spec.cooperators().iter().map(|&i| returns[i]).collect();
        let adv: Vec<f64> = self.spec.adversary_indices.iter().map(|&i| returns[i]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        EpisodeRow {
            episode,
            phase,
            coop_reward: mean(&coop),
            adv_reward: (!adv.is_empty()).then(|| mean(&adv)),
            total_reward: returns.iter().sum(),
            agent_rewards: returns,
            critic_loss: acc.critic.get(),
            policy_value: acc.policy.get(),
            approx_loss: acc.approx.get(),
            d_loss: acc.d.get(),
            g_loss: acc.g.get(),
            recon_mse: acc.mse.get(),
            masked_fraction: acc.masked.get().unwrap_or(0.0),
        }
    }
}

/// Runs trial `trial` with seed `cfg.seed + trial`.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut t = Trial::new(cfg, seed);
    let n = t.spec.n_agents;
    let total = cfg.total_episodes();
    let mut rows = Vec::with_capacity(total);
    let mut boundary_digest = t.digest();
    let mut world_dump = Vec::new();
    let mut global_step = 0usize;
    for episode in 0..total {
        let phase = if episode < cfg.episodes_centralized {
            Phase::Centralized
        } else {
            Phase::Decentralized
        };
        if episode == cfg.episodes_centralized {
            boundary_digest = t.digest();
        }
        let sigma = t.exploration(episode);
        let dump = cfg.dump_world && episode + 1 == total;
        let mut acc = EpisodeAcc::default();
        let mut returns = vec![0.0; n];
        let obs = t.env.reset(&mut t.rng.env);
        let mut view = t.view(&obs, phase);
        for _ in 0..EPISODE_LENGTH {
            let masked = view.mask.iter().filter(|&&m| m != 1.0).count();
            acc.masked.add(masked as f64 / view.mask.len() as f64);
            if phase == Phase::Decentralized {
                acc.mse.add(reconstruction_mse(&view.truth, &view.joint));
            }
            let actions = t.act(&view, sigma);
            let applied: Vec<[f64; 2]> = match phase {
                Phase::Decentralized => actions
                    .iter()
                    .map(|&a| t.perturbation.perturb_action(a, &mut t.rng.perturb))
                    .collect(),
                Phase::Centralized => actions.clone(),
            };
            let (next_obs, rewards) = t.env.step(&applied);
            for (acc_r, r) in returns.iter_mut().zip(&rewards) {
                *acc_r += r;
            }
            if dump {
                world_dump.push(StepRecord::new(t.env.state(), &rewards, &view.mask));
            }
            let next = t.view(&next_obs, phase);
            t.store(&view, &actions, &rewards, &next);
            global_step += 1;
            if global_step.is_multiple_of(cfg.update_every) {
                t.update(phase, &next, &mut acc);
            }
            view = next;
        }
        if returns.iter().any(|r| !r.is_finite()) || t.networks().iter().any(|(_, m)| !m.is_finite()) {
            return Err(HarnessError::Diverged { trial, episode });
        }
        let row = t.row(episode, phase, returns, &acc);
        if episode % 100 == 0 || episode + 1 == total {
            log::info!(
                "trial {trial} episode {episode} {:?}: coop reward {:.3}",
                phase,
                row.coop_reward
            );
        }
        rows.push(row);
    }
    let final_digest = t.digest();
    let networks = t.networks().into_iter().map(|(k, m)| (k, m.clone())).collect();
    Ok(TrialResult {
        trial,
        seed,
        rows,
        boundary_digest,
        final_digest,
        networks,
        world_dump,
    })
}
