//! Deterministic 2D particle world with three multi-agent scenarios.
//!
//! Agents are point masses driven by 2-D accelerations under a damped double
//! integrator. All randomness comes from the caller's RNG.

pub mod layout;
pub mod perturb;
pub mod scenario;
pub mod visibility;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub use layout::{JointLayout, ObsField, ObsLayout};
pub use perturb::DynamicsPerturbation;
pub use scenario::{AgentKind, LandmarkKind, ScenarioKind, ScenarioSpec};
pub use visibility::{mask_by_distance, PartialObservation, VisibilityGraph};

pub const TIMESTEP: f64 = 0.1;
pub const DAMPING: f64 = 0.25;
pub const EPISODE_LENGTH: usize = 200;
pub const CONTACT_FORCE: f64 = 1e2;
pub const CONTACT_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown scenario `{name}`; valid scenarios are: {valid}")]
    UnknownScenario { name: String, valid: String },
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub is_adversary: bool,
    pub max_speed: Option<f64>,
    pub accel: f64,
    pub size: f64,
    pub collide: bool,
}

impl AgentState {
    pub fn at_rest(position: [f64; 2], kind: &AgentKind) -> Self {
        Self {
            position,
            velocity: [0.0; 2],
            is_adversary: kind.is_adversary,
            max_speed: kind.max_speed,
            accel: kind.accel,
            size: kind.size,
            collide: kind.collide,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkState {
    pub position: [f64; 2],
    pub size: f64,
    pub collide: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub landmarks: Vec<LandmarkState>,
    /// Index of the secret goal landmark (physical deception only).
    pub goal: Option<usize>,
    pub step: usize,
}

impl WorldState {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|a| a.position).collect()
    }
}

/// Per-agent observation vectors at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObservation {
    pub per_agent: Vec<Vec<f64>>,
}

impl JointObservation {
    pub fn flatten(&self) -> Vec<f64> {
        self.per_agent.concat()
    }

    pub fn from_flat(flat: &[f64], layout: &JointLayout) -> Self {
        assert_eq!(flat.len(), layout.total_len());
        Self {
            per_agent: (0..layout.n_agents())
                .map(|i| flat[layout.agent_range(i)].to_vec())
                .collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn is_finite(&self) -> bool {
        self.per_agent.iter().flatten().all(|x| x.is_finite())
    }
}

/// One line of a JSON-lines trajectory dump.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    pub mask: Vec<f64>,
}

impl StepRecord {
    pub fn new(state: &WorldState, rewards: &[f64], mask: &[f64]) -> Self {
        Self {
            step: state.step,
            positions: state.positions(),
            velocities: state.agents.iter().map(|a| a.velocity).collect(),
            rewards: rewards.to_vec(),
            mask: mask.to_vec(),
        }
    }
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> [f64; 2] {
    [
        rng.random_range(-half_width..=half_width),
        rng.random_range(-half_width..=half_width),
    ]
}

/// A single scenario instance.
#[derive(Debug, Clone)]
pub struct ParticleEnv {
    spec: ScenarioSpec,
    state: WorldState,
}

impl ParticleEnv {
    pub fn new(spec: ScenarioSpec) -> Self {
        let state = WorldState {
            agents: spec.agents.iter().map(|k| AgentState::at_rest([0.0; 2], k)).collect(),
            landmarks: spec
                .landmarks
                .iter()
                .map(|k| LandmarkState {
                    position: [0.0; 2],
                    size: k.size,
                    collide: k.collide,
                })
                .collect(),
            goal: None,
            step: 0,
        };
        Self { spec, state }
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Replaces the world state wholesale (tests and replays).
    pub fn set_state(&mut self, state: WorldState) {
        self.state = state;
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= EPISODE_LENGTH
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> JointObservation {
        let hw = self.spec.world_half_width;
        for (agent, kind) in self.state.agents.iter_mut().zip(&self.spec.agents) {
            *agent = AgentState::at_rest(uniform_point(rng, hw), kind);
        }
        for landmark in &mut self.state.landmarks {
            landmark.position = uniform_point(rng, hw);
        }
        self.state.goal = match self.spec.kind {
            ScenarioKind::PhysicalDeception => Some(rng.random_range(0..self.spec.n_landmarks)),
            _ => None,
        };
        self.state.step = 0;
        self.observe()
    }

    /// Advances one tick. Action components are clamped to [-1, 1].
    pub fn step(&mut self, actions: &[[f64; 2]]) -> (JointObservation, Vec<f64>) {
        assert_eq!(actions.len(), self.spec.n_agents, "one action per agent");
        let n = self.state.agents.len();
        let mut force: Vec<[f64; 2]> = self
            .state
            .agents
            .iter()
            .zip(actions)
            .map(|(agent, a)| [agent.accel * a[0].clamp(-1.0, 1.0), agent.accel * a[1].clamp(-1.0, 1.0)])
            .collect();
        self.apply_contact_forces(&mut force);
        for (agent, f) in self.state.agents.iter_mut().zip(&force) {
            for k in 0..2 {
                agent.velocity[k] = agent.velocity[k] * (1.0 - DAMPING) + f[k] * TIMESTEP;
            }
            if let Some(max) = agent.max_speed {
                let speed = agent.speed();
                if speed > max {
                    agent.velocity = [agent.velocity[0] / speed * max, agent.velocity[1] / speed * max];
                }
            }
            for k in 0..2 {
                agent.position[k] += agent.velocity[k] * TIMESTEP;
            }
        }
        debug_assert_eq!(force.len(), n);
        self.state.step += 1;
        let rewards = self.spec.rewards(&self.state);
        (self.observe(), rewards)
    }

    fn apply_contact_forces(&self, force: &mut [[f64; 2]]) {
        let agents = &self.state.agents;
        for i in 0..agents.len() {
            if !agents[i].collide {
                continue;
            }
            for j in i + 1..agents.len() {
                if !agents[j].collide {
                    continue;
                }
                if let Some(f) = contact_force(agents[i].position, agents[j].position, agents[i].size + agents[j].size)
                {
                    force[i][0] += f[0];
                    force[i][1] += f[1];
                    force[j][0] -= f[0];
                    force[j][1] -= f[1];
                }
            }
            for landmark in self.state.landmarks.iter().filter(|l| l.collide) {
                if let Some(f) = contact_force(agents[i].position, landmark.position, agents[i].size + landmark.size) {
                    force[i][0] += f[0];
                    force[i][1] += f[1];
                }
            }
        }
    }

    pub fn observe(&self) -> JointObservation {
        observe(&self.spec, &self.state)
    }
}

/// Soft contact force on `a` from `b` (and its negation on `b`).
fn contact_force(a: [f64; 2], b: [f64; 2], min_dist: f64) -> Option<[f64; 2]> {
    let delta = [a[0] - b[0], a[1] - b[1]];
    let d = delta[0].hypot(delta[1]);
    if d < 1e-12 {
        return None;
    }
    let x = -(d - min_dist) / CONTACT_MARGIN;
    // log(1 + e^x) without overflow
    let softplus = if x > 30.0 { x } else { x.exp().ln_1p() };
    let penetration = CONTACT_MARGIN * softplus;
    let scale = CONTACT_FORCE * penetration / d;
    Some([delta[0] * scale, delta[1] * scale])
}

/// Builds every agent's observation following its layout.
pub fn observe(spec: &ScenarioSpec, state: &WorldState) -> JointObservation {
    let per_agent = (0..spec.n_agents)
        .map(|i| {
            let me = &state.agents[i];
            let rel = |p: [f64; 2]| [p[0] - me.position[0], p[1] - me.position[1]];
            let mut obs = Vec::with_capacity(spec.obs_len(i));
            for field in &spec.obs_layouts[i] {
                let value = match (field.name.as_str(), field.about) {
                    ("vel", None) => me.velocity,
                    ("pos", None) => me.position,
                    ("goal_rel", None) => rel(state.landmarks[state.goal.expect("goal assigned")].position),
                    (_, Some(j)) if field.name.starts_with("other_pos") => rel(state.agents[j].position),
                    (_, Some(j)) if field.name.starts_with("other_vel") => state.agents[j].velocity,
                    (name, None) if name.starts_with("landmark_rel") => {
                        let l: usize = name["landmark_rel[".len()..name.len() - 1]
                            .parse()
                            .expect("landmark index");
                        rel(state.landmarks[l].position)
                    }
                    (name, _) => unreachable!("unknown observation field {name}"),
                };
                obs.extend_from_slice(&value);
            }
            debug_assert_eq!(obs.len(), spec.obs_len(i));
            obs
        })
        .collect();
    JointObservation { per_agent }
}
