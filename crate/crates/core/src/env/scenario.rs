//! The three particle-world tasks: entity counts, observation layouts and
//! reward wiring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layout::{JointLayout, ObsField, ObsLayout};
use super::{EnvError, WorldState};

/// Reward per predator for every predator/prey contact, and the prey's loss.
pub const COLLISION_REWARD: f64 = 10.0;
/// Shared penalty per colliding pair in cooperative navigation.
pub const NAVIGATION_COLLISION_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PhysicalDeception,
    PredatorPrey,
    CooperativeNavigation,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::PhysicalDeception,
        ScenarioKind::PredatorPrey,
        ScenarioKind::CooperativeNavigation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PhysicalDeception => "physical_deception",
            ScenarioKind::PredatorPrey => "predator_prey",
            ScenarioKind::CooperativeNavigation => "cooperative_navigation",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EnvError::UnknownScenario {
                name: s.to_string(),
                valid: Self::ALL.map(|k| k.name()).join(", "),
            })
    }
}

/// Physical parameters of one agent kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentKind {
    pub is_adversary: bool,
    pub size: f64,
    /// Scale from action to applied force.
    pub accel: f64,
    pub max_speed: Option<f64>,
    pub collide: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkKind {
    pub size: f64,
    pub collide: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_agents: usize,
    pub n_landmarks: usize,
    pub adversary_indices: Vec<usize>,
    pub agents: Vec<AgentKind>,
    pub landmarks: Vec<LandmarkKind>,
    pub obs_layouts: Vec<ObsLayout>,
    pub world_half_width: f64,
    joint: JointLayout,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        let (agents, landmarks) = match kind {
            ScenarioKind::PhysicalDeception => {
                let adversary = AgentKind {
                    is_adversary: true,
                    size: 0.15,
                    accel: 1.0,
                    max_speed: None,
                    collide: false,
                };
                let cooperator = AgentKind {
                    is_adversary: false,
                    ..adversary
                };
                let landmark = LandmarkKind {
                    size: 0.08,
                    collide: false,
                };
                (vec![adversary, cooperator, cooperator], vec![landmark; 2])
            }
            ScenarioKind::PredatorPrey => {
                let predator = AgentKind {
                    is_adversary: true,
                    size: 0.075,
                    accel: 1.0,
                    max_speed: Some(1.0),
                    collide: true,
                };
                let prey = AgentKind {
                    is_adversary: false,
                    size: 0.05,
                    accel: 4.0 / 3.0,
                    max_speed: Some(1.3),
                    collide: true,
                };
                let obstacle = LandmarkKind {
                    size: 0.2,
                    collide: true,
                };
                (vec![predator, predator, predator, prey], vec![obstacle; 2])
            }
            ScenarioKind::CooperativeNavigation => {
                let agent = AgentKind {
                    is_adversary: false,
                    size: 0.15,
                    accel: 1.0,
                    max_speed: None,
                    collide: true,
                };
                let landmark = LandmarkKind {
                    size: 0.05,
                    collide: false,
                };
                (vec![agent; 3], vec![landmark; 3])
            }
        };
        let n_agents = agents.len();
        let n_landmarks = landmarks.len();
        let obs_layouts: Vec<ObsLayout> = (0..n_agents)
            .map(|i| Self::layout_for(kind, i, &agents, n_landmarks))
            .collect();
        let adversary_indices = agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_adversary)
            .map(|(i, _)| i)
            .collect();
        let joint = JointLayout::new(&obs_layouts);
        let spec = Self {
            kind,
            n_agents,
            n_landmarks,
            adversary_indices,
            agents,
            landmarks,
            obs_layouts,
            world_half_width: 1.0,
            joint,
        };
        spec.validate().expect("built-in scenario is valid");
        spec
    }

    fn layout_for(kind: ScenarioKind, agent: usize, agents: &[AgentKind], n_landmarks: usize) -> ObsLayout {
        let mut layout = vec![ObsField::own("vel", 2), ObsField::own("pos", 2)];
        if kind == ScenarioKind::PhysicalDeception && !agents[agent].is_adversary {
            layout.push(ObsField::own("goal_rel", 2));
        }
        for l in 0..n_landmarks {
            layout.push(ObsField::own(&format!("landmark_rel[{l}]"), 2));
        }
        let others: Vec<usize> = (0..agents.len()).filter(|&j| j != agent).collect();
        for &j in &others {
            layout.push(ObsField::about("other_pos", 2, j));
        }
        if kind == ScenarioKind::PredatorPrey {
            for &j in &others {
                layout.push(ObsField::about("other_vel", 2, j));
            }
        }
        layout
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.agents.len() != self.n_agents || self.obs_layouts.len() != self.n_agents {
            return Err(EnvError::InvalidSpec("agent count mismatch".into()));
        }
        if self.landmarks.len() != self.n_landmarks {
            return Err(EnvError::InvalidSpec("landmark count mismatch".into()));
        }
        if self.adversary_indices.iter().any(|&i| i >= self.n_agents) {
            return Err(EnvError::InvalidSpec("adversary index out of range".into()));
        }
        for (i, layout) in self.obs_layouts.iter().enumerate() {
            if layout
                .iter()
                .any(|f| f.about.is_some_and(|j| j >= self.n_agents || j == i))
            {
                return Err(EnvError::InvalidSpec(format!(
                    "agent {i} layout references an invalid agent"
                )));
            }
            let total: usize = layout.iter().map(|f| f.len).sum();
            if total != self.joint.agent_len(i) {
                return Err(EnvError::InvalidSpec(format!("agent {i} layout length mismatch")));
            }
        }
        if self.world_half_width != 1.0 {
            return Err(EnvError::InvalidSpec("world width must be 2".into()));
        }
        Ok(())
    }

    pub fn joint_layout(&self) -> &JointLayout {
        &self.joint
    }

    pub fn obs_len(&self, agent: usize) -> usize {
        self.joint.agent_len(agent)
    }

    pub fn joint_obs_len(&self) -> usize {
        self.joint.total_len()
    }

    pub fn is_adversary(&self, agent: usize) -> bool {
        self.agents[agent].is_adversary
    }

    /// Agents that are not adversaries, i.e. the team whose reward the plots track.
    pub fn cooperators(&self) -> Vec<usize> {
        (0..self.n_agents).filter(|&i| !self.is_adversary(i)).collect()
    }

    pub fn rewards(&self, state: &WorldState) -> Vec<f64> {
        match self.kind {
            ScenarioKind::PhysicalDeception => reward_physical_deception(self, state),
            ScenarioKind::PredatorPrey => reward_predator_prey(self, state),
            ScenarioKind::CooperativeNavigation => reward_cooperative_navigation(self, state),
        }
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn agents_collide(state: &WorldState, i: usize, j: usize) -> bool {
    let a = &state.agents[i];
    let b = &state.agents[j];
    dist(a.position, b.position) < a.size + b.size
}

/// Cooperators score when one of them is close to the goal and when the
/// adversary is far from it; the adversary scores by closing in on the goal.
pub fn reward_physical_deception(spec: &ScenarioSpec, state: &WorldState) -> Vec<f64> {
    assert_eq!(
        spec.kind,
        ScenarioKind::PhysicalDeception,
        "physical deception reward on another scenario"
    );
    let goal = state.landmarks[state.goal.expect("deception world has a goal")].position;
    let adversary_dist: f64 = spec
        .adversary_indices
        .iter()
        .map(|&i| dist(state.agents[i].position, goal))
        .sum();
    let closest_cooperator = spec
        .cooperators()
        .into_iter()
        .map(|i| dist(state.agents[i].position, goal))
        .fold(f64::INFINITY, f64::min);
    let team = adversary_dist - closest_cooperator;
    (0..spec.n_agents)
        .map(|i| {
            if spec.is_adversary(i) {
                -dist(state.agents[i].position, goal)
            } else {
                team
            }
        })
        .collect()
}

/// Arena-exit penalty for one coordinate's absolute value.
pub fn boundary_penalty(x: f64) -> f64 {
    let x = x.abs();
    if x < 0.9 {
        0.0
    } else if x < 1.0 {
        (x - 0.9) * 10.0
    } else {
        (2.0 * x - 2.0).exp().min(10.0)
    }
}

/// Every predator gains `COLLISION_REWARD` per predator/prey contact; the
/// prey loses the same per contact and pays the boundary penalty.
pub fn reward_predator_prey(spec: &ScenarioSpec, state: &WorldState) -> Vec<f64> {
    assert_eq!(
        spec.kind,
        ScenarioKind::PredatorPrey,
        "predator-prey reward on another scenario"
    );
    let prey = spec.cooperators();
    let mut contacts = 0usize;
    let mut prey_hits = vec![0usize; spec.n_agents];
    for &p in &prey {
        for &a in &spec.adversary_indices {
            if agents_collide(state, p, a) {
                contacts += 1;
                prey_hits[p] += 1;
            }
        }
    }
    (0..spec.n_agents)
        .map(|i| {
            if spec.is_adversary(i) {
                COLLISION_REWARD * contacts as f64
            } else {
                let pos = state.agents[i].position;
                -COLLISION_REWARD * prey_hits[i] as f64 - boundary_penalty(pos[0]) - boundary_penalty(pos[1])
            }
        })
        .collect()
}

/// Distance part of the shared navigation reward: −Σ over landmarks of the
/// distance to the closest agent.
pub fn navigation_coverage(state: &WorldState) -> f64 {
    -state
        .landmarks
        .iter()
        .map(|l| {
            state
                .agents
                .iter()
                .map(|a| dist(a.position, l.position))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
}

pub fn reward_cooperative_navigation(spec: &ScenarioSpec, state: &WorldState) -> Vec<f64> {
    assert_eq!(
        spec.kind,
        ScenarioKind::CooperativeNavigation,
        "cooperative navigation reward on another scenario"
    );
    let mut collisions = 0usize;
    for i in 0..spec.n_agents {
        for j in i + 1..spec.n_agents {
            if agents_collide(state, i, j) {
                collisions += 1;
            }
        }
    }
    let shared = navigation_coverage(state) - NAVIGATION_COLLISION_PENALTY * collisions as f64;
    vec![shared; spec.n_agents]
}
