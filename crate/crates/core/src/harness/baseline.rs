//! Reference policies used to put learning curves in context.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ParticleEnv, ScenarioKind, ScenarioSpec, WorldState, EPISODE_LENGTH};

/// Mean per-episode cooperator return of `policy` over `episodes` episodes.
pub fn mean_episode_return<F>(kind: ScenarioKind, episodes: usize, seed: u64, mut policy: F) -> f64
where
    F: FnMut(&WorldState, &mut ChaCha8Rng) -> Vec<[f64; 2]>,
{
    assert!(episodes > 0);
    let spec = ScenarioSpec::new(kind);
    let coop = spec.cooperators();
    let mut env = ParticleEnv::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        env.reset(&mut rng);
        for _ in 0..EPISODE_LENGTH {
            let actions = policy(env.state(), &mut rng);
            let (_, rewards) = env.step(&actions);
            total += coop.iter().map(|&i| rewards[i]).sum::<f64>() / coop.len() as f64;
        }
    }
    total / episodes as f64
}

/// Independent uniform actions in the unit box.
pub fn uniform_random_policy(state: &WorldState, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    state
        .agents
        .iter()
        .map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
        .collect()
}

/// Landmark targets by greedy matching: the closest unclaimed
/// (agent, landmark) pair is fixed first, and so on. Agents left without a
/// landmark hold position.
pub fn nearest_landmark_targets(state: &WorldState) -> Vec<[f64; 2]> {
    let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in state.agents.iter().enumerate() {
        for (l, lm) in state.landmarks.iter().enumerate() {
            pairs.push((d(a.position, lm.position), i, l));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut target: Vec<Option<[f64; 2]>> = vec![None; state.agents.len()];
    let mut claimed = vec![false; state.landmarks.len()];
    for (_, i, l) in &pairs {
        if target[*i].is_none() && !claimed[*l] {
            target[*i] = Some(state.landmarks[*l].position);
            claimed[*l] = true;
        }
    }
    state
        .agents
        .iter()
        .zip(target)
        .map(|(a, t)| t.unwrap_or(a.position))
        .collect()
}

/// Each agent steers toward its matched landmark with a damped proportional
/// controller.
pub fn nearest_landmark_policy(state: &WorldState, _rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    const GAIN: f64 = 4.0;
    const DAMP: f64 = 2.0;
    state
        .agents
        .iter()
        .zip(nearest_landmark_targets(state))
        .map(|(a, t)| [0, 1].map(|k| (GAIN * (t[k] - a.position[k]) - DAMP * a.velocity[k]).clamp(-1.0, 1.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heuristic_beats_random_on_navigation() {
        let kind = ScenarioKind::CooperativeNavigation;
        let random = mean_episode_return(kind, 20, 0, uniform_random_policy);
        let greedy = mean_episode_return(kind, 20, 0, nearest_landmark_policy);
        assert!(greedy > random, "{greedy} vs {random}");
    }
}
