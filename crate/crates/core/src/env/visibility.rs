//! Distance-limited observability.

use rand::Rng;
use rand_distr::StandardNormal;

use super::layout::JointLayout;
use super::scenario::dist;
use super::JointObservation;

/// Undirected graph of agent pairs within observation range of each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityGraph {
    adjacent: Vec<Vec<bool>>,
}

impl VisibilityGraph {
    pub fn from_positions(positions: &[[f64; 2]], range: f64) -> Self {
        let n = positions.len();
        let adjacent = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| i == j || dist(positions[i], positions[j]) <= range)
                    .collect()
            })
            .collect();
        Self { adjacent }
    }

    pub fn fully_connected(n: usize) -> Self {
        Self {
            adjacent: vec![vec![true; n]; n],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.adjacent.len()
    }

    pub fn sees(&self, i: usize, j: usize) -> bool {
        self.adjacent[i][j]
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_agents();
        let mut label = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            label[start] = id;
            let mut frontier = vec![start];
            while let Some(i) = frontier.pop() {
                for j in 0..n {
                    if self.adjacent[i][j] && label[j] == usize::MAX {
                        label[j] = id;
                        members.push(j);
                        frontier.push(j);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    pub fn is_complete(&self) -> bool {
        self.adjacent.iter().flatten().all(|&v| v)
    }
}

/// Result of distance masking: noise-filled partial observation, the joint
/// element mask, and the visibility graph it came from.
#[derive(Debug, Clone)]
pub struct PartialObservation {
    pub partial: JointObservation,
    pub mask: Vec<f64>,
    pub graph: VisibilityGraph,
}

/// Hides, in each agent's vector, every field about an agent farther than
/// `range`, replacing it with standard normal noise.
pub fn mask_by_distance<R: Rng + ?Sized>(
    joint: &JointObservation,
    layout: &JointLayout,
    positions: &[[f64; 2]],
    range: f64,
    rng: &mut R,
) -> PartialObservation {
    assert!(range >= 0.0, "observation range must be non-negative");
    assert_eq!(positions.len(), layout.n_agents());
    let graph = VisibilityGraph::from_positions(positions, range);
    let mask = layout.mask_for_pairs(|i, j| graph.sees(i, j));
    let flat = fill_masked(&joint.flatten(), &mask, rng);
    PartialObservation {
        partial: JointObservation::from_flat(&flat, layout),
        mask,
        graph,
    }
}

/// `m ⊙ x + (1 − m) ⊙ z` with fresh `z ~ N(0, 1)` drawn only for masked entries.
pub fn fill_masked<R: Rng + ?Sized>(x: &[f64], mask: &[f64], rng: &mut R) -> Vec<f64> {
    assert_eq!(x.len(), mask.len());
    x.iter()
        .zip(mask)
        .map(|(&v, &m)| if m == 1.0 { v } else { rng.sample(StandardNormal) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ScenarioKind, ScenarioSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_agent() -> JointLayout {
        use crate::env::ObsField;
        JointLayout::new(&[
            vec![ObsField::own("pos", 2), ObsField::about("other_pos", 2, 1)],
            vec![ObsField::own("pos", 2), ObsField::about("other_pos", 2, 0)],
        ])
    }

    fn obs() -> JointObservation {
        JointObservation {
            per_agent: vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]],
        }
    }

    #[test]
    fn within_range_is_fully_visible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = mask_by_distance(&obs(), &two_agent(), &[[0.0, 0.0], [0.5, 0.0]], 1.0, &mut rng);
        assert!(p.mask.iter().all(|&m| m == 1.0));
        assert_eq!(p.partial, obs());
        assert!(p.graph.is_complete());
    }

    #[test]
    fn out_of_range_masks_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = mask_by_distance(&obs(), &two_agent(), &[[0.0, 0.0], [1.5, 0.0]], 1.0, &mut rng);
        assert_eq!(p.mask, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(&p.partial.per_agent[0][..2], &[1.0, 2.0]);
        assert_ne!(&p.partial.per_agent[0][2..], &[3.0, 4.0]);
        assert_eq!(p.graph.components(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn diagonal_range_never_masks() {
        let spec = ScenarioSpec::new(ScenarioKind::PredatorPrey);
        let mut env = crate::env::ParticleEnv::new(spec.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let joint = env.reset(&mut rng);
            let positions = env.state().positions();
            let p = mask_by_distance(&joint, spec.joint_layout(), &positions, 2.0 * 2f64.sqrt(), &mut rng);
            assert!(p.mask.iter().all(|&m| m == 1.0));
        }
    }

    #[test]
    fn components_follow_chains() {
        let g = VisibilityGraph::from_positions(&[[0.0, 0.0], [0.9, 0.0], [1.8, 0.0], [-5.0, 0.0]], 1.0);
        assert_eq!(g.components(), vec![vec![0, 1, 2], vec![3]]);
        assert!(!g.sees(0, 2));
    }
}
