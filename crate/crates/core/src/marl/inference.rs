//! Pooling partial observations within communication components and filling
//! the rest with the CC-WGAN.
//!
//! Agents within range share everything they have, so a connected component
//! of the visibility graph collectively knows every member's observation and
//! every entry about a member. What is left missing is each out-of-component
//! agent's slice and every reference to it; that is exactly the random-masking
//! rule the generator was trained on.

use rand::Rng;

use crate::ccwgan::GanNets;
use crate::env::visibility::fill_masked;
use crate::env::{JointLayout, VisibilityGraph};

/// One component's pooled view.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentView {
    pub members: Vec<usize>,
    pub mask: Vec<f64>,
    pub inferred: Vec<f64>,
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredJoint {
    pub components: Vec<ComponentView>,
    /// Component index of each agent.
    pub component_of: Vec<usize>,
}

impl InferredJoint {
    /// Agent `i`'s inferred joint observation (shared within its component).
    pub fn view_of(&self, agent: usize) -> &ComponentView {
        &self.components[self.component_of[agent]]
    }

    /// Agent `i`'s own slice of its inferred joint observation.
    pub fn own_observation<'a>(&'a self, layout: &JointLayout, agent: usize) -> &'a [f64] {
        &self.view_of(agent).inferred[layout.agent_range(agent)]
    }

    /// Joint vector assembled from each agent's own inferred slice, with the
    /// matching mask.
    pub fn assembled(&self, layout: &JointLayout) -> (Vec<f64>, Vec<f64>) {
        let mut obs = vec![0.0; layout.total_len()];
        let mut mask = vec![0.0; layout.total_len()];
        for agent in 0..layout.n_agents() {
            let r = layout.agent_range(agent);
            let view = self.view_of(agent);
            obs[r.clone()].copy_from_slice(&view.inferred[r.clone()]);
            mask[r.clone()].copy_from_slice(&view.mask[r]);
        }
        (obs, mask)
    }

    pub fn generator_calls(&self) -> usize {
        self.components.iter().filter(|c| c.generated).count()
    }
}

/// Pools observations per visibility component and runs one inference per
/// component. `full` is the joint observation the agents would see with no
/// range limit; only its entries visible to a component are read.
pub fn infer_joint_observation<R: Rng + ?Sized>(
    gan: &GanNets,
    layout: &JointLayout,
    full: &[f64],
    graph: &VisibilityGraph,
    rng: &mut R,
) -> InferredJoint {
    assert_eq!(full.len(), layout.total_len());
    let n = layout.n_agents();
    let mut component_of = vec![0; n];
    let components = graph
        .components()
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut missing = vec![true; n];
            for &i in &members {
                missing[i] = false;
                component_of[i] = c;
            }
            let mask = layout.mask_for_missing(&missing);
            let partial = fill_masked(full, &mask, rng);
            let (inferred, generated) = gan.infer(&partial, &mask);
            ComponentView {
                members,
                mask,
                inferred,
                generated,
            }
        })
        .collect();
    InferredJoint {
        components,
        component_of,
    }
}
