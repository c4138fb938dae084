//! Observation layouts and the element-level masks derived from them.
//!
//! Every per-agent observation is an ordered list of labeled fields. A field
//! may refer to another agent (its relative position, its velocity); those
//! are the entries that disappear when that agent is out of range. The
//! [`JointLayout`] flattens the per-agent layouts into one joint vector and
//! answers "which elements go missing if this set of agents is missing".

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// One contiguous labeled slice of an agent's observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsField {
    pub name: String,
    pub len: usize,
    /// Index of the agent this field describes, if it describes another agent.
    pub about: Option<usize>,
}

impl ObsField {
    pub fn own(name: &str, len: usize) -> Self {
        Self {
            name: name.to_string(),
            len,
            about: None,
        }
    }

    pub fn about(name: &str, len: usize, agent: usize) -> Self {
        Self {
            name: format!("{name}[{agent}]"),
            len,
            about: Some(agent),
        }
    }
}

/// Ordered field list for one agent's observation vector.
pub type ObsLayout = Vec<ObsField>;

#[derive(Debug, Clone, PartialEq)]
struct FlatField {
    range: Range<usize>,
    owner: usize,
    about: Option<usize>,
}

/// Flattened view over all agents' layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLayout {
    agent_ranges: Vec<Range<usize>>,
    fields: Vec<FlatField>,
    total: usize,
}

impl JointLayout {
    pub fn new(layouts: &[ObsLayout]) -> Self {
        let mut agent_ranges = Vec::with_capacity(layouts.len());
        let mut fields = Vec::new();
        let mut offset = 0;
        for (owner, layout) in layouts.iter().enumerate() {
            let start = offset;
            for field in layout {
                fields.push(FlatField {
                    range: offset..offset + field.len,
                    owner,
                    about: field.about,
                });
                offset += field.len;
            }
            agent_ranges.push(start..offset);
        }
        Self {
            agent_ranges,
            fields,
            total: offset,
        }
    }

    /// A layout of `n_agents` opaque slices of `dim` elements each, with no
    /// cross-agent fields. Useful for synthetic data.
    pub fn uniform(n_agents: usize, dim: usize) -> Self {
        let layouts: Vec<ObsLayout> = (0..n_agents).map(|_| vec![ObsField::own("state", dim)]).collect();
        Self::new(&layouts)
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ranges.len()
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn agent_range(&self, agent: usize) -> Range<usize> {
        self.agent_ranges[agent].clone()
    }

    pub fn agent_len(&self, agent: usize) -> usize {
        self.agent_ranges[agent].len()
    }

    /// Element mask (1 visible, 0 missing) for agent `owner`'s own vector, given
    /// which other agents it can see.
    pub fn fill_mask<F>(&self, mask: &mut [f64], visible: F)
    where
        F: Fn(usize, Option<usize>) -> bool,
    {
        assert_eq!(mask.len(), self.total, "mask length mismatch");
        for field in &self.fields {
            let value = if visible(field.owner, field.about) { 1.0 } else { 0.0 };
            mask[field.range.clone()].fill(value);
        }
    }

    /// Joint mask when the agents flagged in `missing` are absent: their whole
    /// slice is dropped, and so is every field in a present agent's slice that
    /// refers to one of them.
    pub fn mask_for_missing(&self, missing: &[bool]) -> Vec<f64> {
        assert_eq!(missing.len(), self.n_agents());
        let mut mask = vec![0.0; self.total];
        self.fill_mask(&mut mask, |owner, about| {
            !missing[owner] && about.is_none_or(|j| !missing[j])
        });
        mask
    }

    /// Joint mask under pairwise visibility: agent i's field about j is kept
    /// iff `visible(i, j)`. Own and landmark fields are always kept.
    pub fn mask_for_pairs<F>(&self, visible: F) -> Vec<f64>
    where
        F: Fn(usize, usize) -> bool,
    {
        let mut mask = vec![0.0; self.total];
        self.fill_mask(&mut mask, |owner, about| about.is_none_or(|j| visible(owner, j)));
        mask
    }

    /// Flat element indices of every field that refers to `agent` (in any slice).
    pub fn elements_about(&self, agent: usize) -> Vec<usize> {
        self.fields
            .iter()
            .filter(|f| f.about == Some(agent))
            .flat_map(|f| f.range.clone())
            .collect()
    }
}
