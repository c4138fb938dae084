use ndarray::Array2;
use rand::Rng;

/// One environment transition over the joint observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Joint observation the agents acted on (inferred where masked).
    pub obs: Vec<f64>,
    /// All agents' actions, two components each.
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// Element mask of `obs`; zeros mark inferred entries.
    pub mask: Vec<f64>,
    pub next_mask: Vec<f64>,
}

impl Transition {
    pub fn is_valid(&self) -> bool {
        self.actions.iter().all(|a| (-1.0..=1.0).contains(a))
            && self
                .obs
                .iter()
                .chain(&self.next_obs)
                .chain(&self.rewards)
                .all(|x| x.is_finite())
    }
}

/// Row-stacked sample of transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_obs: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    pub fn from_transitions(items: &[&Transition]) -> Self {
        let stack = |f: &dyn Fn(&Transition) -> &[f64]| {
            let width = items.first().map_or(0, |t| f(t).len());
            let mut out = Array2::zeros((items.len(), width));
            for (mut row, t) in out.outer_iter_mut().zip(items) {
                row.assign(&ndarray::aview1(f(t)));
            }
            out
        };
        Self {
            obs: stack(&|t| &t.obs),
            actions: stack(&|t| &t.actions),
            rewards: stack(&|t| &t.rewards),
            next_obs: stack(&|t| &t.next_obs),
        }
    }
}

/// Ring buffer of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct RlReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl RlReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            data: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.is_valid(), "invalid transition");
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Batch {
        assert!(!self.data.is_empty(), "sampling an empty buffer");
        let picks: Vec<&Transition> = (0..batch)
            .map(|_| &self.data[rng.random_range(0..self.data.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}
