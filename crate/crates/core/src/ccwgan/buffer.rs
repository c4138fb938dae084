use rand::Rng;

/// Ring buffer of flattened joint observations with uniform sampling.
#[derive(Debug, Clone, Default)]
pub struct ObsReplayBuffer {
    data: Vec<Vec<f64>>,
    capacity: usize,
    cursor: usize,
}

impl ObsReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            data: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn push(&mut self, obs: Vec<f64>) {
        if self.data.len() < self.capacity {
            self.data.push(obs);
        } else {
            self.data[self.cursor] = obs;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        &self.data[rng.random_range(0..self.data.len())]
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.data[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_at_capacity() {
        let mut b = ObsReplayBuffer::new(3);
        for i in 0..5 {
            b.push(vec![i as f64]);
        }
        assert_eq!(b.len(), 3);
        let mut contents: Vec<f64> = (0..3).map(|i| b.get(i)[0]).collect();
        contents.sort_by(f64::total_cmp);
        assert_eq!(contents, vec![2.0, 3.0, 4.0]);
    }
}
