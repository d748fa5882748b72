use rand::Rng;

/// One stored interaction. Observations are raw (unnormalized); `done` is
/// false for time-limit truncations so the target still bootstraps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplayItem>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0, inserted: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total insertions, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, item: ReplayItem) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayItem> {
        self.items.iter()
    }

    /// Uniform sample with replacement from occupied slots.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a ReplayItem> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item(i: usize) -> ReplayItem {
        ReplayItem { obs: vec![i as f64], action: 0, reward: i as f64, next_obs: vec![0.0], done: false }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(5);
        for i in 0..8 {
            b.push(item(i));
        }
        assert_eq!(b.len(), 5);
        assert_eq!(b.inserted(), 8);
        let mut rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn samples_only_occupied_slots() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..3 {
            b.push(item(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(500, &mut rng).iter().all(|t| t.reward < 3.0));
    }
}
