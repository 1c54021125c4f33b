//! Proportional prioritized replay backed by a sum tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::EncodedObservation;

/// Binary tree over `capacity` leaves (a power of two) where every internal
/// node holds the sum of its children. Node 1 is the root; leaf `k` lives at
/// `capacity + k`.
#[derive(Clone, Debug)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "sum tree capacity must be a power of two, got {capacity}"
            )));
        }
        Ok(Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    /// Sets a leaf and recomputes its ancestors from their children, so the
    /// sums never accumulate incremental rounding drift.
    pub fn set(&mut self, leaf: usize, value: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} out of range");
        assert!(value >= 0.0 && value.is_finite(), "invalid priority {value}");
        let mut node = self.capacity + leaf;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for `0 <= mass < total`.
    /// Never returns a zero-valued leaf while the tree is nonempty.
    pub fn find(&self, mass: f64) -> usize {
        let mut node = 1;
        let mut mass = mass.max(0.0);
        while node < self.capacity {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            if (mass < left || right == 0.0) && left > 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.capacity
    }

    /// Largest discrepancy between an internal node and its children.
    pub fn max_violation(&self) -> f64 {
        (1..self.capacity)
            .map(|n| (self.nodes[n] - self.nodes[2 * n] - self.nodes[2 * n + 1]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayTransition {
    pub obs: EncodedObservation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: EncodedObservation,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// Importance-sampling weights normalized by the batch maximum.
    pub weights: Vec<f64>,
}

/// Fixed-capacity FIFO buffer sampled in proportion to `priority^alpha`.
#[derive(Clone, Debug)]
pub struct PrioritizedReplay<T> {
    tree: SumTree,
    items: Vec<T>,
    capacity: usize,
    next: usize,
    alpha: f64,
    max_priority: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self {
            tree: SumTree::new(capacity.next_power_of_two())?,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
            alpha,
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn get(&self, index: usize) -> &T {
        &self.items[index]
    }

    /// Stores an item at the largest priority seen so far, overwriting the
    /// oldest entry once full. Returns the slot used.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    /// Sets the raw priority (before the alpha exponent) of a slot.
    pub fn update_priority(&mut self, index: usize, priority: f64) -> Result<()> {
        if !(priority > 0.0 && priority.is_finite()) {
            return Err(Error::InvalidParameter(format!("priority must be positive, got {priority}")));
        }
        if index >= self.items.len() {
            return Err(Error::InvalidParameter(format!("slot {index} is empty")));
        }
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(index, priority.powf(self.alpha));
        Ok(())
    }

    /// Sampling probability of a slot.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree.get(index) / self.tree.total()
    }

    /// Stratified proportional sampling: the total mass is cut into
    /// `batch_size` equal segments and one slot is drawn from each.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, beta: f64, rng: &mut R) -> Result<Batch> {
        if batch_size == 0 || self.items.len() < batch_size {
            return Err(Error::ReplayUnderfilled {
                len: self.items.len(),
                requested: batch_size,
            });
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let u: f64 = rng.gen();
            let mass = ((k as f64 + u) * segment).min(total);
            let index = self.tree.find(mass).min(self.items.len() - 1);
            indices.push(index);
            weights.push((n * self.probability(index)).powf(-beta));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max;
        }
        Ok(Batch { indices, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frequencies(priorities: &[f64], alpha: f64, draws: usize, batch: usize) -> Vec<f64> {
        let mut replay = PrioritizedReplay::new(priorities.len(), alpha).unwrap();
        for (k, &p) in priorities.iter().enumerate() {
            replay.push(k);
            replay.update_priority(k, p).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = vec![0usize; priorities.len()];
        for _ in 0..draws / batch {
            for i in replay.sample(batch, 0.4, &mut rng).unwrap().indices {
                counts[i] += 1;
            }
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn two_priority_frequencies() {
        let f = frequencies(&[1.0, 3.0], 1.0, 100_000, 2);
        assert!((f[0] - 0.25).abs() < 0.02 && (f[1] - 0.75).abs() < 0.02, "{f:?}");
    }

    #[test]
    fn three_priority_frequencies() {
        let f = frequencies(&[1.0, 3.0, 6.0], 1.0, 100_000, 1);
        for (got, want) in f.iter().zip([0.1, 0.3, 0.6]) {
            assert!((got - want).abs() < 0.02, "{f:?}");
        }
    }

    #[test]
    fn zero_alpha_is_uniform() {
        let f = frequencies(&[1.0, 3.0, 6.0, 100.0], 0.0, 100_000, 4);
        for got in f {
            assert!((got - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut replay = PrioritizedReplay::new(16, 0.6).unwrap();
        for k in 0..16 {
            replay.push(k);
        }
        let batch = replay.sample(8, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(batch.weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn weights_follow_importance_formula() {
        let mut replay = PrioritizedReplay::new(2, 1.0).unwrap();
        replay.push(0);
        replay.push(1);
        replay.update_priority(0, 1.0).unwrap();
        replay.update_priority(1, 3.0).unwrap();
        let beta = 0.5;
        let w = |p: f64| (2.0 * p).powf(-beta);
        let (w0, w1) = (w(0.25), w(0.75));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let batch = replay.sample(2, beta, &mut rng).unwrap();
            let max = batch
                .indices
                .iter()
                .map(|&i| if i == 0 { w0 } else { w1 })
                .fold(0.0, f64::max);
            for (&i, &got) in batch.indices.iter().zip(&batch.weights) {
                let want = if i == 0 { w0 } else { w1 } / max;
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn underfilled_buffer_errors() {
        let mut replay = PrioritizedReplay::new(8, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(replay.sample(1, 0.4, &mut rng), Err(Error::ReplayUnderfilled { len: 0, .. })));
        replay.push(1);
        assert!(replay.sample(2, 0.4, &mut rng).is_err());
        assert!(replay.sample(1, 0.4, &mut rng).is_ok());
    }

    #[test]
    fn fifo_overwrite_and_capacity() {
        let mut replay = PrioritizedReplay::new(3, 0.6).unwrap();
        let slots: Vec<usize> = (0..7).map(|k| replay.push(k)).collect();
        assert_eq!(slots, vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(replay.len(), 3);
        assert_eq!((*replay.get(0), *replay.get(1), *replay.get(2)), (6, 4, 5));
    }

    #[test]
    fn new_items_get_max_priority() {
        let mut replay = PrioritizedReplay::new(4, 1.0).unwrap();
        replay.push(0);
        replay.update_priority(0, 9.0).unwrap();
        replay.push(1);
        assert_eq!(replay.tree().get(1), 9.0);
        assert!(replay.update_priority(1, 0.0).is_err());
        assert!(replay.update_priority(3, 1.0).is_err());
    }

    #[test]
    fn root_matches_leaf_sum_after_many_updates() {
        let mut tree = SumTree::new(1024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let leaf = rng.gen_range(0..1024);
            tree.set(leaf, rng.gen_range(0.0..100.0));
        }
        let leaves: f64 = (0..1024).map(|k| tree.get(k)).sum();
        assert!((tree.total() - leaves).abs() < 1e-9);
        assert!(tree.max_violation() < 1e-9);
    }

    #[test]
    fn non_power_of_two_tree_is_rejected() {
        assert!(SumTree::new(12).is_err());
        assert!(SumTree::new(0).is_err());
    }

    proptest! {
        #[test]
        fn find_lands_on_positive_leaf(
            values in proptest::collection::vec(0.0f64..5.0, 1..64),
            u in 0.0f64..1.0,
        ) {
            let cap = values.len().next_power_of_two();
            let mut tree = SumTree::new(cap).unwrap();
            for (k, &v) in values.iter().enumerate() {
                tree.set(k, v);
            }
            prop_assume!(tree.total() > 0.0);
            let leaf = tree.find(u * tree.total());
            prop_assert!(leaf < values.len());
            prop_assert!(tree.get(leaf) > 0.0);
        }

        #[test]
        fn root_tracks_interleaved_updates(ops in proptest::collection::vec((0usize..32, 0.0f64..10.0), 1..200)) {
            let mut tree = SumTree::new(32).unwrap();
            for (leaf, v) in ops {
                tree.set(leaf, v);
            }
            let leaves: f64 = (0..32).map(|k| tree.get(k)).sum();
            prop_assert!((tree.total() - leaves).abs() < 1e-9);
        }

        #[test]
        fn priorities_stay_positive(tds in proptest::collection::vec(-5.0f64..5.0, 1..50)) {
            let mut replay = PrioritizedReplay::new(8, 0.6).unwrap();
            for (k, td) in tds.iter().enumerate() {
                let slot = replay.push(k);
                replay.update_priority(slot, td.abs() + 1e-3).unwrap();
            }
            for k in 0..replay.len() {
                prop_assert!(replay.tree().get(k) > 0.0);
            }
        }
    }
}
