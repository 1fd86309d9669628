//! Prioritized experience replay: a sum tree over priorities with
//! proportional sampling and importance-sampling weights.
//!
//! Priorities are stored already raised to the exponent `alpha`, so a leaf's
//! share of the root total is exactly its sampling probability. Slots are
//! reused FIFO once the buffer is full; every insertion gets a fresh id so
//! late priority write-backs to an evicted slot are detected and dropped.

use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::env::Obs;
use crate::error::{Error, Result};

/// Transition tuple; rewards keep the environment's small alphabet.
#[derive(Clone, Debug)]
pub struct Experience {
    pub state: Obs,
    pub action: u8,
    pub reward: f32,
    pub next_state: Obs,
    pub done: bool,
}

/// Binary indexed sum tree over `capacity` leaves.
#[derive(Clone, Debug)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity - 1],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn leaf(&self, slot: usize) -> f64 {
        self.nodes[slot + self.capacity - 1]
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        let mut i = slot + self.capacity - 1;
        let delta = value - self.nodes[i];
        self.nodes[i] = value;
        while i != 0 {
            i = (i - 1) / 2;
            self.nodes[i] += delta;
        }
    }

    /// Leaf whose cumulative-priority interval contains `target`.
    pub fn find(&self, mut target: f64) -> usize {
        let mut i = 0usize;
        while 2 * i + 1 < self.nodes.len() {
            let left = 2 * i + 1;
            let right = left + 1;
            if target <= self.nodes[left] || self.nodes[right] <= 0.0 {
                i = left;
            } else {
                target -= self.nodes[left];
                i = right;
            }
        }
        i - (self.capacity - 1)
    }
}

/// Reference to a sampled slot; the id pins the insertion so stale
/// write-backs after eviction are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleRef {
    pub slot: u32,
    pub id: u64,
}

pub struct SampledBatch {
    pub refs: Vec<SampleRef>,
    /// Importance-sampling weights, normalized by the batch maximum.
    pub weights: Vec<f32>,
}

pub struct PrioritizedBuffer {
    capacity: usize,
    alpha: f64,
    priority_floor: f64,
    items: Vec<Experience>,
    ids: Vec<u64>,
    tree: SumTree,
    write: usize,
    next_id: u64,
    max_raw_priority: f64,
    stale_updates: u64,
    rng: ChaCha12Rng,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64, priority_floor: f64, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!(
                "per alpha must be non-negative, got {alpha}"
            )));
        }
        if !(priority_floor > 0.0) {
            return Err(Error::Config(format!(
                "per priority floor must be positive, got {priority_floor}"
            )));
        }
        Ok(Self {
            capacity,
            alpha,
            priority_floor,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            ids: Vec::with_capacity(capacity.min(1 << 20)),
            tree: SumTree::new(capacity),
            write: 0,
            next_id: 0,
            max_raw_priority: 1.0,
            stale_updates: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
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

    pub fn stale_updates(&self) -> u64 {
        self.stale_updates
    }

    pub fn get(&self, slot: u32) -> &Experience {
        &self.items[slot as usize]
    }

    /// Raw (pre-exponent) priorities per occupied slot, for linear-scan
    /// cross-checks.
    pub fn raw_priorities(&self) -> Vec<f64> {
        (0..self.items.len())
            .map(|i| self.tree.leaf(i).powf(1.0 / self.alpha.max(1e-12)))
            .collect()
    }

    pub fn tree_total(&self) -> f64 {
        self.tree.total()
    }

    pub fn linear_scan_total(&self) -> f64 {
        (0..self.items.len()).map(|i| self.tree.leaf(i)).sum()
    }

    /// Inserts at the running maximum priority so fresh transitions are
    /// sampled soon; evicts FIFO once full.
    pub fn push(&mut self, exp: Experience) {
        let slot = if self.items.len() < self.capacity {
            self.items.push(exp);
            self.ids.push(self.next_id);
            self.items.len() - 1
        } else {
            let s = self.write;
            self.items[s] = exp;
            self.ids[s] = self.next_id;
            s
        };
        self.write = (slot + 1) % self.capacity;
        self.next_id += 1;
        self.tree.set(slot, self.max_raw_priority.powf(self.alpha));
    }

    /// Proportional sampling of `n` transitions (with replacement) plus
    /// max-normalized importance weights at exponent `beta`.
    pub fn sample(&mut self, n: usize, beta: f64) -> Result<SampledBatch> {
        if self.items.len() < n {
            return Err(Error::Usage(format!(
                "cannot sample {n} transitions from a buffer holding {}",
                self.items.len()
            )));
        }
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::Numerical(format!(
                "sum tree total is not positive: {total}"
            )));
        }
        let count = self.items.len() as f64;
        let mut refs = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut w_max = 0.0f64;
        for _ in 0..n {
            let target: f64 = self.rng.gen_range(0.0..total);
            let slot = self.tree.find(target);
            let p = self.tree.leaf(slot) / total;
            let w = (count * p).powf(-beta);
            w_max = w_max.max(w);
            refs.push(SampleRef {
                slot: slot as u32,
                id: self.ids[slot],
            });
            weights.push(w);
        }
        let weights = weights.into_iter().map(|w| (w / w_max) as f32).collect();
        Ok(SampledBatch { refs, weights })
    }

    /// Writes back |TD error| + floor as the new raw priority of each
    /// sampled slot. Slots overwritten since sampling are skipped.
    pub fn update_priorities(&mut self, refs: &[SampleRef], td_errors: &[f32]) {
        debug_assert_eq!(refs.len(), td_errors.len());
        for (r, &td) in refs.iter().zip(td_errors.iter()) {
            let slot = r.slot as usize;
            if slot >= self.ids.len() || self.ids[slot] != r.id {
                self.stale_updates += 1;
                continue;
            }
            let raw = td.abs() as f64 + self.priority_floor;
            self.max_raw_priority = self.max_raw_priority.max(raw);
            self.tree.set(slot, raw.powf(self.alpha));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use std::sync::Arc;

    fn dummy_exp(tag: u8) -> Experience {
        Experience {
            state: Arc::new(vec![tag; 4]),
            action: 0,
            reward: 0.0,
            next_state: Arc::new(vec![tag; 4]),
            done: false,
        }
    }

    fn buffer_with_raw_priorities(prios: &[f64], alpha: f64, seed: u64) -> PrioritizedBuffer {
        let mut buf = PrioritizedBuffer::new(64, alpha, 1e-6, seed).unwrap();
        for (i, &p) in prios.iter().enumerate() {
            buf.push(dummy_exp(i as u8));
            // install the exact raw priority
            buf.tree.set(i, p.powf(alpha));
        }
        buf
    }

    fn empirical_frequencies(buf: &mut PrioritizedBuffer, n_items: usize, draws: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n_items];
        for _ in 0..draws {
            let batch = buf.sample(1, 1.0).unwrap();
            counts[batch.refs[0].slot as usize] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn uniform_priorities_sample_uniformly() {
        let mut buf = buffer_with_raw_priorities(&[1.0; 5], 0.6, 11);
        let freqs = empirical_frequencies(&mut buf, 5, 100_000);
        for f in freqs {
            assert!((f - 0.2).abs() / 0.2 < 0.02, "frequency {f} vs 0.2");
        }
    }

    #[test]
    fn alpha_one_probabilities_are_proportional() {
        let mut buf = buffer_with_raw_priorities(&[1.0, 1.0, 2.0], 1.0, 12);
        let freqs = empirical_frequencies(&mut buf, 3, 100_000);
        let expected = [0.25, 0.25, 0.5];
        for (f, e) in freqs.iter().zip(expected) {
            assert!((f - e).abs() / e < 0.02, "frequency {f} vs {e}");
        }
    }

    #[test]
    fn alpha_point_six_matches_direct_normalization() {
        let prios = [1.0, 2.0, 4.0];
        let expected = oracle::per_probabilities(&prios, 0.6);
        let mut buf = buffer_with_raw_priorities(&prios, 0.6, 13);
        let freqs = empirical_frequencies(&mut buf, 3, 100_000);
        for (f, e) in freqs.iter().zip(expected.iter()) {
            assert!((f - e).abs() / e < 0.02, "frequency {f} vs direct {e}");
        }
    }

    #[test]
    fn importance_weights_follow_the_beta_law() {
        let mut buf = buffer_with_raw_priorities(&[1.0, 3.0], 1.0, 14);
        let batch = buf.sample(2, 0.5).unwrap();
        let total = buf.tree_total();
        let n = buf.len() as f64;
        let mut expected: Vec<f64> = batch
            .refs
            .iter()
            .map(|r| (n * buf.tree.leaf(r.slot as usize) / total).powf(-0.5))
            .collect();
        let w_max = expected.iter().cloned().fold(f64::MIN, f64::max);
        for e in expected.iter_mut() {
            *e /= w_max;
        }
        for (w, e) in batch.weights.iter().zip(expected.iter()) {
            assert!((*w as f64 - e).abs() < 1e-6);
        }
        assert!(batch.weights.iter().cloned().fold(0.0f32, f32::max) == 1.0);
    }

    #[test]
    fn zero_td_error_keeps_priorities_strictly_positive() {
        let mut buf = PrioritizedBuffer::new(8, 0.6, 1e-6, 15).unwrap();
        buf.push(dummy_exp(0));
        let batch = buf.sample(1, 1.0).unwrap();
        buf.update_priorities(&batch.refs, &[0.0]);
        let raw = buf.raw_priorities();
        assert!((raw[0] - 1e-6).abs() < 1e-12, "td=0 priority is the floor");
        assert!(buf.tree_total() > 0.0);
    }

    #[test]
    fn stale_indices_are_ignored_with_a_counter() {
        let mut buf = PrioritizedBuffer::new(2, 0.6, 1e-6, 16).unwrap();
        buf.push(dummy_exp(0));
        buf.push(dummy_exp(1));
        let batch = buf.sample(1, 1.0).unwrap();
        // Evict everything (FIFO wraps around the two slots).
        buf.push(dummy_exp(2));
        buf.push(dummy_exp(3));
        let before = buf.raw_priorities();
        buf.update_priorities(&batch.refs, &[5.0]);
        assert_eq!(buf.stale_updates(), 1);
        assert_eq!(buf.raw_priorities(), before);
    }

    #[test]
    fn sampling_more_than_stored_is_a_usage_error() {
        let mut buf = PrioritizedBuffer::new(8, 0.6, 1e-6, 17).unwrap();
        buf.push(dummy_exp(0));
        assert!(matches!(buf.sample(2, 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn fifo_eviction_caps_the_stored_count() {
        let mut buf = PrioritizedBuffer::new(4, 0.6, 1e-6, 18).unwrap();
        for i in 0..10 {
            buf.push(dummy_exp(i));
        }
        assert_eq!(buf.len(), 4);
        // Oldest slots hold the newest items after wrap-around.
        assert_eq!(buf.get(0).state[0], 8);
        assert_eq!(buf.get(1).state[0], 9);
        assert_eq!(buf.get(2).state[0], 6);
        assert_eq!(buf.get(3).state[0], 7);
    }

    #[test]
    fn tree_total_matches_linear_scan_after_many_updates() {
        let mut buf = PrioritizedBuffer::new(256, 0.6, 1e-6, 19).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        for i in 0..256 {
            buf.push(dummy_exp(i as u8));
        }
        for _ in 0..10_000 {
            let batch = buf.sample(4, 0.7).unwrap();
            let tds: Vec<f32> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            buf.update_priorities(&batch.refs, &tds);
        }
        let gap = (buf.tree_total() - buf.linear_scan_total()).abs();
        assert!(gap < 1e-6, "tree total drifted by {gap}");
    }
}
