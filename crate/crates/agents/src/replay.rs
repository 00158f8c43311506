//! Proportional prioritized experience replay over a sum tree.

use serde::{Deserialize, Serialize};
use tsc_nn::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f32>,
    pub terminal: bool,
    /// Unsafe-action flags cached at collection time, one per action.
    pub safety_flags: Option<Vec<f32>>,
    /// Flags for the successor state, for the embedding-augmented nets.
    pub next_safety_flags: Option<Vec<f32>>,
}

/// Binary-indexed sum tree over leaf masses; supports prefix search.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, idx: usize) -> f64 {
        self.nodes[self.leaves + idx]
    }

    fn set(&mut self, idx: usize, mass: f64) {
        let mut node = self.leaves + idx;
        self.nodes[node] = mass;
        node /= 2;
        while node >= 1 {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            if node == 1 {
                break;
            }
            node /= 2;
        }
    }

    /// Leaf whose cumulative interval contains `u` in `[0, total)`.
    fn find(&self, mut u: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if u < left {
                node = 2 * node;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }

    /// Fresh sum over the leaves; oracle for the cached totals.
    fn recompute_total(&self) -> f64 {
        self.nodes[self.leaves..].iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Ring buffer with proportional priority sampling: P(i) is priority_i^alpha
/// over the total. New transitions enter at the running max priority.
#[derive(Clone, Debug)]
pub struct PrioritizedReplayBuffer {
    capacity: usize,
    alpha: f64,
    eps_priority: f64,
    data: Vec<Transition>,
    next_slot: usize,
    tree: SumTree,
    max_priority: f64,
}

impl PrioritizedReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, eps_priority: f64) -> Self {
        assert!(capacity > 0);
        PrioritizedReplayBuffer {
            capacity,
            alpha,
            eps_priority,
            data: Vec::with_capacity(capacity),
            next_slot: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        }
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

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Inserts at max priority; the oldest entry is evicted once full.
    pub fn push(&mut self, t: Transition) {
        let mass = self.max_priority.powf(self.alpha);
        if self.data.len() < self.capacity {
            self.data.push(t);
            self.tree.set(self.data.len() - 1, mass);
        } else {
            self.data[self.next_slot] = t;
            self.tree.set(self.next_slot, mass);
            self.next_slot = (self.next_slot + 1) % self.capacity;
        }
    }

    /// Stratified proportional sample with importance weights
    /// `(N * P(i))^-beta`, normalized by the batch maximum.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut SeededRng) -> SampledBatch {
        assert!(self.data.len() >= batch && batch > 0);
        let total = self.tree.total();
        let n = self.data.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let u = (k as f64 + rng.next_f64()) * total / batch as f64;
            let mut idx = self.tree.find(u.min(total * (1.0 - 1e-12)));
            if idx >= self.data.len() {
                idx = self.data.len() - 1;
            }
            let p = self.tree.get(idx) / total;
            indices.push(idx);
            weights.push((n * p).powf(-beta));
        }
        let wmax = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= wmax;
        }
        SampledBatch { indices, weights }
    }

    /// Sets priorities to `|td_error| + eps_priority`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&idx, &td) in indices.iter().zip(td_errors) {
            let priority = td.abs() + self.eps_priority;
            self.max_priority = self.max_priority.max(priority);
            self.tree.set(idx, priority.powf(self.alpha));
        }
    }

    /// Probability mass currently assigned to item `idx`.
    pub fn probability(&self, idx: usize) -> f64 {
        self.tree.get(idx) / self.tree.total()
    }

    /// Drift between the cached tree total and a fresh leaf sum.
    pub fn tree_total_drift(&self) -> f64 {
        (self.tree.total() - self.tree.recompute_total()).abs()
    }

    /// Overwrites priorities directly (tests and the sampling oracle).
    pub fn set_raw_priority(&mut self, idx: usize, priority: f64) {
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(idx, priority.powf(self.alpha));
    }
}
