//! Best-first branch and bound over a binary tree of boxes.
//!
//! Open leaves wait in a priority queue keyed by their gap (how far their
//! bound is from closing them), widest gap first, ties broken by node id.
//! Leaves are split in batches and the children are assessed in parallel.
//! Each child's sampler is seeded from its id, and within a batch the
//! witness with the lexicographically smallest id wins, so the outcome does
//! not depend on thread scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Budget;

const BATCH: usize = 16;

/// Path from the root: one 0/1 entry per split.
pub(crate) type NodeId = Vec<u8>;

pub(crate) enum Assessment<W> {
    /// No point of the box can produce a witness.
    Closed,
    Found(W),
    Open { gap: f64 },
}

pub(crate) trait Problem: Sync {
    type Node: Send + Sync;
    type Witness: Send;

    fn assess(&self, node: &Self::Node, rng: &mut ChaCha8Rng) -> Assessment<Self::Witness>;

    /// Halves the node along one dimension, or `None` if it is a point.
    fn split(&self, node: &Self::Node) -> Option<(Self::Node, Self::Node)>;
}

pub(crate) enum Outcome<W> {
    Exhausted,
    Found(W),
    Unknown { splits_used: usize, bound_gap: f64 },
}

struct Entry<N> {
    gap: f64,
    id: NodeId,
    node: N,
}

impl<N> PartialEq for Entry<N> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<N> Eq for Entry<N> {}

impl<N> PartialOrd for Entry<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<N> Ord for Entry<N> {
    // max-heap: larger gap first, then smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        self.gap.total_cmp(&other.gap).then_with(|| other.id.cmp(&self.id))
    }
}

fn node_rng(seed: u64, id: &[u8]) -> ChaCha8Rng {
    // splitmix64 over the path
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &bit in id.iter().chain(std::iter::once(&2)) {
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15 ^ u64::from(bit));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub(crate) fn search<P: Problem>(problem: &P, root: P::Node, budget: Budget, seed: u64) -> Outcome<P::Witness> {
    let started = Instant::now();
    let mut heap = BinaryHeap::new();
    match problem.assess(&root, &mut node_rng(seed, &[])) {
        Assessment::Closed => return Outcome::Exhausted,
        Assessment::Found(w) => return Outcome::Found(w),
        Assessment::Open { gap } => heap.push(Entry {
            gap,
            id: Vec::new(),
            node: root,
        }),
    }

    let mut splits_used = 0;
    let mut stuck = Vec::new();
    loop {
        let out_of_budget = splits_used >= budget.max_splits || started.elapsed() >= budget.timeout;
        if heap.is_empty() || out_of_budget {
            break;
        }
        let mut children = Vec::with_capacity(2 * BATCH);
        while children.len() < 2 * BATCH && splits_used < budget.max_splits {
            let Some(entry) = heap.pop() else { break };
            match problem.split(&entry.node) {
                Some((a, b)) => {
                    splits_used += 1;
                    let mut left = entry.id.clone();
                    left.push(0);
                    let mut right = entry.id;
                    right.push(1);
                    children.push((left, a));
                    children.push((right, b));
                }
                // a point that is neither closed nor a witness cannot be refined
                None => stuck.push(entry.gap),
            }
        }
        let assessed: Vec<_> = children
            .into_par_iter()
            .map(|(id, node)| {
                let verdict = problem.assess(&node, &mut node_rng(seed, &id));
                (id, node, verdict)
            })
            .collect();
        let mut found: Option<(NodeId, P::Witness)> = None;
        for (id, node, verdict) in assessed {
            match verdict {
                Assessment::Closed => {}
                Assessment::Found(w) => {
                    if found.as_ref().map_or(true, |(best, _)| id < *best) {
                        found = Some((id, w));
                    }
                }
                Assessment::Open { gap } => heap.push(Entry { gap, id, node }),
            }
        }
        if let Some((_, w)) = found {
            return Outcome::Found(w);
        }
    }
    if heap.is_empty() && stuck.is_empty() {
        return Outcome::Exhausted;
    }
    let bound_gap = heap.iter().map(|e| e.gap).chain(stuck).fold(0.0, f64::max);
    Outcome::Unknown { splits_used, bound_gap }
}
