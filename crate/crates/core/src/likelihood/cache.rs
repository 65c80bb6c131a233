use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Default bound on stored partial-likelihood vectors (one vector holds the
/// four state values of a single site pattern and rate category).
pub const DEFAULT_CAPACITY: usize = 1 << 22;

/// Everything a node's partial likelihoods depend on: the digests of both
/// child subtrees and the matrices on the two child edges. Used as the map
/// key itself, so a lookup compares the full key, not only its digest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct NodeKey {
    pub(crate) left: u128,
    pub(crate) left_edge: u64,
    pub(crate) right: u128,
    pub(crate) right_edge: u64,
}

impl NodeKey {
    /// 128-bit digest identifying the subtree below the node.
    pub(crate) fn digest(&self) -> u128 {
        digest128(self)
    }
}

pub(crate) fn digest128(value: &impl Hash) -> u128 {
    let lane = |salt: u64| {
        let mut h = DefaultHasher::new();
        salt.hash(&mut h);
        value.hash(&mut h);
        h.finish()
    };
    ((lane(0x9e37_79b9_7f4a_7c15) as u128) << 64) | lane(0xc2b2_ae3d_27d4_eb4f) as u128
}

/// Partial likelihoods of one node for every (category, pattern), with the
/// number of 2^256 rescalings applied along the subtree.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Partial {
    pub(crate) values: Vec<[f64; 4]>,
    pub(crate) scales: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub wipes: u64,
    /// Vectors currently stored.
    pub entries: usize,
    pub peak_entries: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Memo of internal-node partial likelihoods keyed by subtree content.
///
/// Once more than `capacity` vectors are stored the map is wiped before the
/// next insertion. Counters survive wipes. Keys only make sense for one
/// likelihood engine and one family of transition sources, so a cache
/// should not be shared between chains.
#[derive(Debug)]
pub struct LikelihoodCache {
    map: HashMap<NodeKey, Arc<Partial>>,
    capacity: usize,
    stats: CacheStats,
}

impl Default for LikelihoodCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl LikelihoodCache {
    pub fn new(capacity: usize) -> Self {
        LikelihoodCache {
            map: HashMap::new(),
            capacity,
            stats: CacheStats::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Drops every stored entry; statistics are kept.
    pub fn wipe(&mut self) {
        if !self.map.is_empty() {
            self.map.clear();
            self.stats.entries = 0;
            self.stats.wipes += 1;
        }
    }

    pub(crate) fn get(&mut self, key: &NodeKey) -> Option<Arc<Partial>> {
        let found = self.map.get(key).cloned();
        if found.is_some() {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
        }
        found
    }

    pub(crate) fn insert(&mut self, key: NodeKey, partial: Arc<Partial>) {
        let size = partial.values.len();
        if self.stats.entries + size > self.capacity {
            self.wipe();
        }
        if size > self.capacity {
            return;
        }
        if self.map.insert(key, partial).is_none() {
            self.stats.entries += size;
            self.stats.peak_entries = self.stats.peak_entries.max(self.stats.entries);
        }
    }
}
