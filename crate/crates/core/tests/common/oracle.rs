//! Brute-force reference for prefix allocation.
//!
//! Victims must be taken in a fixed precedence (offline before streaming,
//! then popularity, then age), so every legal set of stripped victims is a
//! downward-closed subset of the candidates under that precedence. The
//! reference enumerates all candidate subsets, keeps the downward-closed
//! ones, and picks the smallest that reaches the requirement.

#![allow(dead_code)]

use vodsim::allocator::{
    AllocatorState, EvictionGuard, OutcomeKind, PrefixAllocation, PrefixState,
};
use vodsim::{BlockPool, Video, VideoId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Holder {
    pub popularity: u64,
    pub streaming: bool,
    pub blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub min_blocks: u64,
    pub free: u64,
    /// Listed oldest state change first.
    pub holders: Vec<Holder>,
    pub requester_popularity: u64,
    pub required: u64,
    pub guard: EvictionGuard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub kind: OutcomeKind,
    pub granted: u64,
    pub reclaimed: u64,
}

impl Instance {
    pub fn capacity(&self) -> u64 {
        self.free + self.holders.iter().map(|h| h.blocks).sum::<u64>()
    }
}

fn eligible(inst: &Instance, h: &Holder) -> bool {
    let guard_ok = match inst.guard {
        EvictionGuard::Strict => h.popularity < inst.requester_popularity,
        EvictionGuard::AllowTies => h.popularity <= inst.requester_popularity,
    };
    guard_ok && h.blocks > inst.min_blocks
}

/// `a` must be stripped before `b`.
fn precedes(a: (usize, &Holder), b: (usize, &Holder)) -> bool {
    (a.1.streaming, a.1.popularity, a.0) < (b.1.streaming, b.1.popularity, b.0)
}

pub fn oracle(inst: &Instance) -> Verdict {
    if inst.free >= inst.required {
        return Verdict {
            kind: OutcomeKind::Full,
            granted: inst.required,
            reclaimed: 0,
        };
    }
    let cands: Vec<(usize, &Holder)> = inst
        .holders
        .iter()
        .enumerate()
        .filter(|(_, h)| eligible(inst, h))
        .collect();
    let n = cands.len();
    let mut best: Option<(u32, u64)> = None;
    let mut all = 0;
    for mask in 0u32..(1 << n) {
        let closed = (0..n).all(|i| {
            mask & (1 << i) == 0
                || (0..n).all(|j| !precedes(cands[j], cands[i]) || mask & (1 << j) != 0)
        });
        if !closed {
            continue;
        }
        let reclaimed: u64 = (0..n)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| cands[i].1.blocks - inst.min_blocks)
            .sum();
        if mask == (1 << n) - 1 {
            all = reclaimed;
        }
        if inst.free + reclaimed >= inst.required {
            let size = mask.count_ones();
            if best.is_none_or(|(s, _)| size < s) {
                best = Some((size, reclaimed));
            }
        }
    }
    match best {
        Some((_, reclaimed)) => Verdict {
            kind: OutcomeKind::Full,
            granted: inst.required,
            reclaimed,
        },
        None if inst.free + all >= inst.min_blocks => Verdict {
            kind: OutcomeKind::Partial,
            granted: inst.free + all,
            reclaimed: all,
        },
        None => Verdict {
            kind: OutcomeKind::Rejected,
            granted: 0,
            reclaimed: 0,
        },
    }
}

/// Builds allocator state for an instance. Holder `i` gets video id
/// `k - 1 - i`, so id order runs against victim precedence; the requester is
/// video `k`.
pub fn materialize(inst: &Instance) -> (AllocatorState, BlockPool, Vec<Video>) {
    let capacity = inst.capacity().max(1);
    // prefix share of exactly capacity / (capacity + 1)
    let total = capacity + 1;
    let mut pool = BlockPool::new(total, capacity as f64 / total as f64).unwrap();
    assert_eq!(pool.capacity(vodsim::Region::Prefix), capacity);
    let mut state = AllocatorState::new(inst.min_blocks, inst.guard).unwrap();
    let k = inst.holders.len();
    let mut catalog: Vec<Video> = (0..=k)
        .map(|j| Video {
            id: VideoId(j as u32),
            size_blocks: 200,
            prefix_blocks: 100,
            bitrate: 0.5,
            hits: 0,
        })
        .collect();
    for (i, h) in inst.holders.iter().enumerate() {
        let id = (k - 1 - i) as u32;
        catalog[id as usize].hits = h.popularity;
        state
            .insert(
                &mut pool,
                PrefixAllocation {
                    video_id: VideoId(id),
                    blocks: h.blocks,
                    state: if h.streaming {
                        PrefixState::Streaming
                    } else {
                        PrefixState::Offline
                    },
                    last_state_change: i as f64,
                    readers: u32::from(h.streaming),
                },
            )
            .unwrap();
    }
    catalog[k].hits = inst.requester_popularity;
    (state, pool, catalog)
}

pub fn implementation(inst: &Instance) -> Verdict {
    let (mut state, mut pool, catalog) = materialize(inst);
    let requester = VideoId(inst.holders.len() as u32);
    let out = state
        .allocate_prefix(&mut pool, &catalog, requester, inst.required, 1e6)
        .unwrap();
    Verdict {
        kind: out.kind,
        granted: out.granted_blocks,
        reclaimed: out.reclaimed_blocks(),
    }
}

/// Exhaustive instance space, visited in a fixed order.
#[derive(Debug, Clone)]
pub struct Domain {
    pub max_holders: usize,
    pub max_capacity: u64,
    pub min_blocks: Vec<u64>,
    pub popularity: Vec<u64>,
    pub guards: Vec<EvictionGuard>,
}

const LABELS: usize = 8;

fn label(i: usize, pops: &[u64]) -> (bool, u64) {
    (i / pops.len() == 1, pops[i % pops.len()])
}

impl Domain {
    /// Calls `visit` for every instance. Holders are listed in victim
    /// precedence order; any other listing is a relabelling of one of these.
    pub fn for_each(&self, mut visit: impl FnMut(&Instance)) {
        assert_eq!(self.popularity.len() * 2, LABELS);
        for &guard in &self.guards {
            for &m in &self.min_blocks {
                let mut inst = Instance {
                    min_blocks: m,
                    free: 0,
                    holders: Vec::with_capacity(self.max_holders),
                    requester_popularity: 0,
                    required: m,
                    guard,
                };
                self.rec(&mut inst, 0, 0, &mut visit);
            }
        }
    }

    fn rec(
        &self,
        inst: &mut Instance,
        min_label: usize,
        used: u64,
        visit: &mut impl FnMut(&Instance),
    ) {
        let m = inst.min_blocks;
        for free in 0..=(self.max_capacity - used) {
            let capacity = used + free;
            if capacity == 0 {
                continue;
            }
            inst.free = free;
            for &rp in &self.popularity {
                inst.requester_popularity = rp;
                for required in m..=capacity.max(m) {
                    inst.required = required;
                    visit(inst);
                }
            }
        }
        if inst.holders.len() == self.max_holders {
            return;
        }
        for l in min_label..LABELS {
            let (streaming, popularity) = label(l, &self.popularity);
            for blocks in m..=(self.max_capacity - used) {
                inst.holders.push(Holder {
                    popularity,
                    streaming,
                    blocks,
                });
                self.rec(inst, l, used + blocks, visit);
                inst.holders.pop();
            }
        }
    }
}

/// [`implementation`] that reuses the materialized state while only
/// `required` changes between consecutive instances.
#[derive(Default)]
pub struct Runner {
    key: Option<Instance>,
    built: Option<(AllocatorState, BlockPool, Vec<Video>)>,
}

impl Runner {
    pub fn run(&mut self, inst: &Instance) -> Verdict {
        let same = self.key.as_ref().is_some_and(|k| {
            k.min_blocks == inst.min_blocks
                && k.free == inst.free
                && k.requester_popularity == inst.requester_popularity
                && k.guard == inst.guard
                && k.holders == inst.holders
        });
        if !same {
            self.key = Some(inst.clone());
            self.built = Some(materialize(inst));
        }
        let (state, pool, catalog) = self.built.as_ref().expect("materialized");
        let (mut state, mut pool) = (state.clone(), pool.clone());
        let requester = VideoId(inst.holders.len() as u32);
        let out = state
            .allocate_prefix(&mut pool, catalog, requester, inst.required, 1e6)
            .unwrap();
        Verdict {
            kind: out.kind,
            granted: out.granted_blocks,
            reclaimed: out.reclaimed_blocks(),
        }
    }
}

impl Domain {
    /// Number of instances `for_each` visits, without visiting them.
    pub fn count(&self) -> u128 {
        fn node(
            d: &Domain,
            m: u64,
            depth: usize,
            min_label: usize,
            used: u64,
            memo: &mut std::collections::HashMap<(usize, usize, u64), u128>,
        ) -> u128 {
            if let Some(&v) = memo.get(&(depth, min_label, used)) {
                return v;
            }
            let mut total = 0u128;
            for free in 0..=(d.max_capacity - used) {
                let capacity = used + free;
                if capacity == 0 {
                    continue;
                }
                total += d.popularity.len() as u128 * (capacity.max(m) - m + 1) as u128;
            }
            if depth < d.max_holders {
                for l in min_label..LABELS {
                    for blocks in m..=(d.max_capacity - used) {
                        total += node(d, m, depth + 1, l, used + blocks, memo);
                    }
                }
            }
            memo.insert((depth, min_label, used), total);
            total
        }
        let per_guard: u128 = self
            .min_blocks
            .iter()
            .map(|&m| node(self, m, 0, 0, 0, &mut Default::default()))
            .sum();
        per_guard * self.guards.len() as u128
    }

    /// The full domain of the equivalence criterion.
    pub fn full() -> Self {
        Self {
            max_holders: 5,
            max_capacity: 30,
            min_blocks: vec![1, 2, 3],
            popularity: vec![1, 2, 3, 4],
            guards: vec![EvictionGuard::Strict, EvictionGuard::AllowTies],
        }
    }

    pub fn tier(max_holders: usize, max_capacity: u64) -> Self {
        Self {
            max_holders,
            max_capacity,
            ..Self::full()
        }
    }
}

/// Sweeps a domain, returning (instances, first few mismatches).
pub fn sweep(domain: &Domain) -> (u64, Vec<(Instance, Verdict, Verdict)>) {
    let mut runner = Runner::default();
    let mut n = 0u64;
    let mut bad = Vec::new();
    domain.for_each(|inst| {
        n += 1;
        let want = oracle(inst);
        let got = runner.run(inst);
        if want != got && bad.len() < 5 {
            bad.push((inst.clone(), want, got));
        }
    });
    (n, bad)
}
