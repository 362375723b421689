//! Prefix buffer allocation.
//!
//! The dynamic policy sizes each new prefix by the title's share of all hits
//! and makes room by stripping less popular prefixes down to the minimum
//! allocation: completely offline prefixes first, then prefixes that are
//! currently being streamed. The static policy gives every title the same
//! buffer sized for the fully loaded system.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::catalog::{Video, VideoId};
use crate::error::{Error, Result};
use crate::pool::{BlockPool, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Policy {
    #[default]
    Dynamic,
    Static,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Dynamic => "dynamic",
            Policy::Static => "static",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Policy::Dynamic),
            "static" => Ok(Policy::Static),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected dynamic|static)"
            ))),
        }
    }
}

/// Which popularities may be stripped for a requester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EvictionGuard {
    /// Victims must be strictly less popular than the requester.
    Strict,
    /// Victims may be as popular as the requester. Without this a title
    /// requested for the first time can never displace another single-hit
    /// title, so the prefix region freezes once full.
    #[default]
    AllowTies,
}

impl EvictionGuard {
    fn permits(self, victim: u64, requester: u64) -> bool {
        match self {
            EvictionGuard::Strict => victim < requester,
            EvictionGuard::AllowTies => victim <= requester,
        }
    }
}

impl fmt::Display for EvictionGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvictionGuard::Strict => "strict",
            EvictionGuard::AllowTies => "allow_ties",
        })
    }
}

impl FromStr for EvictionGuard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(EvictionGuard::Strict),
            "allow_ties" => Ok(EvictionGuard::AllowTies),
            other => Err(Error::Config(format!(
                "unknown eviction guard {other:?} (expected strict|allow_ties)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrefixState {
    Streaming,
    Offline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixAllocation {
    pub video_id: VideoId,
    pub blocks: u64,
    pub state: PrefixState,
    pub last_state_change: f64,
    /// Active streams currently reading this prefix.
    pub readers: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Full,
    Partial,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eviction {
    pub video_id: VideoId,
    pub blocks_reclaimed: u64,
    /// State of the victim when it was chosen.
    pub victim_state: PrefixState,
    pub victim_popularity: u64,
    /// The whole allocation was dropped (static policy only).
    pub destroyed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationOutcome {
    pub kind: OutcomeKind,
    pub granted_blocks: u64,
    pub evictions: Vec<Eviction>,
}

impl AllocationOutcome {
    fn rejected() -> Self {
        Self {
            kind: OutcomeKind::Rejected,
            granted_blocks: 0,
            evictions: Vec::new(),
        }
    }

    pub fn reclaimed_blocks(&self) -> u64 {
        self.evictions.iter().map(|e| e.blocks_reclaimed).sum()
    }
}

/// Popularity-proportional prefix entitlement, floored at `min_blocks` and
/// capped at the title's prefix length.
pub fn required_blocks(
    video: &Video,
    total_hits: u64,
    prefix_capacity: u64,
    min_blocks: u64,
) -> u64 {
    let total = total_hits.max(1) as u128;
    // round(capacity * hits / total), half away from zero
    let share = ((2 * prefix_capacity as u128 * video.hits as u128 + total) / (2 * total)) as u64;
    share.max(min_blocks).min(video.prefix_blocks)
}

/// [`required_blocks`] with the hit total taken from the whole catalog.
pub fn required_blocks_in(
    video: &Video,
    catalog: &[Video],
    prefix_capacity: u64,
    min_blocks: u64,
) -> u64 {
    let total: u64 = catalog.iter().map(|v| v.hits).sum();
    required_blocks(video, total, prefix_capacity, min_blocks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorState {
    allocations: BTreeMap<VideoId, PrefixAllocation>,
    min_blocks: u64,
    guard: EvictionGuard,
}

impl AllocatorState {
    pub fn new(min_blocks: u64, guard: EvictionGuard) -> Result<Self> {
        if min_blocks == 0 {
            return Err(Error::Config("min_blocks must be >= 1".into()));
        }
        Ok(Self {
            allocations: BTreeMap::new(),
            min_blocks,
            guard,
        })
    }

    pub fn min_blocks(&self) -> u64 {
        self.min_blocks
    }

    pub fn guard(&self) -> EvictionGuard {
        self.guard
    }

    pub fn get(&self, id: VideoId) -> Option<&PrefixAllocation> {
        self.allocations.get(&id)
    }

    pub fn contains(&self, id: VideoId) -> bool {
        self.allocations.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrefixAllocation> {
        self.allocations.values()
    }

    pub fn held_blocks(&self) -> u64 {
        self.allocations.values().map(|a| a.blocks).sum()
    }

    /// Installs an allocation directly, taking its blocks from the pool.
    /// Used to set up scenarios; the event loop goes through the policies.
    pub fn insert(&mut self, pool: &mut BlockPool, alloc: PrefixAllocation) -> Result<()> {
        if self.allocations.contains_key(&alloc.video_id) {
            return Err(Error::Policy(format!(
                "duplicate allocation for {}",
                alloc.video_id
            )));
        }
        pool.reserve(Region::Prefix, alloc.blocks)?;
        self.allocations.insert(alloc.video_id, alloc);
        Ok(())
    }

    fn check_new(&self, video_id: VideoId) -> Result<()> {
        if self.allocations.contains_key(&video_id) {
            return Err(Error::Policy(format!(
                "duplicate allocation for {video_id}"
            )));
        }
        Ok(())
    }

    fn popularity(catalog: &[Video], id: VideoId) -> Result<u64> {
        catalog
            .get(id.0 as usize)
            .filter(|v| v.id == id)
            .map(|v| v.hits)
            .ok_or(Error::UnknownVideo(id))
    }

    /// Victims in one state, least popular first; ties go to the older state
    /// change, then the smaller id.
    fn ranked(
        &self,
        catalog: &[Video],
        state: PrefixState,
        keep: impl Fn(&PrefixAllocation, u64) -> bool,
    ) -> Result<Vec<(u64, VideoId)>> {
        let mut victims = Vec::new();
        for alloc in self.allocations.values().filter(|a| a.state == state) {
            let pop = Self::popularity(catalog, alloc.video_id)?;
            if keep(alloc, pop) {
                victims.push((pop, alloc.last_state_change, alloc.video_id));
            }
        }
        victims.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        Ok(victims.into_iter().map(|(pop, _, id)| (pop, id)).collect())
    }

    fn roll_back(
        &mut self,
        pool: &mut BlockPool,
        evictions: &[Eviction],
        saved: Vec<PrefixAllocation>,
    ) -> Result<()> {
        let reclaimed: u64 = evictions.iter().map(|e| e.blocks_reclaimed).sum();
        pool.reserve(Region::Prefix, reclaimed)?;
        for alloc in saved {
            self.allocations.insert(alloc.video_id, alloc);
        }
        Ok(())
    }

    fn install(
        &mut self,
        pool: &mut BlockPool,
        video_id: VideoId,
        blocks: u64,
        now: f64,
    ) -> Result<()> {
        pool.reserve(Region::Prefix, blocks)?;
        self.allocations.insert(
            video_id,
            PrefixAllocation {
                video_id,
                blocks,
                state: PrefixState::Offline,
                last_state_change: now,
                readers: 0,
            },
        );
        Ok(())
    }

    /// Dynamic allocation of `required` blocks for a title with no prefix yet.
    pub fn allocate_prefix(
        &mut self,
        pool: &mut BlockPool,
        catalog: &[Video],
        video_id: VideoId,
        required: u64,
        now: f64,
    ) -> Result<AllocationOutcome> {
        self.check_new(video_id)?;
        if required < self.min_blocks {
            return Err(Error::Policy(format!(
                "required {required} below minimum {}",
                self.min_blocks
            )));
        }
        let requester = Self::popularity(catalog, video_id)?;
        let min = self.min_blocks;

        let mut evictions = Vec::new();
        let mut saved = Vec::new();
        for phase in [PrefixState::Offline, PrefixState::Streaming] {
            if pool.free(Region::Prefix) >= required {
                break;
            }
            let guard = self.guard;
            let victims = self.ranked(catalog, phase, |a, pop| {
                a.blocks > min && guard.permits(pop, requester)
            })?;
            for (pop, id) in victims {
                if pool.free(Region::Prefix) >= required {
                    break;
                }
                let alloc = self.allocations.get_mut(&id).expect("ranked victim exists");
                saved.push(alloc.clone());
                let reclaimed = alloc.blocks - min;
                alloc.blocks = min;
                pool.release(Region::Prefix, reclaimed)?;
                evictions.push(Eviction {
                    video_id: id,
                    blocks_reclaimed: reclaimed,
                    victim_state: phase,
                    victim_popularity: pop,
                    destroyed: false,
                });
            }
        }

        let free = pool.free(Region::Prefix);
        let (kind, granted) = if free >= required {
            (OutcomeKind::Full, required)
        } else if free >= min {
            (OutcomeKind::Partial, free)
        } else {
            self.roll_back(pool, &evictions, saved)?;
            return Ok(AllocationOutcome::rejected());
        };
        self.install(pool, video_id, granted, now)?;
        Ok(AllocationOutcome {
            kind,
            granted_blocks: granted,
            evictions,
        })
    }

    /// Fixed-size allocation sized for `fully_loaded_streams` concurrent
    /// titles. Offline prefixes are dropped whole, least popular first.
    pub fn static_allocate(
        &mut self,
        pool: &mut BlockPool,
        catalog: &[Video],
        video_id: VideoId,
        fully_loaded_streams: u32,
        now: f64,
    ) -> Result<AllocationOutcome> {
        self.check_new(video_id)?;
        let video = catalog
            .get(video_id.0 as usize)
            .filter(|v| v.id == video_id)
            .ok_or(Error::UnknownVideo(video_id))?;
        let size = static_buffer_blocks(pool.capacity(Region::Prefix), fully_loaded_streams)
            .min(video.prefix_blocks);
        if size == 0 {
            return Ok(AllocationOutcome::rejected());
        }

        let mut evictions = Vec::new();
        let mut saved = Vec::new();
        if pool.free(Region::Prefix) < size {
            for (pop, id) in self.ranked(catalog, PrefixState::Offline, |_, _| true)? {
                if pool.free(Region::Prefix) >= size {
                    break;
                }
                let alloc = self.allocations.remove(&id).expect("ranked victim exists");
                pool.release(Region::Prefix, alloc.blocks)?;
                evictions.push(Eviction {
                    video_id: id,
                    blocks_reclaimed: alloc.blocks,
                    victim_state: PrefixState::Offline,
                    victim_popularity: pop,
                    destroyed: true,
                });
                saved.push(alloc);
            }
        }
        if pool.free(Region::Prefix) < size {
            self.roll_back(pool, &evictions, saved)?;
            return Ok(AllocationOutcome::rejected());
        }
        self.install(pool, video_id, size, now)?;
        Ok(AllocationOutcome {
            kind: OutcomeKind::Full,
            granted_blocks: size,
            evictions,
        })
    }

    /// Registers one more reader; the prefix becomes `Streaming` on the first.
    pub fn mark_streaming(&mut self, id: VideoId, now: f64) -> Result<()> {
        let alloc = self
            .allocations
            .get_mut(&id)
            .ok_or(Error::MissingAllocation(id))?;
        alloc.readers += 1;
        if alloc.state != PrefixState::Streaming {
            alloc.state = PrefixState::Streaming;
            alloc.last_state_change = now;
        }
        Ok(())
    }

    /// Drops one reader; the prefix goes `Offline` when the last one leaves.
    pub fn mark_offline(&mut self, id: VideoId, now: f64) -> Result<()> {
        let alloc = self
            .allocations
            .get_mut(&id)
            .ok_or(Error::MissingAllocation(id))?;
        alloc.readers = alloc.readers.saturating_sub(1);
        if alloc.readers == 0 && alloc.state != PrefixState::Offline {
            alloc.state = PrefixState::Offline;
            alloc.last_state_change = now;
        }
        Ok(())
    }

    pub fn check_invariants(&self, pool: &BlockPool, policy: Policy) -> Result<()> {
        pool.check_conserved(Region::Prefix, self.held_blocks())?;
        for alloc in self.allocations.values() {
            if policy == Policy::Dynamic && alloc.blocks < self.min_blocks {
                return Err(Error::Accounting(format!(
                    "{} holds {} blocks, below the floor of {}",
                    alloc.video_id, alloc.blocks, self.min_blocks
                )));
            }
            if alloc.blocks == 0 {
                return Err(Error::Accounting(format!(
                    "{} holds no blocks",
                    alloc.video_id
                )));
            }
            let streaming = alloc.readers > 0;
            if streaming != (alloc.state == PrefixState::Streaming) {
                return Err(Error::Accounting(format!(
                    "{} is {:?} with {} readers",
                    alloc.video_id, alloc.state, alloc.readers
                )));
            }
        }
        Ok(())
    }
}

/// Per-title buffer of the static baseline.
pub fn static_buffer_blocks(prefix_capacity: u64, fully_loaded_streams: u32) -> u64 {
    prefix_capacity / u64::from(fully_loaded_streams.max(1))
}
