//! Request lifecycle at the proxy: batching, multicast delivery, interval
//! caching in the suffix region and bandwidth admission control.
//!
//! A request for a title with an open batch joins it. Otherwise, if a stream
//! of the title is already playing, the request follows it: the gap between
//! the two is buffered in the suffix region when it fits, and the follower
//! either joins the multicast group or, in unicast mode, gets its own
//! cache-fed stream. A follower whose gap does not fit reads from disk.
//! Anything else opens a new batch, allocating a prefix on a miss.

use std::collections::BTreeMap;

use crate::allocator::{
    required_blocks, static_buffer_blocks, AllocationOutcome, AllocatorState, EvictionGuard,
    OutcomeKind, Policy,
};
use crate::catalog::{record_hit, Request, RequestId, Video, VideoId};
use crate::error::{Error, Result};
use crate::pool::{BlockPool, Region};

const DISK_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub policy: Policy,
    pub guard: EvictionGuard,
    pub total_blocks: u64,
    pub prefix_share: f64,
    pub min_blocks: u64,
    /// Concurrent titles the static baseline is sized for.
    pub static_streams: u32,
    /// Disk bandwidth in blocks per second.
    pub disk_bandwidth: f64,
    /// Seconds of disk setup paid once by every disk-fed stream.
    pub disk_startup_latency: f64,
    pub network_slots: u32,
    /// Blocks per second from the central server.
    pub central_link_rate: f64,
    pub multicast: bool,
    pub interval_caching: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Dynamic,
            guard: EvictionGuard::default(),
            total_blocks: 1500,
            prefix_share: 0.5,
            min_blocks: 30,
            static_streams: 10,
            disk_bandwidth: 10.0,
            disk_startup_latency: 0.006,
            network_slots: 40,
            central_link_rate: 10.0,
            multicast: true,
            interval_caching: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntervalId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Cache,
    Disk,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeliveryPlan {
    JoinExisting,
    NewStream(Source),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Admission {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthLedger {
    pub disk_capacity: f64,
    pub network_capacity: u32,
    pub disk_in_use: f64,
    pub streams_in_use: u32,
}

impl BandwidthLedger {
    pub fn new(disk_capacity: f64, network_capacity: u32) -> Self {
        Self {
            disk_capacity,
            network_capacity,
            disk_in_use: 0.0,
            streams_in_use: 0,
        }
    }

    /// Joining costs nothing; a new stream takes one network slot and, when
    /// fed from disk, `bitrate` of disk bandwidth.
    pub fn admit(&mut self, plan: DeliveryPlan, bitrate: f64) -> Admission {
        let DeliveryPlan::NewStream(source) = plan else {
            return Admission::Accept;
        };
        if self.streams_in_use >= self.network_capacity {
            return Admission::Reject;
        }
        let disk = if source == Source::Disk { bitrate } else { 0.0 };
        if self.disk_in_use + disk > self.disk_capacity + DISK_EPSILON {
            return Admission::Reject;
        }
        self.streams_in_use += 1;
        self.disk_in_use += disk;
        Admission::Accept
    }

    pub fn release(&mut self, source: Source, bitrate: f64) {
        self.streams_in_use = self.streams_in_use.saturating_sub(1);
        if source == Source::Disk {
            self.disk_in_use -= bitrate;
            if self.disk_in_use.abs() < DISK_EPSILON {
                self.disk_in_use = 0.0;
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        let disk_ok = self.disk_in_use >= -DISK_EPSILON
            && self.disk_in_use <= self.disk_capacity + DISK_EPSILON;
        if !disk_ok || self.streams_in_use > self.network_capacity {
            return Err(Error::Accounting(format!(
                "ledger out of bounds: disk {}/{} streams {}/{}",
                self.disk_in_use, self.disk_capacity, self.streams_in_use, self.network_capacity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub video_id: VideoId,
    pub members: Vec<Request>,
    pub opened_at: f64,
    pub flush_deadline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subscriber {
    pub request: RequestId,
    pub arrival_time: f64,
    /// Playback start of this viewer; later than the stream start for a
    /// follower that joined through an interval.
    pub playback_start: f64,
    pub terminates_early: bool,
    pub interval: Option<IntervalId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticastStream {
    pub id: StreamId,
    pub video_id: VideoId,
    pub start_time: f64,
    pub source: Source,
    pub bitrate: f64,
    pub size_blocks: u64,
    /// Counted as a reader of the title's prefix allocation.
    pub reads_prefix: bool,
    pub subscribers: Vec<Subscriber>,
}

impl MulticastStream {
    /// Blocks played by the leading viewer.
    pub fn position(&self, now: f64) -> f64 {
        (self.bitrate * (now - self.start_time).max(0.0)).min(self.size_blocks as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub id: IntervalId,
    pub video_id: VideoId,
    pub preceding_stream: StreamId,
    /// Stream the follower is served by (the preceding one itself when the
    /// follower joined the multicast group).
    pub following_stream: StreamId,
    pub follower: RequestId,
    pub gap_blocks: u64,
    pub cached: bool,
}

/// A would-be interval, before suffix space is reserved for it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCandidate {
    pub video_id: VideoId,
    pub preceding_stream: StreamId,
    pub preceding_start: f64,
    pub follower: RequestId,
    pub follow_time: f64,
    pub bitrate: f64,
}

impl IntervalCandidate {
    pub fn gap_blocks(&self) -> u64 {
        let gap = (self.follow_time - self.preceding_start).max(0.0) * self.bitrate;
        // guard against 2.0000000000000004 style noise before rounding up
        (gap - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetachReason {
    /// Viewer quit at the end of the prefix.
    PrefixBoundary,
    EndOfTitle,
}

/// Work the event loop must schedule on behalf of the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Followup {
    FlushBatch {
        video_id: VideoId,
        at: f64,
    },
    Detach {
        stream: StreamId,
        request: RequestId,
        reason: DetachReason,
        at: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServicePath {
    Batch,
    /// Joined a running multicast stream through a cached interval.
    IntervalJoin,
    /// Own stream fed from a cached interval (unicast).
    IntervalStream,
    /// Own stream fed from disk after the interval did not fit.
    DiskFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RequestOutcome {
    Pending,
    Served {
        start: f64,
        latency: f64,
        source: Source,
        path: ServicePath,
    },
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestLog {
    pub id: RequestId,
    pub video_id: VideoId,
    pub arrival_time: f64,
    pub hit: bool,
    pub outcome: RequestOutcome,
}

/// What happened to a request at arrival.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    JoinedBatch,
    OpenedBatch {
        allocation: Option<AllocationOutcome>,
    },
    Followed {
        path: ServicePath,
        interval: Option<IntervalId>,
    },
    Rejected,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Counters {
    pub requests: u64,
    pub hits: u64,
    pub rejections: u64,
    pub served: u64,
    pub latency_sum: f64,
    pub max_latency: f64,
    pub central_fetches: u64,
    pub fetched_blocks: u64,
    pub allocations_rejected: u64,
    pub peak_concurrent_users: u64,
    pub peak_streams: u64,
}

#[derive(Debug, Clone)]
pub struct EngineState {
    cfg: EngineConfig,
    catalog: Vec<Video>,
    total_hits: u64,
    pool: BlockPool,
    allocator: AllocatorState,
    ledger: BandwidthLedger,
    batches: BTreeMap<VideoId, Batch>,
    streams: BTreeMap<StreamId, MulticastStream>,
    intervals: BTreeMap<IntervalId, Interval>,
    /// Central fetches in flight: completion time per title.
    fetching: BTreeMap<VideoId, f64>,
    next_stream: u64,
    next_interval: u64,
    log: Vec<RequestLog>,
    log_index: BTreeMap<RequestId, usize>,
    counters: Counters,
}

impl EngineState {
    pub fn new(cfg: EngineConfig, catalog: Vec<Video>) -> Result<Self> {
        let pool = BlockPool::new(cfg.total_blocks, cfg.prefix_share)?;
        let allocator = AllocatorState::new(cfg.min_blocks, cfg.guard)?;
        if cfg.network_slots == 0 {
            return Err(Error::Config("network_slots must be >= 1".into()));
        }
        if !(cfg.disk_bandwidth > 0.0 && cfg.central_link_rate > 0.0) {
            return Err(Error::Config("bandwidths must be > 0".into()));
        }
        if cfg.disk_startup_latency < 0.0 {
            return Err(Error::Config("disk_startup_latency must be >= 0".into()));
        }
        if cfg.policy == Policy::Static {
            if cfg.static_streams == 0 {
                return Err(Error::Config("static_streams must be >= 1".into()));
            }
            if static_buffer_blocks(pool.capacity(Region::Prefix), cfg.static_streams) == 0 {
                return Err(Error::Config("static buffer rounds to zero blocks".into()));
            }
        }
        let ledger = BandwidthLedger::new(cfg.disk_bandwidth, cfg.network_slots);
        let total_hits = catalog.iter().map(|v| v.hits).sum();
        Ok(Self {
            cfg,
            catalog,
            total_hits,
            pool,
            allocator,
            ledger,
            batches: BTreeMap::new(),
            streams: BTreeMap::new(),
            intervals: BTreeMap::new(),
            fetching: BTreeMap::new(),
            next_stream: 0,
            next_interval: 0,
            log: Vec::new(),
            log_index: BTreeMap::new(),
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &[Video] {
        &self.catalog
    }

    pub fn pool(&self) -> &BlockPool {
        &self.pool
    }

    pub fn allocator(&self) -> &AllocatorState {
        &self.allocator
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn batches(&self) -> impl Iterator<Item = &Batch> {
        self.batches.values()
    }

    pub fn streams(&self) -> impl Iterator<Item = &MulticastStream> {
        self.streams.values()
    }

    pub fn stream(&self, id: StreamId) -> Option<&MulticastStream> {
        self.streams.get(&id)
    }

    pub fn intervals(&self) -> impl Iterator<Item = &Interval> {
        self.intervals.values()
    }

    pub fn request_log(&self) -> &[RequestLog] {
        &self.log
    }

    pub fn into_request_log(self) -> Vec<RequestLog> {
        self.log
    }

    pub fn concurrent_users(&self) -> u64 {
        self.streams
            .values()
            .map(|s| s.subscribers.len() as u64)
            .sum()
    }

    pub fn prefixes_buffered(&self) -> usize {
        self.allocator.len()
    }

    pub fn fetch_in_flight(&self, video_id: VideoId, now: f64) -> bool {
        self.fetching.get(&video_id).is_some_and(|&done| done > now)
    }

    fn video(&self, id: VideoId) -> Result<&Video> {
        self.catalog
            .get(id.0 as usize)
            .filter(|v| v.id == id)
            .ok_or(Error::UnknownVideo(id))
    }

    /// Latest-started active stream of a title.
    fn latest_stream(&self, video_id: VideoId) -> Option<&MulticastStream> {
        self.streams
            .values()
            .filter(|s| s.video_id == video_id)
            .max_by(|a, b| a.start_time.total_cmp(&b.start_time).then(a.id.cmp(&b.id)))
    }

    fn log_outcome(&mut self, id: RequestId, outcome: RequestOutcome) {
        if let Some(&idx) = self.log_index.get(&id) {
            self.log[idx].outcome = outcome;
        }
        match outcome {
            RequestOutcome::Served { latency, .. } => {
                self.counters.served += 1;
                self.counters.latency_sum += latency;
                self.counters.max_latency = self.counters.max_latency.max(latency);
            }
            RequestOutcome::Rejected => self.counters.rejections += 1,
            RequestOutcome::Pending => {}
        }
    }

    fn note_peaks(&mut self) {
        let users = self.concurrent_users();
        self.counters.peak_concurrent_users = self.counters.peak_concurrent_users.max(users);
        self.counters.peak_streams = self.counters.peak_streams.max(self.streams.len() as u64);
    }

    /// Handles a request arrival at `now`.
    pub fn on_request(&mut self, request: &Request, now: f64) -> Result<(Action, Vec<Followup>)> {
        let video_id = request.video_id;
        self.video(video_id)?;
        record_hit(&mut self.catalog, video_id)?;
        self.total_hits += 1;
        self.counters.requests += 1;

        let cached = self.allocator.contains(video_id);
        let batch_open = self.batches.contains_key(&video_id);
        let preceding = self.latest_stream(video_id).map(|s| (s.id, s.start_time));
        let hit =
            cached || batch_open || preceding.is_some() || self.fetch_in_flight(video_id, now);
        if hit {
            self.counters.hits += 1;
        }
        self.log_index.insert(request.id, self.log.len());
        self.log.push(RequestLog {
            id: request.id,
            video_id,
            arrival_time: request.arrival_time,
            hit,
            outcome: RequestOutcome::Pending,
        });

        if let Some(batch) = self.batches.get_mut(&video_id) {
            batch.members.push(request.clone());
            return Ok((Action::JoinedBatch, Vec::new()));
        }

        if let (Some((stream, start)), true) = (preceding, self.cfg.interval_caching) {
            let candidate = IntervalCandidate {
                video_id,
                preceding_stream: stream,
                preceding_start: start,
                follower: request.id,
                follow_time: now,
                bitrate: self.video(video_id)?.bitrate,
            };
            return self.follow(request, candidate, now);
        }

        let mut allocation = None;
        if !cached {
            let outcome = self.allocate(video_id, now)?;
            allocation = Some(outcome);
        }
        let batch = Batch {
            video_id,
            members: vec![request.clone()],
            opened_at: now,
            flush_deadline: request.deadline,
        };
        self.batches.insert(video_id, batch);
        Ok((
            Action::OpenedBatch { allocation },
            vec![Followup::FlushBatch {
                video_id,
                at: request.deadline,
            }],
        ))
    }

    /// Sizes and installs a prefix for a missed title and starts its fetch.
    fn allocate(&mut self, video_id: VideoId, now: f64) -> Result<AllocationOutcome> {
        let outcome = match self.cfg.policy {
            Policy::Dynamic => {
                let video = self.video(video_id)?;
                let required = required_blocks(
                    video,
                    self.total_hits,
                    self.pool.capacity(Region::Prefix),
                    self.cfg.min_blocks,
                )
                .max(self.cfg.min_blocks);
                self.allocator.allocate_prefix(
                    &mut self.pool,
                    &self.catalog,
                    video_id,
                    required,
                    now,
                )?
            }
            Policy::Static => self.allocator.static_allocate(
                &mut self.pool,
                &self.catalog,
                video_id,
                self.cfg.static_streams,
                now,
            )?,
        };
        if outcome.kind == OutcomeKind::Rejected {
            self.counters.allocations_rejected += 1;
        } else {
            let done = now + outcome.granted_blocks as f64 / self.cfg.central_link_rate;
            self.fetching.insert(video_id, done);
            self.counters.central_fetches += 1;
            self.counters.fetched_blocks += outcome.granted_blocks;
        }
        self.fetching.retain(|_, &mut t| t > now);
        Ok(outcome)
    }

    /// Reserves suffix space for candidates in increasing gap order. Returns
    /// one entry per candidate, in the order given.
    pub fn try_interval_cache(
        &mut self,
        candidates: &[IntervalCandidate],
    ) -> Vec<Option<Interval>> {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by_key(|&i| (candidates[i].gap_blocks(), i));
        let mut admitted = vec![None; candidates.len()];
        for i in order {
            let c = &candidates[i];
            let gap = c.gap_blocks();
            if self.pool.reserve(Region::Suffix, gap).is_err() {
                continue;
            }
            let id = IntervalId(self.next_interval);
            self.next_interval += 1;
            let interval = Interval {
                id,
                video_id: c.video_id,
                preceding_stream: c.preceding_stream,
                following_stream: c.preceding_stream,
                follower: c.follower,
                gap_blocks: gap,
                cached: true,
            };
            self.intervals.insert(id, interval.clone());
            admitted[i] = Some(interval);
        }
        admitted
    }

    fn release_interval(&mut self, id: IntervalId) -> Result<()> {
        if let Some(interval) = self.intervals.remove(&id) {
            self.pool.release(Region::Suffix, interval.gap_blocks)?;
        }
        Ok(())
    }

    fn follow(
        &mut self,
        request: &Request,
        candidate: IntervalCandidate,
        now: f64,
    ) -> Result<(Action, Vec<Followup>)> {
        let preceding = candidate.preceding_stream;
        let interval = self.try_interval_cache(std::slice::from_ref(&candidate))[0]
            .as_ref()
            .map(|i| i.id);
        let bitrate = candidate.bitrate;

        let (path, source) = match (interval, self.cfg.multicast) {
            (Some(_), true) => (ServicePath::IntervalJoin, Source::Cache),
            (Some(_), false) => (ServicePath::IntervalStream, Source::Cache),
            (None, _) => (ServicePath::DiskFallback, Source::Disk),
        };

        if path == ServicePath::IntervalJoin {
            self.ledger.admit(DeliveryPlan::JoinExisting, bitrate);
            let subscriber = Subscriber {
                request: request.id,
                arrival_time: request.arrival_time,
                playback_start: now,
                terminates_early: request.terminates_early,
                interval,
            };
            let followup = self.detach_followup(preceding, &subscriber)?;
            self.streams
                .get_mut(&preceding)
                .expect("preceding stream is active")
                .subscribers
                .push(subscriber);
            self.serve(request, now, source, path);
            self.note_peaks();
            return Ok((Action::Followed { path, interval }, vec![followup]));
        }

        if self.ledger.admit(DeliveryPlan::NewStream(source), bitrate) == Admission::Reject {
            if let Some(id) = interval {
                self.release_interval(id)?;
            }
            self.log_outcome(request.id, RequestOutcome::Rejected);
            return Ok((Action::Rejected, Vec::new()));
        }
        let stream = self.open_stream(request.video_id, now, source)?;
        if let Some(id) = interval {
            self.intervals
                .get_mut(&id)
                .expect("interval just reserved")
                .following_stream = stream;
        }
        let followups = self.subscribe(stream, std::slice::from_ref(request), now, interval)?;
        self.serve(request, now, source, path);
        self.note_peaks();
        Ok((Action::Followed { path, interval }, followups))
    }

    fn serve(&mut self, request: &Request, now: f64, source: Source, path: ServicePath) {
        let mut latency = now - request.arrival_time;
        if source == Source::Disk {
            latency += self.cfg.disk_startup_latency;
        }
        self.log_outcome(
            request.id,
            RequestOutcome::Served {
                start: now,
                latency,
                source,
                path,
            },
        );
    }

    /// Creates a stream whose network and disk budget was already admitted.
    fn open_stream(&mut self, video_id: VideoId, now: f64, source: Source) -> Result<StreamId> {
        let video = self.video(video_id)?;
        let (bitrate, size_blocks) = (video.bitrate, video.size_blocks);
        let reads_prefix = self.allocator.contains(video_id);
        if reads_prefix {
            self.allocator.mark_streaming(video_id, now)?;
        }
        let id = StreamId(self.next_stream);
        self.next_stream += 1;
        self.streams.insert(
            id,
            MulticastStream {
                id,
                video_id,
                start_time: now,
                source,
                bitrate,
                size_blocks,
                reads_prefix,
                subscribers: Vec::new(),
            },
        );
        Ok(id)
    }

    fn detach_followup(&self, stream: StreamId, subscriber: &Subscriber) -> Result<Followup> {
        let s = self
            .streams
            .get(&stream)
            .ok_or_else(|| Error::Accounting(format!("stream {} is not active", stream.0)))?;
        let video = self.video(s.video_id)?;
        let (blocks, reason) =
            if subscriber.terminates_early && video.prefix_blocks < video.size_blocks {
                (video.prefix_blocks, DetachReason::PrefixBoundary)
            } else {
                (video.size_blocks, DetachReason::EndOfTitle)
            };
        Ok(Followup::Detach {
            stream,
            request: subscriber.request,
            reason,
            at: subscriber.playback_start + video.playback_secs(blocks),
        })
    }

    fn subscribe(
        &mut self,
        stream: StreamId,
        members: &[Request],
        now: f64,
        interval: Option<IntervalId>,
    ) -> Result<Vec<Followup>> {
        let mut followups = Vec::with_capacity(members.len());
        for member in members {
            let subscriber = Subscriber {
                request: member.id,
                arrival_time: member.arrival_time,
                playback_start: now,
                terminates_early: member.terminates_early,
                interval,
            };
            followups.push(self.detach_followup(stream, &subscriber)?);
            self.streams
                .get_mut(&stream)
                .expect("stream exists")
                .subscribers
                .push(subscriber);
        }
        Ok(followups)
    }

    /// Starts delivery for the open batch of `video_id` at its deadline.
    /// Returns the streams created.
    pub fn flush_batch(
        &mut self,
        video_id: VideoId,
        now: f64,
    ) -> Result<(Vec<StreamId>, Vec<Followup>)> {
        let Some(batch) = self.batches.remove(&video_id) else {
            return Err(Error::Accounting(format!("no open batch for {video_id}")));
        };
        let bitrate = self.video(video_id)?.bitrate;
        let source = if self.allocator.contains(video_id) {
            Source::Cache
        } else {
            Source::Central
        };

        let mut created = Vec::new();
        let mut followups = Vec::new();
        if self.cfg.multicast {
            if self.ledger.admit(DeliveryPlan::NewStream(source), bitrate) == Admission::Accept {
                let stream = self.open_stream(video_id, now, source)?;
                followups.extend(self.subscribe(stream, &batch.members, now, None)?);
                for member in &batch.members {
                    self.serve(member, now, source, ServicePath::Batch);
                }
                created.push(stream);
            } else {
                for member in &batch.members {
                    self.log_outcome(member.id, RequestOutcome::Rejected);
                }
            }
        } else {
            for member in &batch.members {
                if self.ledger.admit(DeliveryPlan::NewStream(source), bitrate) == Admission::Reject
                {
                    self.log_outcome(member.id, RequestOutcome::Rejected);
                    continue;
                }
                let stream = self.open_stream(video_id, now, source)?;
                followups.extend(self.subscribe(
                    stream,
                    std::slice::from_ref(member),
                    now,
                    None,
                )?);
                self.serve(member, now, source, ServicePath::Batch);
                created.push(stream);
            }
        }
        self.note_peaks();
        Ok((created, followups))
    }

    /// A viewer leaves the stream. Returns true when this ended the stream.
    pub fn detach(&mut self, stream_id: StreamId, request: RequestId, now: f64) -> Result<bool> {
        let stream = self.streams.get_mut(&stream_id).ok_or_else(|| {
            Error::Accounting(format!("detach from inactive stream {}", stream_id.0))
        })?;
        let Some(pos) = stream.subscribers.iter().position(|s| s.request == request) else {
            return Err(Error::Accounting(format!(
                "request {} is not subscribed to stream {}",
                request.0, stream_id.0
            )));
        };
        let subscriber = stream.subscribers.remove(pos);
        let ended = stream.subscribers.is_empty();
        if let Some(id) = subscriber.interval {
            self.release_interval(id)?;
        }
        if ended {
            self.end_stream(stream_id, now)?;
        }
        Ok(ended)
    }

    fn end_stream(&mut self, stream_id: StreamId, now: f64) -> Result<()> {
        let stream = self
            .streams
            .remove(&stream_id)
            .expect("ending an active stream");
        let preceded: Vec<IntervalId> = self
            .intervals
            .values()
            .filter(|i| i.preceding_stream == stream_id)
            .map(|i| i.id)
            .collect();
        for id in preceded {
            self.release_interval(id)?;
            // the follower keeps its stream, it just no longer holds buffer space
            for s in self.streams.values_mut() {
                for sub in &mut s.subscribers {
                    if sub.interval == Some(id) {
                        sub.interval = None;
                    }
                }
            }
        }
        self.ledger.release(stream.source, stream.bitrate);
        if stream.reads_prefix {
            self.allocator.mark_offline(stream.video_id, now)?;
        }
        Ok(())
    }

    /// Checks every cross-module invariant; used after each event in
    /// self-check mode.
    pub fn check_invariants(&self, now: f64) -> Result<()> {
        self.allocator
            .check_invariants(&self.pool, self.cfg.policy)?;
        let interval_blocks: u64 = self.intervals.values().map(|i| i.gap_blocks).sum();
        self.pool.check_conserved(Region::Suffix, interval_blocks)?;
        self.ledger.check()?;

        if self.ledger.streams_in_use as usize != self.streams.len() {
            return Err(Error::Accounting(format!(
                "ledger holds {} slots for {} streams",
                self.ledger.streams_in_use,
                self.streams.len()
            )));
        }
        let disk: f64 = self
            .streams
            .values()
            .filter(|s| s.source == Source::Disk)
            .map(|s| s.bitrate)
            .sum();
        if (disk - self.ledger.disk_in_use).abs() > 1e-6 {
            return Err(Error::Accounting(format!(
                "ledger disk {} but disk streams need {disk}",
                self.ledger.disk_in_use
            )));
        }

        let mut readers: BTreeMap<VideoId, u32> = BTreeMap::new();
        for s in self.streams.values() {
            if s.subscribers.is_empty() {
                return Err(Error::Accounting(format!(
                    "stream {} has no subscribers",
                    s.id.0
                )));
            }
            if s.position(now) > s.size_blocks as f64 {
                return Err(Error::Accounting(format!("stream {} past end", s.id.0)));
            }
            if s.reads_prefix {
                *readers.entry(s.video_id).or_default() += 1;
            }
        }
        for alloc in self.allocator.iter() {
            let expected = readers.get(&alloc.video_id).copied().unwrap_or(0);
            if alloc.readers != expected {
                return Err(Error::Accounting(format!(
                    "{} counts {} readers, {} streams read it",
                    alloc.video_id, alloc.readers, expected
                )));
            }
        }
        for (video, count) in &readers {
            if !self.allocator.contains(*video) && *count > 0 {
                return Err(Error::Accounting(format!(
                    "{count} streams read a missing prefix of {video}"
                )));
            }
        }

        for interval in self.intervals.values() {
            let Some(pre) = self.streams.get(&interval.preceding_stream) else {
                return Err(Error::Accounting(format!(
                    "interval {} outlived its preceding stream",
                    interval.id.0
                )));
            };
            let follows = self
                .streams
                .get(&interval.following_stream)
                .is_some_and(|s| s.video_id == pre.video_id);
            if !follows {
                return Err(Error::Accounting(format!(
                    "interval {} has no follower on {}",
                    interval.id.0, pre.video_id
                )));
            }
        }

        for batch in self.batches.values() {
            let first = batch
                .members
                .first()
                .ok_or_else(|| Error::Accounting(format!("empty batch for {}", batch.video_id)))?;
            if first.deadline != batch.flush_deadline {
                return Err(Error::Accounting(format!(
                    "batch for {} flushes at {} but first deadline is {}",
                    batch.video_id, batch.flush_deadline, first.deadline
                )));
            }
            if batch
                .members
                .iter()
                .any(|m| m.arrival_time < batch.opened_at || m.arrival_time >= batch.flush_deadline)
            {
                return Err(Error::Accounting(format!(
                    "batch for {} has a member outside its window",
                    batch.video_id
                )));
            }
        }

        if !self.cfg.multicast && self.concurrent_users() > u64::from(self.cfg.network_slots) {
            return Err(Error::Accounting(format!(
                "{} unicast users exceed {} slots",
                self.concurrent_users(),
                self.cfg.network_slots
            )));
        }
        Ok(())
    }
}
