//! Discrete-event driver.
//!
//! Events are dispatched in `(time, seq)` order, where `seq` is a per-run
//! counter assigned at scheduling time. Stream playback is not ticked; the
//! only stream events are viewer detaches at the prefix boundary or at the
//! end of the title.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::allocator::Policy;
use crate::catalog::{
    build_catalog, generate_requests, Request, RequestId, VideoId, WorkloadConfig,
};
use crate::engine::{DetachReason, EngineConfig, EngineState, Followup, RequestLog, StreamId};
use crate::error::{Error, Result};
use crate::trace::{MetricsSample, MetricsTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workload: WorkloadConfig,
    pub engine: EngineConfig,
    pub sample_interval: f64,
    /// Check every module invariant after every event.
    pub self_check: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workload: WorkloadConfig::default(),
            engine: EngineConfig::default(),
            sample_interval: 10.0,
            self_check: false,
        }
    }
}

impl SimConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.workload.seed = seed;
        cfg
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        let mut cfg = self.clone();
        cfg.engine.policy = policy;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestArrival(usize),
    BatchFlush(VideoId),
    /// A viewer quitting at the prefix boundary.
    StreamTick {
        stream: StreamId,
        request: RequestId,
    },
    StreamEnd {
        stream: StreamId,
        request: RequestId,
    },
    MetricsSample,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::RequestArrival(_) => "request_arrival",
            EventKind::BatchFlush(_) => "batch_flush",
            EventKind::StreamTick { .. } => "stream_tick",
            EventKind::StreamEnd { .. } => "stream_end",
            EventKind::MetricsSample => "metrics_sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, seq)
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
        seq
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub policy: Policy,
    pub seed: u64,
    pub trace: MetricsTrace,
    pub requests: Vec<RequestLog>,
    pub events_dispatched: u64,
    /// Exact maxima over every event, not just the samples.
    pub peak_concurrent_users: u64,
    pub peak_streams: u64,
}

struct Simulation<'a> {
    cfg: &'a SimConfig,
    requests: Vec<Request>,
    engine: EngineState,
    queue: EventQueue,
    trace: MetricsTrace,
    dispatched: u64,
    last_time: f64,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        if !(cfg.sample_interval.is_finite() && cfg.sample_interval > 0.0) {
            return Err(Error::Config("sample_interval must be > 0".into()));
        }
        let catalog = build_catalog(&cfg.workload)?;
        let requests = generate_requests(&cfg.workload, &catalog)?;
        let prefix_floor = catalog.iter().map(|v| v.prefix_blocks).min().unwrap_or(0);
        if cfg.engine.policy == Policy::Dynamic && prefix_floor < cfg.engine.min_blocks {
            return Err(Error::Config(format!(
                "shortest prefix ({prefix_floor} blocks) is below min_blocks ({})",
                cfg.engine.min_blocks
            )));
        }
        let engine = EngineState::new(cfg.engine.clone(), catalog)?;

        let mut queue = EventQueue::new();
        for (i, r) in requests.iter().enumerate() {
            queue.schedule(r.arrival_time, EventKind::RequestArrival(i));
        }
        let samples = (cfg.workload.duration / cfg.sample_interval + 1e-9).floor() as u64;
        for k in 0..=samples {
            queue.schedule(k as f64 * cfg.sample_interval, EventKind::MetricsSample);
        }
        Ok(Self {
            cfg,
            requests,
            engine,
            queue,
            trace: MetricsTrace::default(),
            dispatched: 0,
            last_time: f64::NEG_INFINITY,
        })
    }

    fn schedule(&mut self, followups: Vec<Followup>) {
        for f in followups {
            match f {
                Followup::FlushBatch { video_id, at } => {
                    self.queue.schedule(at, EventKind::BatchFlush(video_id));
                }
                Followup::Detach {
                    stream,
                    request,
                    reason,
                    at,
                } => {
                    let kind = match reason {
                        DetachReason::PrefixBoundary => EventKind::StreamTick { stream, request },
                        DetachReason::EndOfTitle => EventKind::StreamEnd { stream, request },
                    };
                    self.queue.schedule(at, kind);
                }
            }
        }
    }

    fn sample(&mut self, now: f64) {
        let c = self.engine.counters();
        let hit_ratio = if c.requests == 0 {
            0.0
        } else {
            c.hits as f64 / c.requests as f64
        };
        let mean_startup_latency = if c.served == 0 {
            0.0
        } else {
            c.latency_sum / c.served as f64
        };
        self.trace.samples.push(MetricsSample {
            time: now,
            buffer_utilization: self.engine.pool().utilization(),
            hit_ratio,
            prefixes_buffered: self.engine.prefixes_buffered() as u64,
            concurrent_users: self.engine.concurrent_users(),
            rejections: c.rejections,
            mean_startup_latency,
        });
    }

    fn dispatch(&mut self, event: Event) -> Result<()> {
        let now = event.time;
        if now < self.last_time {
            return Err(self.violation(&event, format!("time went back from {}", self.last_time)));
        }
        self.last_time = now;
        match event.kind {
            EventKind::RequestArrival(i) => {
                let request = self.requests[i].clone();
                let (_, followups) = self.engine.on_request(&request, now)?;
                self.schedule(followups);
            }
            EventKind::BatchFlush(video) => {
                let (_, followups) = self.engine.flush_batch(video, now)?;
                self.schedule(followups);
            }
            EventKind::StreamTick { stream, request }
            | EventKind::StreamEnd { stream, request } => {
                self.engine.detach(stream, request, now)?;
            }
            EventKind::MetricsSample => self.sample(now),
        }
        self.dispatched += 1;
        if self.cfg.self_check {
            self.engine
                .check_invariants(now)
                .map_err(|e| self.violation(&event, e.to_string()))?;
        }
        Ok(())
    }

    fn violation(&self, event: &Event, message: String) -> Error {
        Error::Invariant {
            time: event.time,
            event: event.kind.name(),
            message,
        }
    }

    fn run(mut self) -> Result<RunReport> {
        let end = self.cfg.workload.duration;
        while self.queue.peek_time().is_some_and(|t| t <= end) {
            let event = self.queue.pop().expect("peeked");
            self.dispatch(event)?;
        }
        let counters = self.engine.counters().clone();
        Ok(RunReport {
            policy: self.cfg.engine.policy,
            seed: self.cfg.workload.seed,
            trace: self.trace,
            requests: self.engine.into_request_log(),
            events_dispatched: self.dispatched,
            peak_concurrent_users: counters.peak_concurrent_users,
            peak_streams: counters.peak_streams,
        })
    }
}

/// Runs one simulation to `duration`, sampling every `sample_interval`.
pub fn run(cfg: &SimConfig) -> Result<RunReport> {
    Simulation::new(cfg)?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: Policy,
    pub runs: usize,
    pub mean_final_hit_ratio: f64,
    pub mean_peak_prefixes: f64,
    pub mean_peak_users: f64,
    pub mean_rejections: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Sorted by (policy, seed).
    pub runs: Vec<RunReport>,
    pub summary: Vec<PolicySummary>,
}

impl Comparison {
    pub fn run_for(&self, policy: Policy, seed: u64) -> Option<&RunReport> {
        self.runs
            .iter()
            .find(|r| r.policy == policy && r.seed == seed)
    }
}

fn policy_rank(p: Policy) -> u8 {
    match p {
        Policy::Dynamic => 0,
        Policy::Static => 1,
    }
}

/// Runs every (policy, seed) pair on the same workloads.
pub fn run_comparison(cfg: &SimConfig, policies: &[Policy], seeds: &[u64]) -> Result<Comparison> {
    if policies.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "comparison needs at least one policy and one seed".into(),
        ));
    }
    let jobs: Vec<SimConfig> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| cfg.with_policy(p).with_seed(s)))
        .collect();
    let mut runs = jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (policy_rank(r.policy), r.seed));

    let summary = policies
        .iter()
        .map(|&policy| {
            let mine: Vec<&RunReport> = runs.iter().filter(|r| r.policy == policy).collect();
            let n = mine.len() as f64;
            let mean = |f: &dyn Fn(&RunReport) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
            PolicySummary {
                policy,
                runs: mine.len(),
                mean_final_hit_ratio: mean(&|r| r.trace.final_hit_ratio()),
                mean_peak_prefixes: mean(&|r| r.trace.peak_prefixes() as f64),
                mean_peak_users: mean(&|r| r.trace.peak_users() as f64),
                mean_rejections: mean(&|r| r.trace.total_rejections() as f64),
            }
        })
        .collect();
    Ok(Comparison { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_seq() {
        let mut q = EventQueue::new();
        q.schedule(5.0, EventKind::MetricsSample);
        q.schedule(1.0, EventKind::BatchFlush(VideoId(1)));
        q.schedule(1.0, EventKind::BatchFlush(VideoId(2)));
        q.schedule(0.5, EventKind::MetricsSample);
        let order: Vec<(f64, u64)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.seq))
            .collect();
        assert_eq!(order, vec![(0.5, 3), (1.0, 1), (1.0, 2), (5.0, 0)]);
    }

    #[test]
    fn idle_system_stays_empty() {
        let mut cfg = SimConfig::default();
        cfg.workload.mean_interarrival = 1e12;
        let report = run(&cfg).unwrap();
        assert!(report.requests.is_empty());
        assert_eq!(report.trace.samples.len(), 151);
        assert!(report
            .trace
            .samples
            .iter()
            .all(|s| s.buffer_utilization == 0.0));
    }

    #[test]
    fn default_run_samples_every_ten_seconds() {
        let report = run(&SimConfig::default()).unwrap();
        let times: Vec<f64> = report.trace.samples.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 151);
        assert_eq!(times[0], 0.0);
        assert_eq!(times[150], 1500.0);
        assert!(times.windows(2).all(|w| w[1] - w[0] == 10.0));
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = SimConfig::default();
        cfg.workload.mean_interarrival = 5.0;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.requests, b.requests);
    }

    #[test]
    fn self_check_passes_on_busy_run() {
        let mut cfg = SimConfig::default();
        cfg.workload.mean_interarrival = 2.0;
        cfg.self_check = true;
        for policy in [Policy::Dynamic, Policy::Static] {
            run(&cfg.with_policy(policy)).unwrap();
        }
    }

    #[test]
    fn comparison_pairs_by_seed() {
        let cfg = SimConfig::default();
        let cmp = run_comparison(&cfg, &[Policy::Static, Policy::Dynamic], &[3, 1, 2]).unwrap();
        assert_eq!(cmp.runs.len(), 6);
        let keys: Vec<_> = cmp.runs.iter().map(|r| (r.policy, r.seed)).collect();
        assert_eq!(keys[0], (Policy::Dynamic, 1));
        assert_eq!(keys[5], (Policy::Static, 3));
        let d = cmp.run_for(Policy::Dynamic, 2).unwrap();
        let s = cmp.run_for(Policy::Static, 2).unwrap();
        let arrivals = |r: &RunReport| {
            r.requests
                .iter()
                .map(|l| (l.video_id, l.arrival_time))
                .collect::<Vec<_>>()
        };
        assert_eq!(arrivals(d), arrivals(s));
        assert!(run_comparison(&cfg, &[], &[1]).is_err());
    }
}
