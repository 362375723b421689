//! Deterministic simulator of a video-on-demand proxy that caches title
//! prefixes sized by popularity, batches requests up to the first viewer's
//! startup deadline, shares streams through multicast and interval caching,
//! and admits streams against disk and network budgets.

pub mod allocator;
pub mod catalog;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod plot;
pub mod pool;
pub mod sim;
pub mod trace;

pub use allocator::{AllocationOutcome, AllocatorState, EvictionGuard, OutcomeKind, Policy};
pub use catalog::{Request, RequestId, Video, VideoId, WorkloadConfig};
pub use config::{parse_config, RunConfig};
pub use engine::{EngineConfig, EngineState};
pub use error::{Error, Result};
pub use pool::{BlockPool, Region};
pub use sim::{run, run_comparison, Comparison, RunReport, SimConfig};
pub use trace::{MetricsSample, MetricsTrace};
