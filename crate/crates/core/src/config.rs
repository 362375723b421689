//! Plain-text run configuration: one `key = value` pair per line, `#`
//! starts a comment. Absent keys keep their defaults.

use std::path::PathBuf;

use crate::allocator::{EvictionGuard, Policy};
use crate::error::{Error, Result};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Cache block size in MB. Only used for reporting; all accounting is in
    /// blocks.
    pub block_size_mb: u64,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            seeds: vec![sim.workload.seed],
            sim,
            block_size_mb: 1,
            output: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "total_blocks",
    "block_size_mb",
    "prefix_share",
    "min_blocks",
    "num_videos",
    "video_size_min",
    "video_size_max",
    "prefix_fraction",
    "mean_interarrival",
    "duration",
    "disk_bandwidth",
    "disk_startup_latency",
    "network_slots",
    "central_link_rate",
    "max_startup_delay",
    "bitrate",
    "early_termination_prob",
    "zipf_skew",
    "policy",
    "eviction_guard",
    "static_streams",
    "multicast",
    "interval_caching",
    "seed",
    "seeds",
    "sample_interval",
    "self_check",
    "output",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected on|off, got {value:?}"
        ))),
    }
}

fn positive(key: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Config(format!("{key} must be > 0, got {value}")))
    }
}

fn at_least(key: &str, value: u64, min: u64) -> Result<u64> {
    if value >= min {
        Ok(value)
    } else {
        Err(Error::Config(format!(
            "{key} must be >= {min}, got {value}"
        )))
    }
}

fn in_unit(key: &str, value: f64, open: bool) -> Result<f64> {
    let ok = if open {
        value > 0.0 && value < 1.0
    } else {
        (0.0..=1.0).contains(&value)
    };
    if ok {
        Ok(value)
    } else if open {
        Err(Error::Config(format!(
            "{key} must be in (0, 1), got {value}"
        )))
    } else {
        Err(Error::Config(format!(
            "{key} must be in [0, 1], got {value}"
        )))
    }
}

/// `N` or the inclusive range `N..M`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = parse_num("seeds", lo.trim())?;
        let hi: u64 = parse_num("seeds", hi.trim())?;
        if lo > hi {
            return Err(Error::Config(format!("seeds: empty range {value}")));
        }
        Ok((lo..=hi).collect())
    } else {
        Ok(vec![parse_num("seeds", value)?])
    }
}

impl RunConfig {
    /// Sets one key from its textual value, validating the range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.sim.workload;
        let e = &mut self.sim.engine;
        match key {
            "total_blocks" => e.total_blocks = at_least(key, parse_num(key, value)?, 2)?,
            "block_size_mb" => self.block_size_mb = at_least(key, parse_num(key, value)?, 1)?,
            "prefix_share" => e.prefix_share = in_unit(key, parse_num(key, value)?, true)?,
            "min_blocks" => e.min_blocks = at_least(key, parse_num(key, value)?, 1)?,
            "num_videos" => w.num_videos = at_least(key, parse_num(key, value)?, 1)? as u32,
            "video_size_min" => {
                w.video_size_range_blocks.0 = at_least(key, parse_num(key, value)?, 1)?
            }
            "video_size_max" => {
                w.video_size_range_blocks.1 = at_least(key, parse_num(key, value)?, 1)?
            }
            "prefix_fraction" => {
                let f: f64 = parse_num(key, value)?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("{key} must be in (0, 1], got {f}")));
                }
                w.prefix_fraction = f;
            }
            "mean_interarrival" => w.mean_interarrival = positive(key, parse_num(key, value)?)?,
            "duration" => w.duration = positive(key, parse_num(key, value)?)?,
            "disk_bandwidth" => e.disk_bandwidth = positive(key, parse_num(key, value)?)?,
            "disk_startup_latency" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!("{key} must be >= 0, got {v}")));
                }
                e.disk_startup_latency = v;
            }
            "network_slots" => e.network_slots = at_least(key, parse_num(key, value)?, 1)? as u32,
            "central_link_rate" => e.central_link_rate = positive(key, parse_num(key, value)?)?,
            "max_startup_delay" => w.max_startup_delay = positive(key, parse_num(key, value)?)?,
            "bitrate" => w.bitrate = positive(key, parse_num(key, value)?)?,
            "early_termination_prob" => {
                w.early_termination_prob = in_unit(key, parse_num(key, value)?, false)?
            }
            "zipf_skew" => w.zipf_skew = positive(key, parse_num(key, value)?)?,
            "policy" => e.policy = value.parse::<Policy>()?,
            "eviction_guard" => e.guard = value.parse::<EvictionGuard>()?,
            "static_streams" => e.static_streams = at_least(key, parse_num(key, value)?, 1)? as u32,
            "multicast" => e.multicast = parse_switch(key, value)?,
            "interval_caching" => e.interval_caching = parse_switch(key, value)?,
            "seed" => {
                let seed = parse_num(key, value)?;
                w.seed = seed;
                self.seeds = vec![seed];
            }
            "seeds" => {
                self.seeds = parse_seeds(value)?;
                w.seed = self.seeds[0];
            }
            "sample_interval" => self.sim.sample_interval = positive(key, parse_num(key, value)?)?,
            "self_check" => self.sim.self_check = parse_switch(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Cross-field checks that a single key cannot make.
    pub fn validate(&self) -> Result<()> {
        self.sim.workload.validate()?;
        let (min, _) = self.sim.workload.video_size_range_blocks;
        let shortest_prefix = (min as f64 * self.sim.workload.prefix_fraction).round() as u64;
        if self.sim.engine.policy == Policy::Dynamic && shortest_prefix < self.sim.engine.min_blocks
        {
            return Err(Error::Config(format!(
                "min_blocks {} exceeds the shortest prefix ({shortest_prefix} blocks)",
                self.sim.engine.min_blocks
            )));
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::ConfigLine {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        cfg.set(key, value).map_err(|e| Error::ConfigLine {
            line,
            message: match e {
                Error::Config(m) => m,
                other => other.to_string(),
            },
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
