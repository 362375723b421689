//! Video catalog and synthetic request arrivals.
//!
//! Titles are indexed by popularity rank: `VideoId(0)` is rank 1, the hottest
//! title under the Zipf law. Arrivals form a Poisson process and each request
//! independently decides whether the viewer quits after the prefix.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Zipf};

use crate::error::{Error, Result};

/// Zipf exponent whose top-20-of-100 demand share is ~0.69. A bisection on the
/// analytic share for a 0.70 target lands at 1.012; 1.0 is inside the band.
pub const DEFAULT_ZIPF_SKEW: f64 = 1.0;

const CATALOG_STREAM: u64 = 0;
const REQUEST_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VideoId(pub u32);

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: VideoId,
    pub size_blocks: u64,
    pub prefix_blocks: u64,
    /// Blocks consumed per second of playback.
    pub bitrate: f64,
    pub hits: u64,
}

impl Video {
    /// Seconds of playback needed to consume `blocks`.
    pub fn playback_secs(&self, blocks: u64) -> f64 {
        blocks as f64 / self.bitrate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: RequestId,
    pub video_id: VideoId,
    pub arrival_time: f64,
    pub deadline: f64,
    pub terminates_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub num_videos: u32,
    pub video_size_range_blocks: (u64, u64),
    /// Prefix length as a fraction of the full title.
    pub prefix_fraction: f64,
    pub bitrate: f64,
    pub mean_interarrival: f64,
    pub zipf_skew: f64,
    pub early_termination_prob: f64,
    pub max_startup_delay: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            num_videos: 100,
            video_size_range_blocks: (300, 500),
            prefix_fraction: 0.5,
            bitrate: 0.5,
            mean_interarrival: 60.0,
            zipf_skew: DEFAULT_ZIPF_SKEW,
            early_termination_prob: 0.9,
            max_startup_delay: 5.0,
            duration: 1500.0,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let (min, max) = self.video_size_range_blocks;
        if self.num_videos == 0 {
            return Err(Error::Config("num_videos must be >= 1".into()));
        }
        if min == 0 || min > max {
            return Err(Error::Config(format!(
                "invalid video size range ({min}, {max})"
            )));
        }
        if !(self.prefix_fraction > 0.0 && self.prefix_fraction <= 1.0) {
            return Err(Error::Config("prefix_fraction must be in (0, 1]".into()));
        }
        for (name, value) in [
            ("bitrate", self.bitrate),
            ("mean_interarrival", self.mean_interarrival),
            ("zipf_skew", self.zipf_skew),
            ("max_startup_delay", self.max_startup_delay),
            ("duration", self.duration),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.early_termination_prob) {
            return Err(Error::Config(
                "early_termination_prob must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

fn prefix_len(size_blocks: u64, fraction: f64) -> u64 {
    ((size_blocks as f64 * fraction).round() as u64).clamp(1, size_blocks)
}

/// Builds `num_videos` titles with sizes drawn uniformly from the configured
/// range. Index order is popularity rank order.
pub fn build_catalog(cfg: &WorkloadConfig) -> Result<Vec<Video>> {
    cfg.validate()?;
    let (min, max) = cfg.video_size_range_blocks;
    let mut rng = cfg.rng(CATALOG_STREAM);
    Ok((0..cfg.num_videos)
        .map(|i| {
            let size_blocks = rng.random_range(min..=max);
            Video {
                id: VideoId(i),
                size_blocks,
                prefix_blocks: prefix_len(size_blocks, cfg.prefix_fraction),
                bitrate: cfg.bitrate,
                hits: 0,
            }
        })
        .collect())
}

/// Poisson arrivals on `[0, duration)` over a Zipf-ranked catalog.
pub fn generate_requests(cfg: &WorkloadConfig, catalog: &[Video]) -> Result<Vec<Request>> {
    cfg.validate()?;
    if catalog.is_empty() {
        return Err(Error::Config("catalog is empty".into()));
    }
    let gaps = Exp::new(1.0 / cfg.mean_interarrival)
        .map_err(|e| Error::Config(format!("mean_interarrival: {e}")))?;
    let ranks = Zipf::new(catalog.len() as f64, cfg.zipf_skew)
        .map_err(|e| Error::Config(format!("zipf_skew: {e}")))?;
    let quits = Bernoulli::new(cfg.early_termination_prob)
        .map_err(|e| Error::Config(format!("early_termination_prob: {e}")))?;

    let mut rng = cfg.rng(REQUEST_STREAM);
    let mut requests = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= cfg.duration {
            break;
        }
        let rank = ranks.sample(&mut rng) as usize;
        let video = &catalog[rank.clamp(1, catalog.len()) - 1];
        requests.push(Request {
            id: RequestId(requests.len() as u64),
            video_id: video.id,
            arrival_time: t,
            deadline: t + cfg.max_startup_delay,
            terminates_early: quits.sample(&mut rng),
        });
    }
    Ok(requests)
}

/// Bumps the popularity counter of `id`.
pub fn record_hit(catalog: &mut [Video], id: VideoId) -> Result<&Video> {
    let video = catalog
        .get_mut(id.0 as usize)
        .filter(|v| v.id == id)
        .ok_or(Error::UnknownVideo(id))?;
    video.hits += 1;
    Ok(video)
}

/// Share of `requests` addressed to the `top` hottest titles.
pub fn top_share(requests: &[Request], top: u32) -> f64 {
    if requests.is_empty() {
        return 0.0;
    }
    let hot = requests.iter().filter(|r| r.video_id.0 < top).count();
    hot as f64 / requests.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_sizes_stay_in_range() {
        let cfg = WorkloadConfig::default();
        let catalog = build_catalog(&cfg).unwrap();
        assert_eq!(catalog.len(), 100);
        for v in &catalog {
            assert!((300..=500).contains(&v.size_blocks));
            assert!(v.prefix_blocks > 0 && v.prefix_blocks <= v.size_blocks);
            assert_eq!(v.hits, 0);
        }
    }

    #[test]
    fn degenerate_range_gives_exact_size() {
        let cfg = WorkloadConfig {
            num_videos: 1,
            video_size_range_blocks: (300, 300),
            ..Default::default()
        };
        let catalog = build_catalog(&cfg).unwrap();
        assert_eq!(catalog.len(), 1);
        assert_eq!(catalog[0].size_blocks, 300);
        assert_eq!(catalog[0].prefix_blocks, 150);
    }

    #[test]
    fn inverted_range_is_rejected() {
        let cfg = WorkloadConfig {
            video_size_range_blocks: (500, 300),
            ..Default::default()
        };
        assert!(matches!(build_catalog(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_catalog_and_requests() {
        let cfg = WorkloadConfig {
            mean_interarrival: 1.0,
            ..Default::default()
        };
        let a = build_catalog(&cfg).unwrap();
        let b = build_catalog(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            generate_requests(&cfg, &a).unwrap(),
            generate_requests(&cfg, &b).unwrap()
        );
        let other = WorkloadConfig {
            seed: 2,
            ..cfg.clone()
        };
        assert_ne!(a, build_catalog(&other).unwrap());
    }

    #[test]
    fn requests_are_time_ordered() {
        let cfg = WorkloadConfig {
            mean_interarrival: 0.5,
            ..Default::default()
        };
        let catalog = build_catalog(&cfg).unwrap();
        let reqs = generate_requests(&cfg, &catalog).unwrap();
        assert!(reqs.len() > 1000);
        for w in reqs.windows(2) {
            assert!(w[0].arrival_time <= w[1].arrival_time);
            assert!(w[0].id < w[1].id);
        }
        for r in &reqs {
            assert!(r.deadline > r.arrival_time);
            assert!(r.arrival_time < cfg.duration);
        }
    }

    #[test]
    fn no_early_termination_when_probability_zero() {
        let cfg = WorkloadConfig {
            mean_interarrival: 0.5,
            early_termination_prob: 0.0,
            ..Default::default()
        };
        let catalog = build_catalog(&cfg).unwrap();
        let reqs = generate_requests(&cfg, &catalog).unwrap();
        assert!(!reqs.is_empty());
        assert!(reqs.iter().all(|r| !r.terminates_early));
    }

    #[test]
    fn empty_catalog_is_rejected() {
        let cfg = WorkloadConfig::default();
        assert!(matches!(
            generate_requests(&cfg, &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hits_count_up() {
        let cfg = WorkloadConfig {
            num_videos: 2,
            ..Default::default()
        };
        let mut catalog = build_catalog(&cfg).unwrap();
        assert_eq!(record_hit(&mut catalog, VideoId(0)).unwrap().hits, 1);
        record_hit(&mut catalog, VideoId(0)).unwrap();
        record_hit(&mut catalog, VideoId(1)).unwrap();
        assert!(catalog[0].hits > catalog[1].hits);
        for _ in 0..5 {
            record_hit(&mut catalog, VideoId(1)).unwrap();
        }
        assert_eq!(catalog[1].hits, 6);
        assert_eq!(
            record_hit(&mut catalog, VideoId(7)).unwrap_err(),
            Error::UnknownVideo(VideoId(7))
        );
    }
}
