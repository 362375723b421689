//! The commands behind the `vodsim` binary, kept here so they can be called
//! and tested without spawning a process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::allocator::Policy;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::plot::{self, TraceKey};
use crate::sim::{self, RunReport};

pub const OUT_ENV: &str = "VODSIM_OUT";
pub const DEFAULT_OUT: &str = "vodsim-out";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Flag, then config file, then `VODSIM_OUT`, then [`DEFAULT_OUT`].
pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .or_else(|| {
            std::env::var_os(OUT_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn key_of(report: &RunReport, multicast: bool) -> TraceKey {
    TraceKey {
        policy: report.policy,
        multicast,
        seed: report.seed,
    }
}

pub fn summary_line(report: &RunReport, multicast: bool, csv: &Path) -> String {
    let t = &report.trace;
    format!(
        "policy={} mode={} seed={} requests={} hit_ratio={:.4} peak_utilization={:.4} peak_prefixes={} peak_users={} rejections={} mean_startup_latency={:.4} events={} csv={}",
        report.policy,
        if multicast { "multicast" } else { "unicast" },
        report.seed,
        report.requests.len(),
        t.final_hit_ratio(),
        t.peak_utilization(),
        t.peak_prefixes(),
        report.peak_concurrent_users,
        t.total_rejections(),
        t.last().map_or(0.0, |s| s.mean_startup_latency),
        report.events_dispatched,
        csv.display(),
    )
}

/// One run per configured seed. Returns the stdout summary lines.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    ensure_dir(out)?;
    let multicast = cfg.sim.engine.multicast;
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let report = sim::run(&cfg.sim.with_seed(seed))?;
        let path = out.join(key_of(&report, multicast).file_name());
        report.trace.save(&path)?;
        lines.push(summary_line(&report, multicast, &path));
    }
    Ok(lines)
}

pub const SUMMARY_HEADER: &str = "policy,mode,seed,requests,final_hit_ratio,peak_utilization,peak_prefixes,peak_concurrent_users,rejections,mean_startup_latency,events";

fn summary_row(report: &RunReport, multicast: bool) -> String {
    let t = &report.trace;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        report.policy,
        if multicast { "multicast" } else { "unicast" },
        report.seed,
        report.requests.len(),
        t.final_hit_ratio(),
        t.peak_utilization(),
        t.peak_prefixes(),
        report.peak_concurrent_users,
        t.total_rejections(),
        t.last().map_or(0.0, |s| s.mean_startup_latency),
        report.events_dispatched,
    )
}

/// Every (policy, mode, seed) combination on identical workloads. Writes one
/// CSV per run plus [`SUMMARY_FILE`] and returns per-group mean lines.
pub fn cmd_compare(
    cfg: &RunConfig,
    policies: &[Policy],
    modes: &[bool],
    out: &Path,
) -> Result<Vec<String>> {
    ensure_dir(out)?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut lines = Vec::new();
    for &multicast in modes {
        let mut sim_cfg = cfg.sim.clone();
        sim_cfg.engine.multicast = multicast;
        let comparison = sim::run_comparison(&sim_cfg, policies, &cfg.seeds)?;
        for report in &comparison.runs {
            report
                .trace
                .save(&out.join(key_of(report, multicast).file_name()))?;
            summary.push_str(&summary_row(report, multicast));
            summary.push('\n');
        }
        for s in &comparison.summary {
            let mut line = String::new();
            let _ = write!(
                line,
                "policy={} mode={} runs={} mean_hit_ratio={:.4} mean_peak_prefixes={:.2} mean_peak_users={:.2} mean_rejections={:.2}",
                s.policy,
                if multicast { "multicast" } else { "unicast" },
                s.runs,
                s.mean_final_hit_ratio,
                s.mean_peak_prefixes,
                s.mean_peak_users,
                s.mean_rejections,
            );
            lines.push(line);
        }
    }
    let path = out.join(SUMMARY_FILE);
    std::fs::write(&path, summary).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(lines)
}

/// Renders the four charts from the traces in `input` into `out`.
pub fn cmd_plot(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let traces = plot::load_traces(input)?;
    plot::render_all(&traces, out)
}
