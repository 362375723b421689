//! SVG charts rendered from saved traces. Nothing here runs a simulation.
//!
//! Trace files follow `{policy}_{mode}_seed{N}.csv`, where mode is
//! `multicast` or `unicast`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::allocator::Policy;
use crate::error::{Error, Result};
use crate::trace::{MetricsSample, MetricsTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceKey {
    pub policy: Policy,
    pub multicast: bool,
    pub seed: u64,
}

impl TraceKey {
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_seed{}.csv",
            self.policy,
            mode(self.multicast),
            self.seed
        )
    }

    pub fn parse(file_name: &str) -> Option<Self> {
        let stem = file_name.strip_suffix(".csv")?;
        let mut parts = stem.splitn(3, '_');
        let policy = parts.next()?.parse().ok()?;
        let multicast = match parts.next()? {
            "multicast" => true,
            "unicast" => false,
            _ => return None,
        };
        let seed = parts.next()?.strip_prefix("seed")?.parse().ok()?;
        Some(Self {
            policy,
            multicast,
            seed,
        })
    }
}

fn mode(multicast: bool) -> &'static str {
    if multicast {
        "multicast"
    } else {
        "unicast"
    }
}

/// Reads every trace file in `dir` whose name parses as a [`TraceKey`].
pub fn load_traces(dir: &Path) -> Result<BTreeMap<TraceKey, MetricsTrace>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut traces = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let Some(key) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(TraceKey::parse)
        else {
            continue;
        };
        let trace = MetricsTrace::load(&path)
            .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
        traces.insert(key, trace);
    }
    if traces.is_empty() {
        return Err(Error::Trace(format!("no trace CSVs in {}", dir.display())));
    }
    Ok(traces)
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

/// Per-sample mean over the seeds of one (policy, mode) group, truncated to
/// the shortest trace.
fn mean_series(
    traces: &BTreeMap<TraceKey, MetricsTrace>,
    policy: Policy,
    multicast: bool,
    metric: fn(&MetricsSample) -> f64,
) -> Option<Series> {
    let group: Vec<&MetricsTrace> = traces
        .iter()
        .filter(|(k, _)| k.policy == policy && k.multicast == multicast)
        .map(|(_, t)| t)
        .collect();
    let len = group.iter().map(|t| t.samples.len()).min()?;
    if len == 0 {
        return None;
    }
    let points = (0..len)
        .map(|i| {
            let sum: f64 = group.iter().map(|t| metric(&t.samples[i])).sum();
            (group[0].samples[i].time, sum / group.len() as f64)
        })
        .collect();
    let seeds = if group.len() == 1 {
        "1 seed".to_string()
    } else {
        format!("{} seeds", group.len())
    };
    Some(Series {
        label: format!("{policy} {} ({seeds})", mode(multicast)),
        points,
    })
}

fn draw(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Io(format!("{}: {e}", path.display()));
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0, f64::max)
        .max(1.0);
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.1 } else { 1.0 };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(&e))?;
    let colors = [BLUE, RED, GREEN, MAGENTA];
    for (s, color) in series.iter().zip(colors.iter().cycle()) {
        let color = *color;
        chart
            .draw_series(LineSeries::new(
                s.points.iter().copied(),
                color.stroke_width(2),
            ))
            .map_err(|e| plot_err(&e))?
            .label(s.label.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Which mode the policy comparisons use: multicast when present.
fn comparison_mode(traces: &BTreeMap<TraceKey, MetricsTrace>) -> bool {
    traces.keys().any(|k| k.multicast)
}

/// Renders the four charts into `out_dir` and returns their paths.
pub fn render_all(
    traces: &BTreeMap<TraceKey, MetricsTrace>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let mode = comparison_mode(traces);
    let policies = [Policy::Dynamic, Policy::Static];
    let by_policy = |metric: fn(&MetricsSample) -> f64| -> Vec<Series> {
        policies
            .iter()
            .filter_map(|&p| mean_series(traces, p, mode, metric))
            .collect()
    };
    let users: Vec<Series> = [true, false]
        .iter()
        .filter_map(|&m| {
            mean_series(traces, Policy::Dynamic, m, |s| s.concurrent_users as f64)
                .or_else(|| mean_series(traces, Policy::Static, m, |s| s.concurrent_users as f64))
        })
        .collect();

    let charts: [(&str, &str, &str, Vec<Series>); 4] = [
        (
            "utilization.svg",
            "Buffer utilization",
            "used fraction of pool",
            by_policy(|s| s.buffer_utilization),
        ),
        (
            "hit_ratio.svg",
            "Hit ratio",
            "cumulative hit ratio",
            by_policy(|s| s.hit_ratio),
        ),
        (
            "prefixes.svg",
            "Prefixes buffered",
            "titles with a cached prefix",
            by_policy(|s| s.prefixes_buffered as f64),
        ),
        ("concurrent_users.svg", "Concurrent users", "viewers", users),
    ];
    let mut written = Vec::new();
    for (file, title, y_label, series) in charts {
        let path = out_dir.join(file);
        draw(&path, title, y_label, &series)?;
        written.push(path);
    }
    Ok(written)
}
