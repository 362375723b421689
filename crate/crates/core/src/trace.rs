//! Metrics time series and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "time",
    "buffer_utilization",
    "hit_ratio",
    "prefixes_buffered",
    "concurrent_users",
    "rejections",
    "mean_startup_latency",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSample {
    pub time: f64,
    /// Used fraction of the whole pool, both regions.
    pub buffer_utilization: f64,
    /// Cumulative hits over cumulative requests.
    pub hit_ratio: f64,
    pub prefixes_buffered: u64,
    /// Viewers, not streams.
    pub concurrent_users: u64,
    pub rejections: u64,
    pub mean_startup_latency: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTrace {
    pub samples: Vec<MetricsSample>,
}

impl MetricsTrace {
    pub fn last(&self) -> Option<&MetricsSample> {
        self.samples.last()
    }

    pub fn final_hit_ratio(&self) -> f64 {
        self.last().map_or(0.0, |s| s.hit_ratio)
    }

    pub fn peak_utilization(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.buffer_utilization)
            .fold(0.0, f64::max)
    }

    pub fn peak_prefixes(&self) -> u64 {
        self.samples
            .iter()
            .map(|s| s.prefixes_buffered)
            .max()
            .unwrap_or(0)
    }

    pub fn peak_users(&self) -> u64 {
        self.samples
            .iter()
            .map(|s| s.concurrent_users)
            .max()
            .unwrap_or(0)
    }

    pub fn total_rejections(&self) -> u64 {
        self.last().map_or(0, |s| s.rejections)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(CSV_HEADER)?;
        for s in &self.samples {
            w.write_record([
                s.time.to_string(),
                s.buffer_utilization.to_string(),
                s.hit_ratio.to_string(),
                s.prefixes_buffered.to_string(),
                s.concurrent_users.to_string(),
                s.rejections.to_string(),
                s.mean_startup_latency.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Trace(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut samples = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let float = |i: usize| -> Result<f64> {
                record[i].parse().map_err(|_| {
                    Error::Trace(format!(
                        "line {line}: bad {} {:?}",
                        CSV_HEADER[i], &record[i]
                    ))
                })
            };
            let int = |i: usize| -> Result<u64> {
                record[i].parse().map_err(|_| {
                    Error::Trace(format!(
                        "line {line}: bad {} {:?}",
                        CSV_HEADER[i], &record[i]
                    ))
                })
            };
            if record.len() != CSV_HEADER.len() {
                return Err(Error::Trace(format!("line {line}: expected 7 fields")));
            }
            samples.push(MetricsSample {
                time: float(0)?,
                buffer_utilization: float(1)?,
                hit_ratio: float(2)?,
                prefixes_buffered: int(3)?,
                concurrent_users: int(4)?,
                rejections: int(5)?,
                mean_startup_latency: float(6)?,
            });
        }
        Ok(Self { samples })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }
}
