//! Time interval analyser emulation: tag file formats and the coincidence
//! histogram.
//!
//! The binary tag format is a 16-byte header followed by packed
//! little-endian records:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FTAG"
//! 4       2     format version (1)
//! 6       2     reserved, zero
//! 8       8     record count
//! 16      9·n   records: detector (u8, 1 or 2), timestamp_ps (u64)
//! ```
//!
//! Files ending in `.csv` hold the same records as `detector,timestamp_ps`
//! rows under a header line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::montecarlo::SimulationResult;
use crate::scenario::TiaSpec;

pub const MAGIC: [u8; 4] = *b"FTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;
pub const CSV_HEADER: &str = "detector,timestamp_ps";

#[derive(Debug, Error)]
pub enum TimetagError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a tag file: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tag file version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated tag file: header announces {expected} records, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("tag file has {0} bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {index}: detector id {id} is not 1 or 2")]
    InvalidDetector { index: usize, id: u64 },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("stream {stream} is not sorted: timestamp at index {index} precedes its predecessor")]
    Unsorted { stream: usize, index: usize },
    #[error("malformed histogram file: {0}")]
    Histogram(String),
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    /// 1 or 2.
    pub detector: u8,
    /// Picoseconds since the start of the acquisition.
    pub timestamp: u64,
}

impl TimeTag {
    pub fn new(detector: u8, timestamp: u64) -> Self {
        Self { detector, timestamp }
    }
}

/// Per-detector timestamp streams as read from a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStreams {
    pub streams: [Vec<u64>; 2],
    /// Set when a stream was out of order on disk and had to be sorted.
    pub resorted: bool,
}

impl TagStreams {
    pub fn from_tags(tags: &[TimeTag]) -> Result<Self, TimetagError> {
        let mut streams = [Vec::new(), Vec::new()];
        for (index, tag) in tags.iter().enumerate() {
            match tag.detector {
                1 | 2 => streams[tag.detector as usize - 1].push(tag.timestamp),
                id => return Err(TimetagError::InvalidDetector { index, id: id as u64 }),
            }
        }
        let mut resorted = false;
        for (d, s) in streams.iter_mut().enumerate() {
            if let Some(index) = first_unsorted(s) {
                log::warn!("detector {} stream out of order at record {index}; sorting", d + 1);
                s.sort_unstable();
                resorted = true;
            }
        }
        Ok(Self { streams, resorted })
    }

    pub fn to_tags(&self) -> Vec<TimeTag> {
        let mut tags: Vec<TimeTag> = self.streams[0]
            .iter()
            .map(|&t| TimeTag::new(1, t))
            .chain(self.streams[1].iter().map(|&t| TimeTag::new(2, t)))
            .collect();
        tags.sort_by_key(|t| (t.timestamp, t.detector));
        tags
    }
}

impl From<&SimulationResult> for TagStreams {
    fn from(r: &SimulationResult) -> Self {
        TagStreams {
            streams: [r.timestamps(0).to_vec(), r.timestamps(1).to_vec()],
            resorted: false,
        }
    }
}

fn first_unsorted(s: &[u64]) -> Option<usize> {
    s.windows(2).position(|w| w[1] < w[0]).map(|i| i + 1)
}

pub fn encode_binary<W: Write>(mut w: W, tags: &[TimeTag]) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(tags.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut record = [0u8; RECORD_LEN];
    for tag in tags {
        record[0] = tag.detector;
        record[1..].copy_from_slice(&tag.timestamp.to_le_bytes());
        w.write_all(&record)?;
    }
    w.flush()
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<TimeTag>, TimetagError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut m = [0u8; 4];
        let n = bytes.len().min(4);
        m[..n].copy_from_slice(&bytes[..n]);
        return Err(TimetagError::BadMagic(m));
    }
    if bytes.len() < HEADER_LEN {
        return Err(TimetagError::Truncated { expected: 0, found: 0 });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(TimetagError::UnsupportedVersion(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let body = &bytes[HEADER_LEN..];
    let found = (body.len() / RECORD_LEN) as u64;
    if found < count {
        return Err(TimetagError::Truncated { expected: count, found });
    }
    let extra = body.len() - count as usize * RECORD_LEN;
    if extra > 0 {
        return Err(TimetagError::TrailingBytes(extra));
    }
    Ok(body
        .chunks_exact(RECORD_LEN)
        .map(|r| TimeTag::new(r[0], u64::from_le_bytes(r[1..].try_into().expect("8-byte slice"))))
        .collect())
}

pub fn encode_csv<W: Write>(mut w: W, tags: &[TimeTag]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for t in tags {
        writeln!(w, "{},{}", t.detector, t.timestamp)?;
    }
    w.flush()
}

pub fn decode_csv<R: BufRead>(r: R) -> Result<Vec<TimeTag>, TimetagError> {
    let mut tags = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == CSV_HEADER) {
            continue;
        }
        let csv_err = |reason: String| TimetagError::Csv { line: i + 1, reason };
        let (d, t) = line
            .split_once(',')
            .ok_or_else(|| csv_err("expected `detector,timestamp_ps`".into()))?;
        let detector: u64 = d.trim().parse().map_err(|e| csv_err(format!("detector: {e}")))?;
        let timestamp: u64 = t.trim().parse().map_err(|e| csv_err(format!("timestamp: {e}")))?;
        if !(1..=2).contains(&detector) {
            return Err(TimetagError::InvalidDetector { index: tags.len(), id: detector });
        }
        tags.push(TimeTag::new(detector as u8, timestamp));
    }
    Ok(tags)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes tags in the format implied by the file extension.
pub fn write_tags(path: impl AsRef<Path>, tags: &[TimeTag]) -> Result<(), TimetagError> {
    let path = path.as_ref();
    let w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        encode_csv(w, tags)?;
    } else {
        encode_binary(w, tags)?;
    }
    Ok(())
}

pub fn write_result(path: impl AsRef<Path>, result: &SimulationResult) -> Result<(), TimetagError> {
    write_tags(path, &result.to_tags())
}

pub fn read_tags(path: impl AsRef<Path>) -> Result<TagStreams, TimetagError> {
    let path = path.as_ref();
    let tags = if is_csv(path) {
        decode_csv(BufReader::new(File::open(path)?))?
    } else {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        decode_binary(&bytes)?
    };
    TagStreams::from_tags(&tags)
}

/// Histogram of arrival-time differences `t₂ − t₁`.
///
/// Bins are centred on integer multiples of the bin width, so one bin is
/// centred exactly on Δt = 0 and bin edges sit at (k + 1/2)·width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceHistogram {
    bin_width: u64,
    window: u64,
    half_bins: usize,
    counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn new(bin_width: u64, window: u64) -> Self {
        assert!(bin_width > 0, "bin width must be positive");
        // enough bins that Δt = ±window still lands inside
        let half_bins = ((2 * window + bin_width) / (2 * bin_width)) as usize;
        Self {
            bin_width,
            window,
            half_bins,
            counts: vec![0; 2 * half_bins + 1],
        }
    }

    pub fn from_counts(bin_width: u64, window: u64, counts: Vec<u64>) -> Result<Self, TimetagError> {
        let mut h = Self::new(bin_width, window);
        if counts.len() != h.counts.len() {
            return Err(TimetagError::Histogram(format!(
                "expected {} bins for width {bin_width} and window {window}, got {}",
                h.counts.len(),
                counts.len()
            )));
        }
        h.counts = counts;
        Ok(h)
    }

    pub fn bin_width(&self) -> u64 {
        self.bin_width
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Index of the bin centred on Δt = 0.
    pub fn zero_index(&self) -> usize {
        self.half_bins
    }

    pub fn bin_center(&self, index: usize) -> i64 {
        (index as i64 - self.half_bins as i64) * self.bin_width as i64
    }

    /// Bin containing `dt`, if it lies inside the histogram range.
    pub fn bin_index(&self, dt: i64) -> Option<usize> {
        let w = self.bin_width as i64;
        // edges are assigned away from zero so that swapping the detectors mirrors exactly
        let k = dt.signum() * ((2 * dt.abs() + w) / (2 * w)) + self.half_bins as i64;
        (0..self.counts.len() as i64).contains(&k).then_some(k as usize)
    }

    pub fn total_coincidences(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// (bin centre, count) pairs in ascending Δt.
    pub fn bins(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (self.bin_center(i), c))
    }

    /// The histogram with Δt negated.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.counts.reverse();
        out
    }

    fn record(&mut self, dt: i64) {
        if let Some(k) = self.bin_index(dt) {
            self.counts[k] += 1;
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# bin_width_ps={} window_ps={}", self.bin_width, self.window)?;
        writeln!(w, "delta_t_ps,count")?;
        for (center, count) in self.bins() {
            writeln!(w, "{center},{count}")?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TimetagError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| TimetagError::Histogram("empty file".into()))??;
        let mut bin_width = None;
        let mut window = None;
        for item in header.trim_start_matches('#').split_whitespace() {
            match item.split_once('=') {
                Some(("bin_width_ps", v)) => bin_width = v.parse().ok(),
                Some(("window_ps", v)) => window = v.parse().ok(),
                _ => {}
            }
        }
        let (bin_width, window) = bin_width
            .zip(window)
            .ok_or_else(|| TimetagError::Histogram("missing bin_width_ps/window_ps header".into()))?;
        let mut counts = Vec::new();
        for line in lines {
            let line = line?;
            if line.starts_with("delta_t_ps") || line.trim().is_empty() {
                continue;
            }
            let count = line
                .split_once(',')
                .and_then(|(_, c)| c.trim().parse().ok())
                .ok_or_else(|| TimetagError::Histogram(format!("bad row `{line}`")))?;
            counts.push(count);
        }
        Self::from_counts(bin_width, window, counts)
    }
}

fn check_sorted(stream: usize, s: &[u64]) -> Result<(), TimetagError> {
    match first_unsorted(s) {
        Some(index) => Err(TimetagError::Unsorted { stream, index }),
        None => Ok(()),
    }
}

/// Full cross-correlation: every pair with |t₂ − t₁| ≤ window is counted.
///
/// Both inputs must be sorted. The sweep keeps a lower pointer into the
/// second stream, so the cost is linear in the input plus the number of
/// counted pairs.
pub fn correlate(tags1: &[u64], tags2: &[u64], tia: &TiaSpec) -> Result<CoincidenceHistogram, TimetagError> {
    check_sorted(1, tags1)?;
    check_sorted(2, tags2)?;
    Ok(correlate_sorted(tags1, tags2, tia))
}

fn correlate_sorted(tags1: &[u64], tags2: &[u64], tia: &TiaSpec) -> CoincidenceHistogram {
    let mut hist = CoincidenceHistogram::new(tia.bin_width_ps, tia.correlation_window_ps);
    let window = tia.correlation_window_ps;
    let mut lo = 0;
    for &t1 in tags1 {
        let min = t1.saturating_sub(window);
        while lo < tags2.len() && tags2[lo] < min {
            lo += 1;
        }
        let max = t1.saturating_add(window);
        for &t2 in &tags2[lo..] {
            if t2 > max {
                break;
            }
            hist.record(t2 as i64 - t1 as i64);
        }
    }
    hist
}

/// [`correlate`] over `parts` disjoint slices of the first stream, run in
/// parallel. Each slice sees the part of the second stream within one window
/// of its own range, so the result equals the unpartitioned histogram.
pub fn correlate_partitioned(
    tags1: &[u64],
    tags2: &[u64],
    tia: &TiaSpec,
    parts: usize,
) -> Result<CoincidenceHistogram, TimetagError> {
    check_sorted(1, tags1)?;
    check_sorted(2, tags2)?;
    let parts = parts.max(1);
    let size = tags1.len().div_ceil(parts).max(1);
    let window = tia.correlation_window_ps;
    let partials: Vec<CoincidenceHistogram> = tags1
        .par_chunks(size)
        .map(|chunk| {
            let lo = chunk[0].saturating_sub(window);
            let hi = chunk[chunk.len() - 1].saturating_add(window);
            let start = tags2.partition_point(|&t| t < lo);
            let end = tags2.partition_point(|&t| t <= hi);
            correlate_sorted(chunk, &tags2[start..end], tia)
        })
        .collect();
    let mut hist = CoincidenceHistogram::new(tia.bin_width_ps, window);
    for p in &partials {
        hist.merge(p);
    }
    Ok(hist)
}
