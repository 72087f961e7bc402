//! OSU-style latency and bandwidth sweeps over a running job.
//!
//! Rank `i < pairs` is the origin (sender) and rank `i + pairs` its target.
//! Every payload is a seeded pattern whose checksum the receiving side
//! verifies, so a run that delivers corrupt data fails instead of reporting
//! a number. Results are gathered on rank 0; other ranks return no records.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checksum::{checksum, fill_pattern};
use crate::error::{Error, Result};
use crate::queue::DEFAULT_CELL_SIZE;
use crate::rma::Window;
use crate::runtime::RankContext;

pub const DEFAULT_WINDOW: usize = 64;
/// Sizes above this run a tenth of the iterations.
pub const LARGE_MESSAGE: usize = 8192;
pub const MAX_DEFAULT_SIZE: usize = 8 << 20;

const TAG_DATA: u64 = 0xB0;
const TAG_ACK: u64 = 0xB1;
const TAG_RESULT: u64 = 0xB2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    OneSidedGet,
    OneSidedPut,
    TwoSided,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::OneSidedGet => "one_sided_get",
            Pattern::OneSidedPut => "one_sided_put",
            Pattern::TwoSided => "two_sided",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "one_sided_get" | "get" => Ok(Pattern::OneSidedGet),
            "one_sided_put" | "put" => Ok(Pattern::OneSidedPut),
            "two_sided" | "pingpong" | "ping_pong" => Ok(Pattern::TwoSided),
            _ => Err(Error::Config(format!(
                "unknown pattern {s:?} (one_sided_get, one_sided_put, two_sided)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Latency,
    Bandwidth,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Latency => "latency",
            Metric::Bandwidth => "bandwidth",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latency" | "lat" => Ok(Metric::Latency),
            "bandwidth" | "bw" => Ok(Metric::Bandwidth),
            _ => Err(Error::Config(format!("unknown metric {s:?} (latency, bandwidth)"))),
        }
    }
}

/// Powers of two from `lo` to `hi` inclusive; `lo` itself need not be one.
pub fn size_range(lo: usize, hi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if lo == 0 {
        out.push(0);
    }
    let mut s = lo.max(1);
    while s <= hi {
        out.push(s);
        s = match s.checked_mul(2) {
            Some(n) => n,
            None => break,
        };
    }
    out
}

/// Parses `a:b` (or a single size) with K/M/G suffixes.
pub fn parse_sizes(range: &str) -> Result<Vec<usize>> {
    let p = |s: &str| crate::units::parse_size(s).map(|n| n as usize).map_err(Error::Config);
    match range.split_once(':') {
        Some((a, b)) => {
            let (lo, hi) = (p(a)?, p(b)?);
            if lo > hi {
                return Err(Error::Config(format!("empty size range {range:?}")));
            }
            Ok(size_range(lo, hi))
        }
        None => Ok(vec![p(range)?]),
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub pattern: Pattern,
    pub metric: Metric,
    pub sizes: Vec<usize>,
    pub pairs: usize,
    pub warmup: usize,
    pub iters: usize,
    /// Messages in flight per bandwidth iteration.
    pub window: usize,
    pub cell_size: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(pattern: Pattern, metric: Metric) -> Self {
        let (warmup, iters) = match metric {
            Metric::Latency => (100, 1000),
            Metric::Bandwidth => (10, 100),
        };
        BenchConfig {
            pattern,
            metric,
            sizes: size_range(1, MAX_DEFAULT_SIZE),
            pairs: 1,
            warmup,
            iters,
            window: DEFAULT_WINDOW,
            cell_size: DEFAULT_CELL_SIZE,
            seed: 0x5eed,
        }
    }

    /// Iteration counts actually used for `size`.
    pub fn counts_for(&self, size: usize) -> (usize, usize) {
        if size > LARGE_MESSAGE {
            ((self.warmup / 10).max(1), (self.iters / 10).max(1))
        } else {
            (self.warmup, self.iters)
        }
    }

    pub fn validate(&self, nranks: usize) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::Config("pairs must be at least 1".into()));
        }
        if nranks != 2 * self.pairs {
            return Err(Error::Config(format!(
                "{} pairs need exactly {} ranks, job has {nranks}",
                self.pairs,
                2 * self.pairs
            )));
        }
        if self.sizes.is_empty() {
            return Err(Error::Config("no message sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("message sizes must be strictly ascending".into()));
        }
        if self.metric == Metric::Bandwidth && self.sizes[0] == 0 {
            return Err(Error::Config("zero-byte messages have no bandwidth".into()));
        }
        if self.iters == 0 || (self.metric == Metric::Bandwidth && self.window == 0) {
            return Err(Error::Config("iterations and window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub pattern: Pattern,
    pub metric: Metric,
    pub size: usize,
    pub pairs: usize,
    pub cell_size: usize,
    /// Microseconds for latency, MB/s (10^6 bytes) for bandwidth.
    pub value: f64,
    pub iters: usize,
}

/// Writes the records sorted by (pattern, size, pairs). Overwrites `path`.
pub fn emit_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        (a.pattern.as_str(), a.size, a.pairs, a.metric).cmp(&(b.pattern.as_str(), b.size, b.pairs, b.metric))
    });
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(["pattern", "metric", "size", "pairs", "cell_size", "value", "iters"])
        .map_err(csv_err)?;
    for r in &sorted {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Origin(usize),
    Target(usize),
}

fn role(ctx: &RankContext, pairs: usize) -> Role {
    let r = ctx.rank();
    if r < pairs {
        Role::Origin(r + pairs)
    } else {
        Role::Target(r - pairs)
    }
}

struct Payload {
    data: Vec<u8>,
    sum: u64,
}

impl Payload {
    fn new(size: usize, seed: u64) -> Payload {
        let mut data = vec![0u8; size];
        fill_pattern(&mut data, seed ^ size as u64);
        let sum = checksum(&data);
        Payload { data, sum }
    }

    fn verify(&self, got: &[u8], what: &str) -> Result<()> {
        if got.len() != self.data.len() || checksum(got) != self.sum {
            return Err(Error::Corrupt(format!(
                "{what}: payload checksum mismatch ({} bytes)",
                self.data.len()
            )));
        }
        Ok(())
    }
}

pub fn run(ctx: &mut RankContext, cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    match cfg.metric {
        Metric::Latency => run_latency(ctx, cfg),
        Metric::Bandwidth => run_bandwidth(ctx, cfg),
    }
}

fn window_for(ctx: &mut RankContext, cfg: &BenchConfig) -> Result<Option<Window>> {
    if cfg.pattern == Pattern::TwoSided {
        return Ok(None);
    }
    let max = cfg.sizes.last().copied().unwrap_or(1).max(1);
    ctx.win_allocate_shared(&format!("bench.{}", cfg.pattern), max)
        .map(Some)
}

pub fn run_latency(ctx: &mut RankContext, cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let cfg = BenchConfig {
        metric: Metric::Latency,
        ..cfg.clone()
    };
    cfg.validate(ctx.nranks())?;
    let mut win = window_for(ctx, &cfg)?;
    let role = role(ctx, cfg.pairs);
    let mut records = Vec::new();
    for &size in &cfg.sizes {
        let payload = Payload::new(size, cfg.seed);
        let (warmup, iters) = cfg.counts_for(size);
        ctx.barrier()?;
        let micros = match (cfg.pattern, win.as_mut()) {
            (Pattern::TwoSided, _) => pingpong(ctx, role, &payload, warmup, iters)?,
            (p, Some(w)) => one_sided_latency(ctx, w, p, role, &payload, warmup, iters)?,
            (_, None) => unreachable!(),
        };
        if let Some(v) = gather_mean(ctx, cfg.pairs, micros)? {
            records.push(record(&cfg, size, v, iters));
        }
    }
    if let Some(w) = win {
        ctx.win_free(w)?;
    }
    Ok(records)
}

pub fn run_bandwidth(ctx: &mut RankContext, cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let cfg = BenchConfig {
        metric: Metric::Bandwidth,
        ..cfg.clone()
    };
    cfg.validate(ctx.nranks())?;
    let mut win = window_for(ctx, &cfg)?;
    let role = role(ctx, cfg.pairs);
    let mut records = Vec::new();
    for &size in &cfg.sizes {
        let payload = Payload::new(size, cfg.seed);
        let (warmup, iters) = cfg.counts_for(size);
        ctx.barrier()?;
        let secs = match (cfg.pattern, win.as_mut()) {
            (Pattern::TwoSided, _) => stream(ctx, role, &payload, cfg.window, warmup, iters)?,
            (p, Some(w)) => one_sided_stream(ctx, w, p, role, &payload, cfg.window, warmup, iters)?,
            (_, None) => unreachable!(),
        };
        // Pairs run concurrently: aggregate rate is all bytes over the
        // slowest pair's elapsed time.
        if let Some(slowest) = gather_max(ctx, cfg.pairs, secs)? {
            let bytes = (size * cfg.window * iters * cfg.pairs) as f64;
            records.push(record(&cfg, size, bytes / slowest / 1e6, iters));
        }
    }
    if let Some(w) = win {
        ctx.win_free(w)?;
    }
    Ok(records)
}

fn record(cfg: &BenchConfig, size: usize, value: f64, iters: usize) -> BenchRecord {
    BenchRecord {
        pattern: cfg.pattern,
        metric: cfg.metric,
        size,
        pairs: cfg.pairs,
        cell_size: cfg.cell_size,
        value,
        iters,
    }
}

/// Collects one value per origin on rank 0.
fn gather(ctx: &mut RankContext, pairs: usize, mine: Option<f64>) -> Result<Option<Vec<f64>>> {
    if ctx.rank() == 0 {
        let mut all = vec![mine.unwrap_or_default()];
        for r in 1..pairs {
            let mut b = [0u8; 8];
            ctx.recv(r, TAG_RESULT, &mut b)?;
            all.push(f64::from_le_bytes(b));
        }
        Ok(Some(all))
    } else {
        if let Some(v) = mine {
            ctx.send(0, TAG_RESULT, &v.to_le_bytes())?;
        }
        Ok(None)
    }
}

fn gather_mean(ctx: &mut RankContext, pairs: usize, mine: Option<f64>) -> Result<Option<f64>> {
    Ok(gather(ctx, pairs, mine)?.map(|v| v.iter().sum::<f64>() / v.len() as f64))
}

fn gather_max(ctx: &mut RankContext, pairs: usize, mine: Option<f64>) -> Result<Option<f64>> {
    Ok(gather(ctx, pairs, mine)?.map(|v| v.into_iter().fold(f64::MIN_POSITIVE, f64::max)))
}

/// Half the mean round trip, in microseconds, on the origin.
fn pingpong(ctx: &mut RankContext, role: Role, p: &Payload, warmup: usize, iters: usize) -> Result<Option<f64>> {
    let mut buf = vec![0u8; p.data.len()];
    let mut start = Instant::now();
    for i in 0..warmup + iters {
        if i == warmup {
            start = Instant::now();
        }
        match role {
            Role::Origin(peer) => {
                ctx.send(peer, TAG_DATA, &p.data)?;
                ctx.recv(peer, TAG_DATA, &mut buf)?;
                p.verify(&buf, "pong")?;
            }
            Role::Target(peer) => {
                ctx.recv(peer, TAG_DATA, &mut buf)?;
                p.verify(&buf, "ping")?;
                ctx.send(peer, TAG_DATA, &buf)?;
            }
        }
    }
    let elapsed = start.elapsed();
    Ok(matches!(role, Role::Origin(_)).then(|| elapsed.as_secs_f64() * 1e6 / iters as f64 / 2.0))
}

/// Mean time of the data movement plus epoch completion, in microseconds.
fn one_sided_latency(
    ctx: &mut RankContext,
    win: &mut Window,
    pattern: Pattern,
    role: Role,
    p: &Payload,
    warmup: usize,
    iters: usize,
) -> Result<Option<f64>> {
    let size = p.data.len();
    if pattern == Pattern::OneSidedGet {
        if let Role::Target(_) = role {
            win.write_local(0, &p.data)?;
        }
        ctx.barrier()?;
    }
    let mut buf = vec![0u8; size];
    let mut total = 0.0;
    for i in 0..warmup + iters {
        match role {
            Role::Origin(peer) => {
                win.start(&[peer])?;
                let t = Instant::now();
                if pattern == Pattern::OneSidedPut {
                    win.put(peer, 0, &p.data)?;
                } else {
                    win.get(peer, 0, &mut buf)?;
                }
                win.complete()?;
                if i >= warmup {
                    total += t.elapsed().as_secs_f64();
                }
                if pattern == Pattern::OneSidedGet {
                    p.verify(&buf, "get")?;
                }
            }
            Role::Target(peer) => {
                if pattern == Pattern::OneSidedPut && i > 0 {
                    win.write_local(0, &vec![0u8; size])?;
                }
                win.post(&[peer])?;
                win.wait()?;
                if pattern == Pattern::OneSidedPut {
                    win.read_local(0, &mut buf)?;
                    p.verify(&buf, "put")?;
                }
            }
        }
    }
    Ok(matches!(role, Role::Origin(_)).then(|| total * 1e6 / iters as f64))
}

/// Window of sends followed by one acknowledgement; elapsed seconds on
/// the origin.
fn stream(
    ctx: &mut RankContext,
    role: Role,
    p: &Payload,
    window: usize,
    warmup: usize,
    iters: usize,
) -> Result<Option<f64>> {
    let mut buf = vec![0u8; p.data.len()];
    let mut start = Instant::now();
    for i in 0..warmup + iters {
        if i == warmup {
            start = Instant::now();
        }
        match role {
            Role::Origin(peer) => {
                for _ in 0..window {
                    ctx.send(peer, TAG_DATA, &p.data)?;
                }
                ctx.recv(peer, TAG_ACK, &mut [0u8; 1])?;
            }
            Role::Target(peer) => {
                for _ in 0..window {
                    ctx.recv(peer, TAG_DATA, &mut buf)?;
                    p.verify(&buf, "stream")?;
                }
                ctx.send(peer, TAG_ACK, &[1])?;
            }
        }
    }
    let elapsed = start.elapsed();
    Ok(matches!(role, Role::Origin(_)).then(|| elapsed.as_secs_f64()))
}

#[allow(clippy::too_many_arguments)]
fn one_sided_stream(
    ctx: &mut RankContext,
    win: &mut Window,
    pattern: Pattern,
    role: Role,
    p: &Payload,
    window: usize,
    warmup: usize,
    iters: usize,
) -> Result<Option<f64>> {
    let size = p.data.len();
    if pattern == Pattern::OneSidedGet {
        if let Role::Target(_) = role {
            win.write_local(0, &p.data)?;
        }
        ctx.barrier()?;
    }
    let mut buf = vec![0u8; size];
    let mut start = Instant::now();
    for i in 0..warmup + iters {
        if i == warmup {
            start = Instant::now();
        }
        match role {
            Role::Origin(peer) => {
                win.start(&[peer])?;
                for _ in 0..window {
                    if pattern == Pattern::OneSidedPut {
                        win.put(peer, 0, &p.data)?;
                    } else {
                        win.get(peer, 0, &mut buf)?;
                    }
                }
                win.complete()?;
                if pattern == Pattern::OneSidedGet {
                    p.verify(&buf, "get")?;
                }
            }
            Role::Target(peer) => {
                win.post(&[peer])?;
                win.wait()?;
            }
        }
    }
    let elapsed = start.elapsed();
    if pattern == Pattern::OneSidedPut {
        if let Role::Target(_) = role {
            win.read_local(0, &mut buf)?;
            p.verify(&buf, "put")?;
        }
    }
    Ok(matches!(role, Role::Origin(_)).then(|| elapsed.as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_parsing() {
        assert_eq!(size_range(1, 8), vec![1, 2, 4, 8]);
        assert_eq!(size_range(0, 2), vec![0, 1, 2]);
        assert_eq!(size_range(3, 20), vec![3, 6, 12]);
        assert_eq!(parse_sizes("64K:256K").unwrap(), vec![65536, 131072, 262144]);
        assert_eq!(parse_sizes("8").unwrap(), vec![8]);
        assert!(parse_sizes("4:2").is_err());
        let d = BenchConfig::new(Pattern::TwoSided, Metric::Latency);
        assert_eq!(d.sizes.len(), 24);
        assert_eq!((d.sizes[0], *d.sizes.last().unwrap()), (1, 8 << 20));
        assert_eq!("pingpong".parse::<Pattern>().unwrap(), Pattern::TwoSided);
        assert_eq!("one-sided-get".parse::<Pattern>().unwrap(), Pattern::OneSidedGet);
        assert!("bogus".parse::<Metric>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = BenchConfig::new(Pattern::TwoSided, Metric::Bandwidth);
        c.validate(2).unwrap();
        assert!(c.validate(3).is_err());
        c.sizes = vec![0, 8];
        assert!(c.validate(2).is_err());
        c.metric = Metric::Latency;
        c.validate(2).unwrap();
        c.sizes = vec![8, 8];
        assert!(c.validate(2).is_err());
        c.sizes = vec![8];
        c.pairs = 0;
        assert!(c.validate(0).is_err());
        let l = BenchConfig::new(Pattern::TwoSided, Metric::Latency);
        assert_eq!(l.counts_for(8192), (100, 1000));
        assert_eq!(l.counts_for(8193), (10, 100));
    }

    #[test]
    fn csv_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "pattern,metric,size,pairs,cell_size,value,iters\n"
        );
        let rec = |p, size, pairs| BenchRecord {
            pattern: p,
            metric: Metric::Latency,
            size,
            pairs,
            cell_size: 16384,
            value: 1.5,
            iters: 10,
        };
        let records = vec![
            rec(Pattern::TwoSided, 4, 1),
            rec(Pattern::OneSidedPut, 8, 1),
            rec(Pattern::OneSidedGet, 8, 2),
            rec(Pattern::OneSidedGet, 8, 1),
            rec(Pattern::OneSidedGet, 2, 1),
        ];
        emit_csv(&records, &path).unwrap();
        let back = read_csv(&path).unwrap();
        let mut expect = records.clone();
        expect.sort_by_key(|r| (r.pattern.as_str(), r.size, r.pairs));
        assert_eq!(back, expect);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("one_sided_get,latency,2,1,16384,1.5,10"));
        emit_csv(&records[..1], &path).unwrap();
        assert_eq!(read_csv(&path).unwrap().len(), 1);
    }

    #[test]
    fn corrupt_payload_is_rejected() {
        let p = Payload::new(100, 1);
        p.verify(&p.data, "x").unwrap();
        let mut bad = p.data.clone();
        bad[50] ^= 1;
        assert!(matches!(p.verify(&bad, "x"), Err(Error::Corrupt(_))));
    }
}
