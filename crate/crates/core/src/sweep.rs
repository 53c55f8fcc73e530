//! One-pass design-space sweeps.
//!
//! For a fixed number of sets and block size, a reference hits in an
//! `assoc`-way LRU cache exactly when its per-set LRU stack distance is at
//! most `assoc`, so one histogram of stack distances answers every
//! associativity at once. Distances are computed with a Fenwick tree over
//! each set's reference positions (O(n log n) per geometry).
//!
//! [`belady_misses`] gives the offline optimum for comparison.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{AccessKind, CacheState};
use crate::config::{CacheSpec, ConfigError, ReplacementPolicy};
use crate::par::{self, Execution};
use crate::trace::TraceRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error("sweep needs at least one {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Which references of a trace a sweep simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RefStream {
    #[default]
    Data,
    Inst,
    Unified,
}

/// Block numbers referenced by `records`, in order. A load or store spanning
/// several blocks contributes one reference per block.
pub fn block_refs(records: &[TraceRecord], bsize: u64, stream: RefStream) -> Vec<u64> {
    let want_inst = matches!(stream, RefStream::Inst | RefStream::Unified);
    let want_data = matches!(stream, RefStream::Data | RefStream::Unified);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match r {
            TraceRecord::Inst { addr, .. } if want_inst => out.push(addr / bsize),
            TraceRecord::Load { addr, size } | TraceRecord::Store { addr, size } if want_data => {
                let last = addr.saturating_add(u64::from((*size).max(1)) - 1);
                out.extend((addr / bsize)..=(last / bsize));
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub nsets: u64,
    pub bsize: u64,
    /// `counts[d - 1]` references had stack distance `d`.
    pub counts: Vec<u64>,
    /// First-touch references.
    pub cold: u64,
}

impl DistanceHistogram {
    pub fn count(&self, distance: usize) -> u64 {
        distance.checked_sub(1).and_then(|i| self.counts.get(i)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.cold + self.counts.iter().sum::<u64>()
    }

    pub fn max_distance(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).map_or(0, |i| i + 1)
    }

    /// Misses of an LRU cache with this geometry and `assoc` ways.
    pub fn misses_for_assoc(&self, assoc: u64) -> u64 {
        let keep = usize::try_from(assoc).unwrap_or(usize::MAX).min(self.counts.len());
        self.cold + self.counts[keep..].iter().sum::<u64>()
    }
}

pub fn misses_for_assoc(h: &DistanceHistogram, assoc: u64) -> u64 {
    h.misses_for_assoc(assoc)
}

struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize, delta: i64) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `0..end`.
    fn prefix(&self, end: usize) -> i64 {
        let mut i = end;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn split_by_set(blocks: &[u64], nsets: u64) -> Vec<Vec<u64>> {
    let mut sets: Vec<Vec<u64>> = vec![Vec::new(); nsets as usize];
    for &b in blocks {
        sets[(b % nsets) as usize].push(b / nsets);
    }
    sets
}

/// Stack-distance histogram of a block-number stream.
pub fn histogram_from_blocks(blocks: &[u64], nsets: u64, bsize: u64) -> DistanceHistogram {
    assert!(nsets.is_power_of_two(), "nsets must be a power of two");
    let mut counts: Vec<u64> = Vec::new();
    let mut cold = 0;
    let mut last: HashMap<u64, usize> = HashMap::new();
    for tags in split_by_set(blocks, nsets) {
        last.clear();
        let mut marks = Fenwick::new(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            match last.insert(*tag, i) {
                Some(prev) => {
                    // distinct tags touched strictly between prev and i, plus itself
                    let d = (marks.prefix(i) - marks.prefix(prev + 1)) as usize + 1;
                    if counts.len() < d {
                        counts.resize(d, 0);
                    }
                    counts[d - 1] += 1;
                    marks.add(prev, -1);
                }
                None => cold += 1,
            }
            marks.add(i, 1);
        }
    }
    DistanceHistogram { nsets, bsize, counts, cold }
}

/// Stack-distance histogram of the data references of `records`.
pub fn stack_distances(records: &[TraceRecord], nsets: u64, bsize: u64) -> DistanceHistogram {
    stack_distances_for(records, nsets, bsize, RefStream::Data)
}

pub fn stack_distances_for(records: &[TraceRecord], nsets: u64, bsize: u64, stream: RefStream) -> DistanceHistogram {
    histogram_from_blocks(&block_refs(records, bsize, stream), nsets, bsize)
}

const NEVER: usize = usize::MAX;

fn next_uses(blocks: &[u64]) -> Vec<usize> {
    let mut next = vec![NEVER; blocks.len()];
    let mut seen: HashMap<u64, usize> = HashMap::new();
    for (i, b) in blocks.iter().enumerate().rev() {
        if let Some(j) = seen.insert(*b, i) {
            next[i] = j;
        }
    }
    next
}

/// Misses of Belady's offline policy on a block-number stream: on a miss in
/// a full set, evict the block whose next use is farthest away (blocks never
/// used again first, lowest way on ties).
pub fn belady_from_blocks(blocks: &[u64], nsets: u64, assoc: u64) -> u64 {
    assert!(nsets >= 1 && assoc >= 1);
    let assoc = assoc as usize;
    let next = next_uses(blocks);
    let mut sets: Vec<Vec<(u64, usize)>> = vec![Vec::new(); nsets as usize];
    let mut misses = 0;
    for (i, &b) in blocks.iter().enumerate() {
        let ways = &mut sets[(b % nsets) as usize];
        if let Some(way) = ways.iter_mut().find(|(blk, _)| *blk == b) {
            way.1 = next[i];
            continue;
        }
        misses += 1;
        if ways.len() < assoc {
            ways.push((b, next[i]));
        } else {
            let mut victim = 0;
            for (w, &(_, nu)) in ways.iter().enumerate() {
                if nu > ways[victim].1 {
                    victim = w;
                }
            }
            ways[victim] = (b, next[i]);
        }
    }
    misses
}

/// Belady misses for the data references of `records`.
pub fn belady_misses(records: &[TraceRecord], nsets: u64, bsize: u64, assoc: u64) -> u64 {
    belady_from_blocks(&block_refs(records, bsize, RefStream::Data), nsets, assoc)
}

/// Misses of a direct [`CacheState`] simulation on a block-number stream.
pub fn simulate_blocks(blocks: &[u64], spec: &CacheSpec, seed: u64) -> u64 {
    let mut cache = CacheState::new(spec.clone(), seed);
    for &b in blocks {
        cache.access(b * spec.bsize, AccessKind::Read);
    }
    cache.stats().misses
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepPolicy {
    Lru,
    Fifo,
    Random,
    Opt,
}

impl SweepPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepPolicy::Lru => "lru",
            SweepPolicy::Fifo => "fifo",
            SweepPolicy::Random => "random",
            SweepPolicy::Opt => "opt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lru" | "l" => Some(SweepPolicy::Lru),
            "fifo" | "f" => Some(SweepPolicy::Fifo),
            "random" | "r" => Some(SweepPolicy::Random),
            "opt" | "belady" => Some(SweepPolicy::Opt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: SweepPolicy,
    pub nsets: u64,
    pub bsize: u64,
    pub assoc: u64,
    pub accesses: u64,
    pub misses: u64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepOptions {
    pub stream: RefStream,
    pub policies: Vec<SweepPolicy>,
    /// Seed for RANDOM rows.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            stream: RefStream::Data,
            policies: vec![SweepPolicy::Lru],
            seed: 1,
            execution: Execution::default(),
        }
    }
}

fn rate(misses: u64, accesses: u64) -> f64 {
    if accesses == 0 {
        0.0
    } else {
        misses as f64 / accesses as f64
    }
}

/// Evaluates every `(geometry, assoc, policy)` combination. LRU rows for a
/// geometry all come from a single stack-distance pass; geometries are
/// independent jobs. Rows are ordered by policy, then geometry, then assoc.
pub fn sweep(
    records: &[TraceRecord],
    geometries: &[(u64, u64)],
    assocs: &[u64],
    opts: &SweepOptions,
) -> Result<SweepTable, SweepError> {
    if geometries.is_empty() {
        return Err(SweepError::Empty("geometry"));
    }
    if assocs.is_empty() {
        return Err(SweepError::Empty("associativity"));
    }
    if opts.policies.is_empty() {
        return Err(SweepError::Empty("policy"));
    }
    for &(nsets, bsize) in geometries {
        for &assoc in assocs {
            CacheSpec::new("sweep", nsets, bsize, assoc, ReplacementPolicy::Lru)?;
        }
    }

    let mut bsizes: Vec<u64> = geometries.iter().map(|g| g.1).collect();
    bsizes.sort_unstable();
    bsizes.dedup();
    let streams: HashMap<u64, Vec<u64>> = bsizes.iter().map(|&b| (b, block_refs(records, b, opts.stream))).collect();

    let per_geometry: Vec<Vec<Vec<SweepRow>>> = par::map(geometries, opts.execution, |&(nsets, bsize)| {
        let blocks = &streams[&bsize];
        let accesses = blocks.len() as u64;
        let hist = opts.policies.contains(&SweepPolicy::Lru).then(|| histogram_from_blocks(blocks, nsets, bsize));
        opts.policies
            .iter()
            .map(|&policy| {
                assocs
                    .iter()
                    .map(|&assoc| {
                        let misses = match policy {
                            SweepPolicy::Lru => hist.as_ref().expect("built for lru").misses_for_assoc(assoc),
                            SweepPolicy::Opt => belady_from_blocks(blocks, nsets, assoc),
                            SweepPolicy::Fifo | SweepPolicy::Random => {
                                let repl = if policy == SweepPolicy::Fifo {
                                    ReplacementPolicy::Fifo
                                } else {
                                    ReplacementPolicy::Random
                                };
                                let spec = CacheSpec::new("sweep", nsets, bsize, assoc, repl).expect("validated");
                                simulate_blocks(blocks, &spec, opts.seed)
                            }
                        };
                        SweepRow { policy, nsets, bsize, assoc, accesses, misses, miss_rate: rate(misses, accesses) }
                    })
                    .collect()
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(geometries.len() * assocs.len() * opts.policies.len());
    for p in 0..opts.policies.len() {
        for g in &per_geometry {
            rows.extend(g[p].iter().cloned());
        }
    }
    Ok(SweepTable { rows })
}
