//! A single set-associative cache with write-back, write-allocate semantics.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::config::{CacheSpec, ReplacementPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheLine {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    /// Last-use stamp under LRU, fill stamp under FIFO, unused under RANDOM.
    pub stamp: u64,
}

/// A line pushed out of the cache by a fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evicted {
    pub tag: u64,
    pub was_dirty: bool,
    /// Base byte address of the evicted block.
    pub addr: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    Miss { evicted: Option<Evicted> },
}

impl AccessOutcome {
    pub fn is_hit(&self) -> bool {
        matches!(self, AccessOutcome::Hit)
    }

    pub fn is_miss(&self) -> bool {
        !self.is_hit()
    }

    /// The evicted block if it has to be written back.
    pub fn writeback(&self) -> Option<Evicted> {
        match self {
            AccessOutcome::Miss { evicted: Some(e) } if e.was_dirty => Some(*e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlushResult {
    pub writebacks_done: u64,
    pub lines_invalidated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub replacements: u64,
    pub writebacks: u64,
    pub invalidations: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl CacheStats {
    pub fn record(&mut self, outcome: &AccessOutcome) {
        self.accesses += 1;
        match outcome {
            AccessOutcome::Hit => self.hits += 1,
            AccessOutcome::Miss { evicted } => {
                self.misses += 1;
                if let Some(e) = evicted {
                    self.replacements += 1;
                    if e.was_dirty {
                        self.writebacks += 1;
                    }
                }
            }
        }
    }

    pub fn record_flush(&mut self, flushed: &FlushResult) {
        self.writebacks += flushed.writebacks_done;
        self.invalidations += flushed.lines_invalidated;
    }

    pub fn merge(&mut self, other: &CacheStats) {
        self.accesses += other.accesses;
        self.hits += other.hits;
        self.misses += other.misses;
        self.replacements += other.replacements;
        self.writebacks += other.writebacks;
        self.invalidations += other.invalidations;
    }

    pub fn miss_rate(&self) -> f64 {
        ratio(self.misses, self.accesses)
    }

    pub fn repl_rate(&self) -> f64 {
        ratio(self.replacements, self.accesses)
    }

    pub fn wb_rate(&self) -> f64 {
        ratio(self.writebacks, self.accesses)
    }

    pub fn inv_rate(&self) -> f64 {
        ratio(self.invalidations, self.accesses)
    }
}

/// Splits a byte address into `(set_index, tag)`.
pub fn decompose(addr: u64, spec: &CacheSpec) -> (u64, u64) {
    let block = addr / spec.bsize;
    (block % spec.nsets, block / spec.nsets)
}

#[derive(Debug, Clone)]
pub struct CacheState {
    spec: CacheSpec,
    lines: Vec<CacheLine>,
    offset_bits: u32,
    set_bits: u32,
    assoc: usize,
    clock: u64,
    seed: u64,
    rng: Xoshiro256PlusPlus,
    stats: CacheStats,
}

impl CacheState {
    pub fn new(spec: CacheSpec, seed: u64) -> Self {
        debug_assert!(spec.nsets.is_power_of_two() && spec.bsize.is_power_of_two() && spec.assoc.is_power_of_two());
        let assoc = spec.assoc as usize;
        let total = spec.nsets as usize * assoc;
        CacheState {
            offset_bits: spec.bsize.trailing_zeros(),
            set_bits: spec.nsets.trailing_zeros(),
            lines: vec![CacheLine::default(); total],
            assoc,
            spec,
            clock: 0,
            seed,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            stats: CacheStats::default(),
        }
    }

    pub fn spec(&self) -> &CacheSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lines(&self) -> &[CacheLine] {
        &self.lines
    }

    pub fn valid_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.valid).count()
    }

    /// Clears contents, counters and the replacement RNG.
    pub fn reset(&mut self) {
        self.lines.fill(CacheLine::default());
        self.clock = 0;
        self.rng = Xoshiro256PlusPlus::seed_from_u64(self.seed);
        self.stats = CacheStats::default();
    }

    #[inline]
    fn split(&self, addr: u64) -> (usize, u64) {
        let block = addr >> self.offset_bits;
        let set = (block & (self.spec.nsets - 1)) as usize;
        let tag = block.checked_shr(self.set_bits).unwrap_or(0);
        (set, tag)
    }

    /// Whether the block holding `addr` is resident. Does not touch state.
    pub fn probe(&self, addr: u64) -> bool {
        let (set, tag) = self.split(addr);
        let base = set * self.assoc;
        self.lines[base..base + self.assoc].iter().any(|l| l.valid && l.tag == tag)
    }

    fn block_addr(&self, set: usize, tag: u64) -> u64 {
        ((tag << self.set_bits) | set as u64) << self.offset_bits
    }

    pub fn access(&mut self, addr: u64, kind: AccessKind) -> AccessOutcome {
        let (set, tag) = self.split(addr);
        let base = set * self.assoc;
        self.clock += 1;
        let now = self.clock;
        let policy = self.spec.repl;

        let ways = &mut self.lines[base..base + self.assoc];
        if let Some(line) = ways.iter_mut().find(|l| l.valid && l.tag == tag) {
            if policy == ReplacementPolicy::Lru {
                line.stamp = now;
            }
            if kind == AccessKind::Write {
                line.dirty = true;
            }
            self.stats.record(&AccessOutcome::Hit);
            return AccessOutcome::Hit;
        }

        let way = match ways.iter().position(|l| !l.valid) {
            Some(way) => way,
            None => match policy {
                ReplacementPolicy::Lru | ReplacementPolicy::Fifo => {
                    ways.iter().enumerate().min_by_key(|(_, l)| l.stamp).map(|(i, _)| i).expect("assoc >= 1")
                }
                ReplacementPolicy::Random => self.rng.random_range(0..self.assoc),
            },
        };
        let victim = self.lines[base + way];
        let evicted = victim.valid.then(|| Evicted {
            tag: victim.tag,
            was_dirty: victim.dirty,
            addr: self.block_addr(set, victim.tag),
        });
        self.lines[base + way] = CacheLine { tag, valid: true, dirty: kind == AccessKind::Write, stamp: now };
        let outcome = AccessOutcome::Miss { evicted };
        self.stats.record(&outcome);
        outcome
    }

    /// Invalidates every line. `on_writeback` receives the base address of
    /// each dirty block in set/way order.
    pub fn flush_with(&mut self, mut on_writeback: impl FnMut(u64)) -> FlushResult {
        let mut result = FlushResult::default();
        for idx in 0..self.lines.len() {
            let line = self.lines[idx];
            if !line.valid {
                continue;
            }
            result.lines_invalidated += 1;
            if line.dirty {
                result.writebacks_done += 1;
                on_writeback(self.block_addr(idx / self.assoc, line.tag));
            }
            self.lines[idx] = CacheLine::default();
        }
        self.stats.record_flush(&result);
        result
    }

    pub fn flush(&mut self) -> FlushResult {
        self.flush_with(|_| {})
    }
}
