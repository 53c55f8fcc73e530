//! The sim-cache run loop: routes trace records through the TLBs and the
//! split or unified two-level cache hierarchy.
//!
//! Routing rules:
//! - `Inst` looks up the ITLB by page, then the instruction L1; an L1 miss
//!   reads the block from the next level.
//! - `Load`/`Store` look up the DTLB once per page touched, then access the
//!   data L1 once per block touched; misses read from the data L2.
//! - A dirty L1 victim is written to the next level as a `Write` access,
//!   after the demand fill.
//! - `Y` flushes every cache when `flush_on_syscall` is set. Dirty L1 lines
//!   flushed this way are written to the next level before it is flushed.
//!
//! Unified levels share one [`CacheState`]; its statistics are reported once
//! under the cache's own name.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, AccessOutcome, CacheState, CacheStats};
use crate::config::{CacheBinding, CacheSpec, ConfigError, DataLevel, HierarchySpec};
use crate::timing::{EventKind, Side, TimingEvent};
use crate::trace::{TraceError, TraceRecord};

/// Name of the region that collects everything before the first `R` marker.
pub const DEFAULT_REGION: &str = "(others)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Il1,
    Il2,
    Dl1,
    Dl2,
    Itlb,
    Dtlb,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Il1 => "il1",
            Level::Il2 => "il2",
            Level::Dl1 => "dl1",
            Level::Dl2 => "dl2",
            Level::Itlb => "itlb",
            Level::Dtlb => "dtlb",
        }
    }
}

/// Index of a cache object inside a [`Hierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheId(pub usize);

/// One access made by [`Hierarchy::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelAccess {
    pub cache: CacheId,
    /// The role through which the cache was reached.
    pub level: Level,
    pub kind: AccessKind,
    pub addr: u64,
    pub outcome: AccessOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BranchCounts {
    pub executed: u64,
    pub taken: u64,
    pub not_taken: u64,
}

/// First-level memory statistics for one side (instruction or data).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SideStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub tlb_accesses: u64,
    pub tlb_misses: u64,
    /// Dirty L1 victims (including flushes) attributed to this side.
    pub writebacks: u64,
}

impl SideStats {
    fn merge(&mut self, o: &SideStats) {
        self.accesses += o.accesses;
        self.hits += o.hits;
        self.misses += o.misses;
        self.tlb_accesses += o.tlb_accesses;
        self.tlb_misses += o.tlb_misses;
        self.writebacks += o.writebacks;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionCounters {
    pub name: String,
    pub insts: u64,
    pub ops: u64,
    pub refs: u64,
    pub branches: BranchCounts,
    pub imem: SideStats,
    pub dmem: SideStats,
    /// Aligned with [`SimReport::caches`].
    pub caches: Vec<CacheStats>,
}

impl RegionCounters {
    fn new(name: &str, ncaches: usize) -> Self {
        RegionCounters { name: name.to_string(), caches: vec![CacheStats::default(); ncaches], ..Default::default() }
    }

    /// Adds `other` into `self`, keeping `self.name`.
    pub fn merge(&mut self, other: &RegionCounters) {
        self.insts += other.insts;
        self.ops += other.ops;
        self.refs += other.refs;
        self.branches.executed += other.branches.executed;
        self.branches.taken += other.branches.taken;
        self.branches.not_taken += other.branches.not_taken;
        self.imem.merge(&other.imem);
        self.dmem.merge(&other.dmem);
        if self.caches.len() < other.caches.len() {
            self.caches.resize(other.caches.len(), CacheStats::default());
        }
        for (a, b) in self.caches.iter_mut().zip(&other.caches) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub name: String,
    pub levels: Vec<Level>,
    pub spec: CacheSpec,
    pub stats: CacheStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub sim_num_insn: u64,
    pub sim_num_refs: u64,
    pub executed_operations: u64,
    pub sim_elapsed_time: u64,
    pub sim_inst_rate: f64,
    pub branches: BranchCounts,
    pub imem: SideStats,
    pub dmem: SideStats,
    pub caches: Vec<CacheReport>,
    pub regions: Vec<RegionCounters>,
}

impl SimReport {
    pub fn cache(&self, name: &str) -> Option<&CacheReport> {
        self.caches.iter().find(|c| c.name == name)
    }

    /// The cache reached through `level`, if any.
    pub fn cache_at(&self, level: Level) -> Option<&CacheReport> {
        self.caches.iter().find(|c| c.levels.contains(&level))
    }

    pub fn region(&self, name: &str) -> Option<&RegionCounters> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Sum of all region rows; equals the whole-run counters.
    pub fn region_sum(&self) -> RegionCounters {
        let mut sum = RegionCounters::new("TOTAL", self.caches.len());
        for r in &self.regions {
            sum.merge(r);
        }
        sum
    }
}

/// Source of `sim_elapsed_time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Wall,
    /// Report this many seconds regardless of the real run time.
    Fixed(u64),
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    caches: Vec<CacheState>,
    roles: Vec<Vec<Level>>,
    il1: Option<usize>,
    i_next: Option<usize>,
    dl1: Option<usize>,
    d_next: Option<usize>,
    itlb: Option<usize>,
    dtlb: Option<usize>,
    flush_on_syscall: bool,
    regions: Vec<RegionCounters>,
    region_index: HashMap<String, usize>,
    current: usize,
    insn_count: u64,
    events: Option<Vec<TimingEvent>>,
    scratch: Vec<LevelAccess>,
}

fn configured(binding: &CacheBinding) -> Option<&CacheSpec> {
    binding.spec()
}

impl Hierarchy {
    /// Instantiates every configured cache and wires unified levels to the
    /// shared objects. Cache `i` in report order is seeded with `seed + i`.
    pub fn build(spec: &HierarchySpec, seed: u64) -> Result<Hierarchy, ConfigError> {
        spec.validate()?;
        let mut caches: Vec<CacheState> = Vec::new();
        let mut roles: Vec<Vec<Level>> = Vec::new();
        let mut make = |binding: &CacheBinding, level: Level| -> Result<Option<usize>, ConfigError> {
            let Some(cs) = configured(binding) else {
                return Ok(None);
            };
            if caches.iter().any(|c| c.name() == cs.name) {
                return Err(ConfigError::DuplicateName(cs.name.clone()));
            }
            caches.push(CacheState::new(cs.clone(), seed.wrapping_add(caches.len() as u64)));
            roles.push(vec![level]);
            Ok(Some(caches.len() - 1))
        };
        let il1_own = make(&spec.il1, Level::Il1)?;
        let il2_own = make(&spec.il2, Level::Il2)?;
        let dl1 = make(&spec.dl1, Level::Dl1)?;
        let dl2 = make(&spec.dl2, Level::Dl2)?;
        let itlb = make(&spec.itlb, Level::Itlb)?;
        let dtlb = make(&spec.dtlb, Level::Dtlb)?;

        let (il1, i_next) = match &spec.il1 {
            CacheBinding::Configured(_) => {
                let next = match &spec.il2 {
                    CacheBinding::Configured(_) => il2_own,
                    CacheBinding::UnifiedWith(DataLevel::Dl2) => dl2,
                    _ => None,
                };
                (il1_own, next)
            }
            CacheBinding::UnifiedWith(DataLevel::Dl1) => (dl1, dl2),
            CacheBinding::UnifiedWith(DataLevel::Dl2) => (dl2, None),
            CacheBinding::None => (None, None),
        };
        if let (Some(i), Some(d)) = (il1, dl1) {
            if i == d {
                roles[i].push(Level::Il1);
            }
        }
        if let Some(i) = il1 {
            if Some(i) == dl2 {
                roles[i].push(Level::Il1);
            }
        }
        if let Some(n) = i_next {
            if Some(n) == dl2 && il1 != dl1 {
                roles[n].push(Level::Il2);
            }
        }

        let ncaches = caches.len();
        let mut h = Hierarchy {
            caches,
            roles,
            il1,
            i_next,
            dl1,
            d_next: dl2,
            itlb,
            dtlb,
            flush_on_syscall: spec.flush_on_syscall,
            regions: vec![RegionCounters::new(DEFAULT_REGION, ncaches)],
            region_index: HashMap::new(),
            current: 0,
            insn_count: 0,
            events: None,
            scratch: Vec::with_capacity(16),
        };
        h.region_index.insert(DEFAULT_REGION.to_string(), 0);
        Ok(h)
    }

    /// Keeps an ordered log of L1 misses, writebacks, TLB misses and taken
    /// branches for cycle accounting.
    pub fn with_event_log(mut self) -> Self {
        self.events = Some(Vec::new());
        self
    }

    pub fn events(&self) -> &[TimingEvent] {
        self.events.as_deref().unwrap_or(&[])
    }

    pub fn take_events(&mut self) -> Vec<TimingEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn caches(&self) -> &[CacheState] {
        &self.caches
    }

    pub fn cache(&self, id: CacheId) -> &CacheState {
        &self.caches[id.0]
    }

    pub fn cache_name(&self, id: CacheId) -> &str {
        self.caches[id.0].name()
    }

    pub fn cache_at(&self, level: Level) -> Option<CacheId> {
        self.roles.iter().position(|r| r.contains(&level)).map(CacheId)
    }

    pub fn current_region(&self) -> &str {
        &self.regions[self.current].name
    }

    fn log(&mut self, kind: EventKind) {
        if let Some(events) = self.events.as_mut() {
            events.push(TimingEvent { insn: self.insn_count, kind });
        }
    }

    fn touch(&mut self, id: usize, level: Level, addr: u64, kind: AccessKind) -> AccessOutcome {
        let outcome = self.caches[id].access(addr, kind);
        self.regions[self.current].caches[id].record(&outcome);
        self.scratch.push(LevelAccess { cache: CacheId(id), level, kind, addr, outcome });
        outcome
    }

    fn side_mut(&mut self, side: Side) -> &mut SideStats {
        let region = &mut self.regions[self.current];
        match side {
            Side::Inst => &mut region.imem,
            Side::Data => &mut region.dmem,
        }
    }

    fn tlb_lookup(&mut self, id: usize, level: Level, side: Side, addr: u64) {
        let outcome = self.touch(id, level, addr, AccessKind::Read);
        let stats = self.side_mut(side);
        stats.tlb_accesses += 1;
        if outcome.is_miss() {
            stats.tlb_misses += 1;
            self.log(EventKind::TlbMiss { side });
        }
    }

    fn l1_access(&mut self, side: Side, addr: u64, kind: AccessKind) {
        let (l1, next, l1_level, next_level) = match side {
            Side::Inst if self.il1 == self.dl1 => (self.il1, self.i_next, Level::Il1, Level::Dl2),
            Side::Inst => (self.il1, self.i_next, Level::Il1, Level::Il2),
            Side::Data => (self.dl1, self.d_next, Level::Dl1, Level::Dl2),
        };
        let Some(l1) = l1 else { return };
        let outcome = self.touch(l1, l1_level, addr, kind);
        let bsize = self.caches[l1].spec().bsize;
        let stats = self.side_mut(side);
        stats.accesses += 1;
        if outcome.is_hit() {
            stats.hits += 1;
            return;
        }
        stats.misses += 1;
        let writeback = outcome.writeback();
        if writeback.is_some() {
            stats.writebacks += 1;
        }
        self.log(EventKind::Miss { side, bytes: bsize });
        if let Some(next) = next {
            self.touch(next, next_level, addr, AccessKind::Read);
        }
        if let Some(victim) = writeback {
            self.log(EventKind::Writeback { side, bytes: bsize });
            if let Some(next) = next {
                self.touch(next, next_level, victim.addr, AccessKind::Write);
            }
        }
    }

    fn flush_all(&mut self) {
        // L1s first so their dirty lines land in L2 before it is flushed.
        let mut order: Vec<usize> = Vec::new();
        for id in [self.il1, self.dl1].into_iter().flatten() {
            if !order.contains(&id) {
                order.push(id);
            }
        }
        for id in 0..self.caches.len() {
            if !order.contains(&id) {
                order.push(id);
            }
        }
        for id in order {
            let (side, next, next_level) = if Some(id) == self.dl1 {
                (Some(Side::Data), self.d_next, Level::Dl2)
            } else if Some(id) == self.il1 {
                (Some(Side::Inst), self.i_next, Level::Il2)
            } else {
                (None, None, Level::Dl2)
            };
            let mut victims = Vec::new();
            let flushed = self.caches[id].flush_with(|addr| victims.push(addr));
            self.regions[self.current].caches[id].record_flush(&flushed);
            if let Some(side) = side {
                let bsize = self.caches[id].spec().bsize;
                self.side_mut(side).writebacks += victims.len() as u64;
                for addr in victims {
                    self.log(EventKind::Writeback { side, bytes: bsize });
                    if let Some(next) = next {
                        self.touch(next, next_level, addr, AccessKind::Write);
                    }
                }
            }
        }
    }

    fn data_ref(&mut self, addr: u64, size: u32, kind: AccessKind) {
        self.regions[self.current].refs += 1;
        let last = addr.saturating_add(u64::from(size.max(1)) - 1);
        if let Some(dtlb) = self.dtlb {
            let page = self.caches[dtlb].spec().bsize;
            for p in (addr / page)..=(last / page) {
                self.tlb_lookup(dtlb, Level::Dtlb, Side::Data, p * page);
            }
        }
        if let Some(dl1) = self.dl1 {
            let bsize = self.caches[dl1].spec().bsize;
            for b in (addr / bsize)..=(last / bsize) {
                // The first block keeps the exact address; the rest start at their base.
                let a = if b == addr / bsize { addr } else { b * bsize };
                self.l1_access(Side::Data, a, kind);
            }
        }
    }

    fn step_inner(&mut self, record: &TraceRecord) {
        self.scratch.clear();
        match record {
            TraceRecord::Inst { addr, ops } => {
                {
                    let region = &mut self.regions[self.current];
                    region.insts += 1;
                    region.ops += u64::from(*ops);
                }
                if let Some(itlb) = self.itlb {
                    self.tlb_lookup(itlb, Level::Itlb, Side::Inst, *addr);
                }
                self.l1_access(Side::Inst, *addr, AccessKind::Read);
                self.insn_count += 1;
            }
            TraceRecord::Load { addr, size } => self.data_ref(*addr, *size, AccessKind::Read),
            TraceRecord::Store { addr, size } => self.data_ref(*addr, *size, AccessKind::Write),
            TraceRecord::Branch { taken } => {
                let b = &mut self.regions[self.current].branches;
                b.executed += 1;
                if *taken {
                    b.taken += 1;
                    self.log(EventKind::TakenBranch);
                } else {
                    b.not_taken += 1;
                }
            }
            TraceRecord::Syscall => {
                if self.flush_on_syscall {
                    self.flush_all();
                }
            }
            TraceRecord::Region { name } => {
                self.current = match self.region_index.get(name.as_str()) {
                    Some(&idx) => idx,
                    None => {
                        self.regions.push(RegionCounters::new(name, self.caches.len()));
                        let idx = self.regions.len() - 1;
                        self.region_index.insert(name.clone(), idx);
                        idx
                    }
                };
            }
        }
    }

    /// Applies one record and returns every cache access it caused, in order.
    pub fn step(&mut self, record: &TraceRecord) -> Vec<LevelAccess> {
        self.step_inner(record);
        self.scratch.clone()
    }

    pub fn run_records<'a, I>(&mut self, records: I, clock: Clock) -> SimReport
    where
        I: IntoIterator<Item = &'a TraceRecord>,
    {
        let start = Instant::now();
        for r in records {
            self.step_inner(r);
        }
        self.report(elapsed_secs(clock, start))
    }

    /// Folds a fallible record stream; stops at the first parse error.
    pub fn run<I>(&mut self, records: I, clock: Clock) -> Result<SimReport, TraceError>
    where
        I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
    {
        let start = Instant::now();
        for r in records {
            self.step_inner(&r?);
        }
        Ok(self.report(elapsed_secs(clock, start)))
    }

    /// Snapshot of the counters with the given elapsed time.
    pub fn report(&self, elapsed_secs: u64) -> SimReport {
        let mut total = RegionCounters::new("TOTAL", self.caches.len());
        for r in &self.regions {
            total.merge(r);
        }
        let elapsed = elapsed_secs.max(1);
        SimReport {
            sim_num_insn: total.insts,
            sim_num_refs: total.refs,
            executed_operations: total.ops,
            sim_elapsed_time: elapsed,
            sim_inst_rate: total.insts as f64 / elapsed as f64,
            branches: total.branches,
            imem: total.imem,
            dmem: total.dmem,
            caches: self
                .caches
                .iter()
                .zip(&self.roles)
                .map(|(c, levels)| CacheReport {
                    name: c.name().to_string(),
                    levels: levels.clone(),
                    spec: c.spec().clone(),
                    stats: *c.stats(),
                })
                .collect(),
            regions: self.regions.clone(),
        }
    }
}

/// Whole seconds, floored, never below one.
fn elapsed_secs(clock: Clock, start: Instant) -> u64 {
    match clock {
        Clock::Wall => start.elapsed().as_secs().max(1),
        Clock::Fixed(secs) => secs.max(1),
    }
}

/// Convenience: build from `spec` and run `records` in one go.
pub fn simulate(
    spec: &HierarchySpec,
    seed: u64,
    records: &[TraceRecord],
    clock: Clock,
) -> Result<SimReport, ConfigError> {
    let mut h = Hierarchy::build(spec, seed)?;
    Ok(h.run_records(records, clock))
}
