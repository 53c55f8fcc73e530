//! VLIW-style cycle accounting.
//!
//! The core retires one instruction bundle per cycle and stalls on every L1
//! miss for the configured penalty, on every taken branch for `branch_stall`
//! cycles and on every TLB miss for `tlb_lat` cycles. A single memory bus
//! carries refills and writebacks; a refill that finds the bus busy waits,
//! and that wait is reported as a bus-conflict stall. Writebacks occupy the
//! bus (plus `wb_penalty`) but never stall the core.
//!
//! The core clock at an event is the number of instructions retired before
//! it plus all stall cycles accumulated so far.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TimingSpec;
use crate::hierarchy::{BranchCounts, SideStats, SimReport};
use crate::numfmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Inst,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// L1 miss; `bytes` is the refill size.
    Miss {
        side: Side,
        bytes: u64,
    },
    /// Dirty L1 block written back; `bytes` is the block size.
    Writeback {
        side: Side,
        bytes: u64,
    },
    TlbMiss {
        side: Side,
    },
    TakenBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingEvent {
    /// Instructions retired before this event.
    pub insn: u64,
    pub kind: EventKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),
}

/// Summary counts the event log is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemorySummary {
    pub insn_count: u64,
    pub op_count: u64,
    pub imem: SideStats,
    pub dmem: SideStats,
    pub branches: BranchCounts,
}

impl MemorySummary {
    pub fn from_report(report: &SimReport) -> Self {
        MemorySummary {
            insn_count: report.sim_num_insn,
            op_count: report.executed_operations,
            imem: report.imem,
            dmem: report.dmem,
            branches: report.branches,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryCycles {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub stall_total: u64,
    pub stall_miss: u64,
    pub stall_bus_conflict: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BranchCycles {
    pub executed: u64,
    pub taken: u64,
    pub not_taken: u64,
    pub branch_stall_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub execution_cycles: u64,
    pub stall_cycles: u64,
    pub executed_operations: u64,
    pub imem: MemoryCycles,
    pub dmem: MemoryCycles,
    pub branch: BranchCycles,
    pub bus_busy_cycles: u64,
    pub bandwidth_pct: f64,
    /// Used only to render wall time.
    pub core_clk_mhz: u64,
}

impl CycleReport {
    /// Checks the four accounting identities.
    pub fn check_identities(&self) -> Result<(), String> {
        if self.total_cycles != self.execution_cycles + self.stall_cycles {
            return Err("total != execution + stall".into());
        }
        if self.stall_cycles != self.imem.stall_total + self.dmem.stall_total + self.branch.branch_stall_cycles {
            return Err("stall != imem + dmem + branch".into());
        }
        for (name, m) in [("imem", &self.imem), ("dmem", &self.dmem)] {
            if m.stall_total != m.stall_miss + m.stall_bus_conflict {
                return Err(format!("{name} stall_total != miss + bus conflict"));
            }
        }
        if self.bandwidth_pct != bandwidth(self.bus_busy_cycles, self.total_cycles) {
            return Err("bandwidth_pct != 100 * busy / total".into());
        }
        Ok(())
    }
}

fn bandwidth(busy: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * busy as f64 / total as f64
    }
}

/// Core cycles to move `bytes` from main memory: the first chunk costs
/// `mem_lat_first`, each further bus-width chunk `mem_lat_next`.
pub fn main_memory_latency(t: &TimingSpec, bytes: u64) -> u64 {
    let beats = bytes.max(1).div_ceil(t.mem_width);
    t.mem_lat_first + (beats - 1) * t.mem_lat_next
}

/// A copy of `t` whose L1 miss penalties are the main-memory latency of one
/// block, for driving the cycle model from SimpleScalar memory flags.
pub fn with_memory_penalties(t: &TimingSpec, il1_bsize: u64, dl1_bsize: u64) -> TimingSpec {
    TimingSpec {
        icache_penalty: main_memory_latency(t, il1_bsize),
        miss_penalty: main_memory_latency(t, dl1_bsize),
        ..t.clone()
    }
}

/// Core cycles the bus is held by one `bytes` transfer.
pub fn bus_occupancy(t: &TimingSpec, bytes: u64) -> u64 {
    let beats = bytes.max(1).div_ceil(t.mem_width);
    (beats * t.core_clk_mhz).div_ceil(t.bus_clk_mhz)
}

fn check(summary: &MemorySummary, events: &[TimingEvent]) -> Result<(), TimingError> {
    let bad = |msg: String| Err(TimingError::InconsistentCounts(msg));
    let count = |pred: &dyn Fn(&EventKind) -> bool| events.iter().filter(|e| pred(&e.kind)).count() as u64;
    for (name, side, stats) in [("instruction", Side::Inst, &summary.imem), ("data", Side::Data, &summary.dmem)] {
        if stats.accesses != stats.hits + stats.misses {
            return bad(format!("{name} accesses {} != hits {} + misses {}", stats.accesses, stats.hits, stats.misses));
        }
        let misses = count(&|k| matches!(k, EventKind::Miss { side: s, .. } if *s == side));
        if misses != stats.misses {
            return bad(format!("{misses} {name} miss events but summary says {}", stats.misses));
        }
        let wbs = count(&|k| matches!(k, EventKind::Writeback { side: s, .. } if *s == side));
        if wbs != stats.writebacks {
            return bad(format!("{wbs} {name} writeback events but summary says {}", stats.writebacks));
        }
        let tlb = count(&|k| matches!(k, EventKind::TlbMiss { side: s } if *s == side));
        if tlb != stats.tlb_misses {
            return bad(format!("{tlb} {name} TLB miss events but summary says {}", stats.tlb_misses));
        }
    }
    let b = &summary.branches;
    if b.executed != b.taken + b.not_taken {
        return bad(format!("branches executed {} != taken {} + not taken {}", b.executed, b.taken, b.not_taken));
    }
    let taken = count(&|k| matches!(k, EventKind::TakenBranch));
    if taken != b.taken {
        return bad(format!("{taken} taken-branch events but summary says {}", b.taken));
    }
    let mut prev = 0;
    for e in events {
        if e.insn < prev || e.insn > summary.insn_count {
            return bad(format!("event timestamp {} out of order or past {} instructions", e.insn, summary.insn_count));
        }
        prev = e.insn;
    }
    Ok(())
}

/// Folds an ordered event log into a cycle report.
pub fn account(events: &[TimingEvent], t: &TimingSpec, summary: &MemorySummary) -> Result<CycleReport, TimingError> {
    t.validate().map_err(|e| TimingError::InconsistentCounts(e.to_string()))?;
    check(summary, events)?;

    let mut imem = MemoryCycles {
        accesses: summary.imem.accesses,
        hits: summary.imem.hits,
        misses: summary.imem.misses,
        ..Default::default()
    };
    let mut dmem = MemoryCycles {
        accesses: summary.dmem.accesses,
        hits: summary.dmem.hits,
        misses: summary.dmem.misses,
        ..Default::default()
    };
    let mut branch = BranchCycles {
        executed: summary.branches.executed,
        taken: summary.branches.taken,
        not_taken: summary.branches.not_taken,
        branch_stall_cycles: 0,
    };
    let mut stall = 0u64;
    let mut bus_free = 0u64;
    let mut busy = 0u64;

    for e in events {
        let now = e.insn + stall;
        match e.kind {
            EventKind::Miss { side, bytes } => {
                let (m, penalty) = match side {
                    Side::Inst => (&mut imem, t.icache_penalty),
                    Side::Data => (&mut dmem, t.miss_penalty),
                };
                let occ = bus_occupancy(t, bytes);
                let start = now.max(bus_free);
                let wait = start - now;
                m.stall_bus_conflict += wait;
                m.stall_miss += penalty;
                bus_free = start + occ;
                busy += occ;
                stall += wait + penalty;
            }
            EventKind::Writeback { bytes, .. } => {
                let occ = bus_occupancy(t, bytes) + t.wb_penalty;
                let start = now.max(bus_free);
                bus_free = start + occ;
                busy += occ;
            }
            EventKind::TlbMiss { side } => {
                let m = match side {
                    Side::Inst => &mut imem,
                    Side::Data => &mut dmem,
                };
                m.stall_miss += t.tlb_lat;
                stall += t.tlb_lat;
            }
            EventKind::TakenBranch => {
                branch.branch_stall_cycles += t.branch_stall;
                stall += t.branch_stall;
            }
        }
    }
    imem.stall_total = imem.stall_miss + imem.stall_bus_conflict;
    dmem.stall_total = dmem.stall_miss + dmem.stall_bus_conflict;
    let execution_cycles = summary.insn_count;
    let total_cycles = execution_cycles + stall;
    Ok(CycleReport {
        total_cycles,
        execution_cycles,
        stall_cycles: stall,
        executed_operations: summary.op_count,
        imem,
        dmem,
        branch,
        bus_busy_cycles: busy,
        bandwidth_pct: bandwidth(busy, total_cycles),
        core_clk_mhz: t.core_clk_mhz,
    })
}

/// Hit and miss rates of one side, as two-decimal percentages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideRates {
    pub hit_rate: String,
    pub miss_rate: String,
}

/// `None` for a side with no accesses.
pub fn side_rates(m: &MemoryCycles) -> Option<SideRates> {
    (m.accesses > 0).then(|| SideRates {
        hit_rate: format!("{}%", numfmt::percent(m.hits, m.accesses)),
        miss_rate: format!("{}%", numfmt::percent(m.misses, m.accesses)),
    })
}

/// Instruction- and data-side rates of a report.
pub fn rates(report: &CycleReport) -> (Option<SideRates>, Option<SideRates>) {
    (side_rates(&report.imem), side_rates(&report.dmem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vex_timing() -> TimingSpec {
        TimingSpec {
            core_clk_mhz: 1000,
            bus_clk_mhz: 500,
            miss_penalty: 36,
            wb_penalty: 33,
            icache_penalty: 45,
            branch_stall: 1,
            ..Default::default()
        }
    }

    fn summary_for(events: &[TimingEvent], insns: u64) -> MemorySummary {
        let mut s = MemorySummary { insn_count: insns, op_count: insns, ..Default::default() };
        for e in events {
            match e.kind {
                EventKind::Miss { side: Side::Inst, .. } => s.imem.misses += 1,
                EventKind::Miss { side: Side::Data, .. } => s.dmem.misses += 1,
                EventKind::Writeback { side: Side::Inst, .. } => s.imem.writebacks += 1,
                EventKind::Writeback { side: Side::Data, .. } => s.dmem.writebacks += 1,
                EventKind::TlbMiss { side: Side::Inst } => s.imem.tlb_misses += 1,
                EventKind::TlbMiss { side: Side::Data } => s.dmem.tlb_misses += 1,
                EventKind::TakenBranch => s.branches.taken += 1,
            }
        }
        s.imem.accesses = s.imem.misses;
        s.dmem.accesses = s.dmem.misses;
        s.branches.executed = s.branches.taken;
        s
    }

    // Misses spread far enough apart that refills never overlap.
    fn spaced(kind: EventKind, n: u64, gap: u64) -> Vec<TimingEvent> {
        (0..n).map(|i| TimingEvent { insn: i * gap, kind }).collect()
    }

    #[test]
    fn miss_stall_goldens() {
        let ev = spaced(EventKind::Miss { side: Side::Inst, bytes: 64 }, 120, 10);
        let r = account(&ev, &vex_timing(), &summary_for(&ev, 1488)).unwrap();
        assert_eq!(r.imem.stall_miss, 5400);
        assert_eq!(r.imem.stall_bus_conflict, 0);

        let ev = spaced(EventKind::Miss { side: Side::Data, bytes: 32 }, 40, 10);
        let r = account(&ev, &vex_timing(), &summary_for(&ev, 1488)).unwrap();
        assert_eq!(r.dmem.stall_miss, 1440);
        r.check_identities().unwrap();
    }

    #[test]
    fn no_events_no_stall() {
        let r = account(&[], &vex_timing(), &summary_for(&[], 100)).unwrap();
        assert_eq!(r.stall_cycles, 0);
        assert_eq!(r.total_cycles, r.execution_cycles);
        assert_eq!(r.bandwidth_pct, 0.0);
    }

    #[test]
    fn memory_latency() {
        let t = TimingSpec { mem_lat_first: 18, mem_lat_next: 2, mem_width: 8, ..Default::default() };
        // brute force: count beats one byte-chunk at a time
        let brute = |bytes: u64| {
            let mut cycles = 0;
            let mut sent = 0;
            let mut beat = 0;
            while sent < bytes {
                cycles += if beat == 0 { 18 } else { 2 };
                sent += 8;
                beat += 1;
            }
            cycles
        };
        assert_eq!(main_memory_latency(&t, 64), 32);
        assert_eq!(main_memory_latency(&t, 64), brute(64));
        assert_eq!(main_memory_latency(&t, 8), 18);
        assert_eq!(main_memory_latency(&t, 4), 18);
        for bytes in 1..300 {
            assert_eq!(main_memory_latency(&t, bytes), brute(bytes));
        }
    }

    #[test]
    fn occupancy_scales_with_clock_ratio() {
        let t = vex_timing();
        assert_eq!(bus_occupancy(&t, 64), 16);
        assert_eq!(bus_occupancy(&t, 32), 8);
        let t = TimingSpec { core_clk_mhz: 1000, bus_clk_mhz: 300, ..vex_timing() };
        assert_eq!(bus_occupancy(&t, 8), 4);
    }

    #[test]
    fn back_to_back_misses_conflict() {
        let t = TimingSpec { icache_penalty: 1, ..vex_timing() };
        let ev = vec![
            TimingEvent { insn: 0, kind: EventKind::Miss { side: Side::Inst, bytes: 64 } },
            TimingEvent { insn: 0, kind: EventKind::Miss { side: Side::Inst, bytes: 64 } },
        ];
        let r = account(&ev, &t, &summary_for(&ev, 1)).unwrap();
        // first refill holds the bus 16 cycles; second starts at cycle 1
        assert_eq!(r.imem.stall_bus_conflict, 15);
        assert_eq!(r.bus_busy_cycles, 32);
        r.check_identities().unwrap();
    }

    #[test]
    fn writeback_does_not_stall() {
        let ev = vec![TimingEvent { insn: 0, kind: EventKind::Writeback { side: Side::Data, bytes: 32 } }];
        let r = account(&ev, &vex_timing(), &summary_for(&ev, 10)).unwrap();
        assert_eq!(r.stall_cycles, 0);
        assert_eq!(r.bus_busy_cycles, 8 + 33);
    }

    #[test]
    fn inconsistent_summary_rejected() {
        let ev = spaced(EventKind::Miss { side: Side::Data, bytes: 32 }, 3, 1);
        let mut s = summary_for(&ev, 10);
        s.dmem.misses = 2;
        s.dmem.accesses = 2;
        assert!(matches!(account(&ev, &vex_timing(), &s), Err(TimingError::InconsistentCounts(_))));
        let mut s = summary_for(&ev, 10);
        s.dmem.hits = 5;
        assert!(account(&ev, &vex_timing(), &s).is_err());
        let late = vec![TimingEvent { insn: 11, kind: EventKind::TakenBranch }];
        assert!(account(&late, &vex_timing(), &summary_for(&late, 10)).is_err());
    }

    #[test]
    fn rates_render() {
        let m = MemoryCycles { accesses: 1250, hits: 1130, misses: 120, ..Default::default() };
        let r = side_rates(&m).unwrap();
        assert_eq!((r.hit_rate.as_str(), r.miss_rate.as_str()), ("90.40%", "9.60%"));
        let m = MemoryCycles { accesses: 687, hits: 647, misses: 40, ..Default::default() };
        assert_eq!(side_rates(&m).unwrap().hit_rate, "94.18%");
        assert_eq!(side_rates(&MemoryCycles::default()), None);
    }

    fn event_strategy() -> impl Strategy<Value = Vec<TimingEvent>> {
        let kind = prop_oneof![
            (any::<bool>(), prop::sample::select(vec![16u64, 32, 64]))
                .prop_map(|(i, bytes)| EventKind::Miss { side: if i { Side::Inst } else { Side::Data }, bytes }),
            (any::<bool>(), prop::sample::select(vec![16u64, 32, 64]))
                .prop_map(|(i, bytes)| EventKind::Writeback { side: if i { Side::Inst } else { Side::Data }, bytes }),
            any::<bool>().prop_map(|i| EventKind::TlbMiss { side: if i { Side::Inst } else { Side::Data } }),
            Just(EventKind::TakenBranch),
        ];
        prop::collection::vec((0u64..3, kind), 0..200).prop_map(|steps| {
            let mut insn = 0;
            steps
                .into_iter()
                .map(|(gap, kind)| {
                    insn += gap;
                    TimingEvent { insn, kind }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn identities_hold(ev in event_strategy()) {
            let insns = ev.last().map_or(0, |e| e.insn) + 1;
            let r = account(&ev, &vex_timing(), &summary_for(&ev, insns)).unwrap();
            prop_assert!(r.check_identities().is_ok());
        }

        #[test]
        fn doubling_penalties_doubles_stall_miss(ev in event_strategy()) {
            let insns = ev.last().map_or(0, |e| e.insn) + 1;
            let t = vex_timing();
            let t2 = TimingSpec {
                miss_penalty: 2 * t.miss_penalty,
                icache_penalty: 2 * t.icache_penalty,
                wb_penalty: 2 * t.wb_penalty,
                branch_stall: 2 * t.branch_stall,
                tlb_lat: 2 * t.tlb_lat,
                ..t.clone()
            };
            let s = summary_for(&ev, insns);
            let a = account(&ev, &t, &s).unwrap();
            let b = account(&ev, &t2, &s).unwrap();
            prop_assert_eq!(b.imem.stall_miss, 2 * a.imem.stall_miss);
            prop_assert_eq!(b.dmem.stall_miss, 2 * a.dmem.stall_miss);
            prop_assert_eq!(b.branch.branch_stall_cycles, 2 * a.branch.branch_stall_cycles);
        }

        #[test]
        fn extra_miss_never_shortens_run(ev in event_strategy(), pos in any::<prop::sample::Index>(), inst in any::<bool>()) {
            let insns = ev.last().map_or(0, |e| e.insn) + 1;
            let base = account(&ev, &vex_timing(), &summary_for(&ev, insns)).unwrap();
            let mut more = ev.clone();
            let at = if more.is_empty() { 0 } else { pos.index(more.len() + 1) };
            let insn = if at == 0 { 0 } else { more[at - 1].insn };
            let side = if inst { Side::Inst } else { Side::Data };
            more.insert(at, TimingEvent { insn, kind: EventKind::Miss { side, bytes: 32 } });
            let after = account(&more, &vex_timing(), &summary_for(&more, insns)).unwrap();
            prop_assert!(after.total_cycles >= base.total_cycles);
        }

        #[test]
        fn single_miss_never_conflicts(insn in 0u64..100, inst in any::<bool>()) {
            let side = if inst { Side::Inst } else { Side::Data };
            let ev = vec![TimingEvent { insn, kind: EventKind::Miss { side, bytes: 64 } }];
            let r = account(&ev, &vex_timing(), &summary_for(&ev, 100)).unwrap();
            prop_assert_eq!(r.imem.stall_bus_conflict + r.dmem.stall_bus_conflict, 0);
        }
    }
}
