use cachesim::config::{parse_hierarchy_args, parse_vex_cfg, CacheSpec, ReplacementPolicy};
use cachesim::hierarchy::{Hierarchy, Level, DEFAULT_REGION};
use cachesim::report::{export, import_json, region_profile, Format};
use cachesim::sweep::{sweep, RefStream, SweepOptions, SweepPolicy, SweepTable};
use cachesim::timing::{account, MemorySummary};
use cachesim::trace::{gen_loop, gen_mixed, read_trace_file, write_trace_file, MixedParams, TraceRecord};
use cachesim::{Clock, Execution, HierarchySpec, SimReport};
use proptest::prelude::*;

fn mixed(seed: u64, insts: u64) -> Vec<TraceRecord> {
    gen_mixed(seed, insts, &MixedParams { data_bytes: 16 << 10, ..MixedParams::default() })
}

fn dl1_only(spec: &str) -> HierarchySpec {
    parse_hierarchy_args(&[
        "-cache:dl1",
        spec,
        "-cache:dl2",
        "none",
        "-cache:il1",
        "none",
        "-cache:il2",
        "none",
        "-tlb:itlb",
        "none",
        "-tlb:dtlb",
        "none",
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_rows_match_full_simulation(seed in 0u64..1000, insts in 1u64..2000, lg_sets in 0u32..7, lg_bsize in 3u32..7) {
        let trace = mixed(seed, insts);
        let (nsets, bsize) = (1u64 << lg_sets, 1u64 << lg_bsize);
        let opts = SweepOptions { policies: vec![SweepPolicy::Lru, SweepPolicy::Fifo], ..SweepOptions::default() };
        let table = sweep(&trace, &[(nsets, bsize)], &[1, 2, 4, 8], &opts).unwrap();
        for row in &table.rows {
            let repl = if row.policy == SweepPolicy::Lru { 'l' } else { 'f' };
            let spec = dl1_only(&format!("dl1:{nsets}:{bsize}:{}:{repl}", row.assoc));
            let report = Hierarchy::build(&spec, 1).unwrap().run_records(&trace, Clock::Fixed(1));
            let dl1 = report.cache("dl1").unwrap();
            prop_assert_eq!(row.misses, dl1.stats.misses, "{:?}", row);
            prop_assert_eq!(row.accesses, dl1.stats.accesses);
        }
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree(seed in 0u64..1000) {
        let trace = mixed(seed, 1500);
        let geometries = [(16, 16), (64, 32), (256, 64), (1024, 128)];
        let policies = vec![SweepPolicy::Lru, SweepPolicy::Fifo, SweepPolicy::Random, SweepPolicy::Opt];
        let run = |execution| {
            let opts = SweepOptions { policies: policies.clone(), execution, seed, stream: RefStream::Unified };
            sweep(&trace, &geometries, &[1, 2, 4, 8], &opts).unwrap()
        };
        prop_assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }
}

#[test]
fn sweep_orders_rows_by_policy_geometry_assoc() {
    let trace = gen_loop(0, 8192, 4, 16);
    let opts = SweepOptions { policies: vec![SweepPolicy::Lru, SweepPolicy::Opt], ..SweepOptions::default() };
    let table = sweep(&trace, &[(64, 32), (256, 32)], &[1, 2, 4, 8], &opts).unwrap();
    let keys: Vec<_> = table.rows.iter().map(|r| (r.policy, r.nsets, r.assoc)).collect();
    assert_eq!(keys.len(), 16);
    assert_eq!(keys[0], (SweepPolicy::Lru, 64, 1));
    assert_eq!(keys[7], (SweepPolicy::Lru, 256, 8));
    assert_eq!(keys[8], (SweepPolicy::Opt, 64, 1));
    // the 8 KiB loop fits a 256x32x1 cache exactly: only cold misses
    let fits = table.rows.iter().find(|r| r.policy == SweepPolicy::Lru && r.nsets == 256 && r.assoc == 1).unwrap();
    assert_eq!(fits.misses, 256);
    // and thrashes a 64-set direct-mapped one
    let thrash = table.rows.iter().find(|r| r.policy == SweepPolicy::Lru && r.nsets == 64 && r.assoc == 1).unwrap();
    assert_eq!(thrash.misses, fits.accesses / 2);
    let back: SweepTable = import_json(&export(&table, Format::Json).unwrap()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn rejects_invalid_sweep_geometry() {
    let trace = gen_loop(0, 64, 1, 1);
    assert!(sweep(&trace, &[(48, 32)], &[1], &SweepOptions::default()).is_err());
    assert!(sweep(&trace, &[], &[1], &SweepOptions::default()).is_err());
}

#[test]
fn text_and_binary_files_give_identical_reports() {
    let dir = tempdir();
    let trace = {
        let mut t = vec![TraceRecord::region("setup")];
        t.extend(mixed(3, 3000));
        t.push(TraceRecord::Syscall);
        t.push(TraceRecord::region("loop"));
        t.extend(mixed(4, 3000));
        t
    };
    let text = dir.join("t.ct");
    let bin = dir.join("t.ctb");
    write_trace_file(&text, &trace).unwrap();
    write_trace_file(&bin, &trace).unwrap();
    assert_eq!(read_trace_file(&text).unwrap(), trace);
    assert_eq!(read_trace_file(&bin).unwrap(), trace);
    let run = |path: &std::path::Path| -> SimReport {
        let mut h = Hierarchy::build(&HierarchySpec::default(), 1).unwrap();
        h.run(cachesim::trace::open_trace(path).unwrap(), Clock::Fixed(1)).unwrap()
    };
    assert_eq!(run(&text), run(&bin));
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cachesim-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn region_rows_partition_totals() {
    let mut trace = mixed(5, 500);
    trace.insert(200, TraceRecord::region("hot"));
    trace.push(TraceRecord::region(DEFAULT_REGION));
    trace.extend(mixed(6, 100));
    let report = Hierarchy::build(&HierarchySpec::default(), 1).unwrap().run_records(&trace, Clock::Fixed(1));
    assert_eq!(report.regions.len(), 2);
    let sum = report.region_sum();
    assert_eq!(sum.insts, report.sim_num_insn);
    assert_eq!(sum.dmem, report.dmem);
    let t = cachesim::TimingSpec::default();
    let rows = region_profile(&report, &t);
    assert_eq!(rows.iter().map(|r| r.insts).sum::<u64>(), report.sim_num_insn);
}

#[test]
fn unified_l1_serves_both_streams() {
    let spec = parse_hierarchy_args(&["-cache:il1", "dl1", "-cache:dl1", "ul1:128:32:2:l"]).unwrap();
    let trace = mixed(7, 800);
    let report = Hierarchy::build(&spec, 1).unwrap().run_records(&trace, Clock::Fixed(1));
    let ul1 = report.cache("ul1").unwrap();
    assert!(ul1.levels.contains(&Level::Il1) && ul1.levels.contains(&Level::Dl1));
    assert_eq!(ul1.stats.accesses, report.imem.accesses + report.dmem.accesses);
    assert!(report.cache("il1").is_none());
}

#[test]
fn vex_config_drives_cycle_accounting() {
    let cfg = parse_vex_cfg(
        "CoreCkFreq 400\nBusCkFreq 100\nlg2CacheSize 13\nlg2Sets 1\nlg2LineSize 5\nMissPenalty 20\nWBPenalty 10\n\
         lg2ICacheSize 12\nlg2ICacheSets 0\nlg2ICacheLineSize 5\nICachePenalty 25\nBranchStall 2\n",
    )
    .unwrap();
    let spec = HierarchySpec::split_l1(cfg.icache.clone(), cfg.dcache.clone());
    let mut h = Hierarchy::build(&spec, 1).unwrap().with_event_log();
    let report = h.run_records(&mixed(8, 4000), Clock::Fixed(1));
    let c = account(h.events(), &cfg.timing, &MemorySummary::from_report(&report)).unwrap();
    c.check_identities().unwrap();
    assert_eq!(c.execution_cycles, 4000);
    assert_eq!(c.imem.stall_miss, report.imem.misses * 25);
    assert_eq!(c.dmem.stall_miss, report.dmem.misses * 20);
    assert_eq!(c.branch.branch_stall_cycles, report.branches.taken * 2);
    assert!(c.bus_busy_cycles > 0 && c.bandwidth_pct <= 100.0);
}

#[test]
fn lru_fifo_random_differ_only_in_victims() {
    let trace = mixed(9, 3000);
    let mut misses = Vec::new();
    for repl in [ReplacementPolicy::Lru, ReplacementPolicy::Fifo, ReplacementPolicy::Random] {
        let spec = CacheSpec::new("dl1", 32, 32, 4, repl).unwrap();
        let h = dl1_only(&spec.to_string());
        let r = Hierarchy::build(&h, 1).unwrap().run_records(&trace, Clock::Fixed(1));
        let s = r.cache("dl1").unwrap().stats;
        assert_eq!(s.accesses, r.dmem.accesses);
        misses.push(s.misses);
    }
    let cold = cachesim::sweep::block_refs(&trace, 32, RefStream::Data)
        .into_iter()
        .collect::<std::collections::HashSet<_>>()
        .len() as u64;
    assert!(misses.iter().all(|&m| m >= cold), "{misses:?} vs {cold} cold");
}
