//! Report rendering and machine-readable export.
//!
//! Text shapes:
//! - sim-cache statistics: one `<name> <value> # <description>` line per
//!   counter, rates at four decimals.
//! - VEX cycle summary: totals, branch statistics, instruction/data memory
//!   blocks and bus bandwidth, percentages at two decimals.
//! - flat region profile: one row per region, sorted by total cycles.
//!
//! All rounding is half-up at the rendered precision.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cache::CacheStats;
use crate::config::TimingSpec;
use crate::hierarchy::SimReport;
use crate::numfmt::{percent, ratio};
use crate::sweep::{SweepPolicy, SweepTable};
use crate::timing::{CycleReport, MemoryCycles};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unsupported output format `{0}` (expected text, csv or json)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(ReportError::UnsupportedFormat(other.to_string())),
        }
    }
}

const CACHE_COUNTERS: [(&str, &str); 6] = [
    ("accesses", "total number of accesses"),
    ("hits", "total number of hits"),
    ("misses", "total number of misses"),
    ("replacements", "total number of replacements"),
    ("writebacks", "total number of writebacks"),
    ("invalidations", "total number of invalidations"),
];

fn cache_lines(out: &mut String, name: &str, s: &CacheStats) {
    let values = [s.accesses, s.hits, s.misses, s.replacements, s.writebacks, s.invalidations];
    for ((counter, desc), value) in CACHE_COUNTERS.iter().zip(values) {
        let _ = writeln!(out, "{name}.{counter} {value} # {desc}");
    }
    let rates = [
        ("miss_rate", s.misses, "miss rate (i.e., misses/ref)"),
        ("repl_rate", s.replacements, "replacement rate (i.e., repls/ref)"),
        ("wb_rate", s.writebacks, "writeback rate (i.e., wrbks/ref)"),
        ("inv_rate", s.invalidations, "invalidation rate (i.e., invs/ref)"),
    ];
    for (counter, num, desc) in rates {
        let _ = writeln!(out, "{name}.{counter} {} # {desc}", ratio(num, s.accesses, 4));
    }
}

pub fn render_simcache(report: &SimReport) -> String {
    let mut out = String::from("sim: ** simulation statistics **\n");
    let _ = writeln!(out, "sim_num_insn {} # total number of instructions executed", report.sim_num_insn);
    let _ = writeln!(out, "sim_num_refs {} # total number of loads and stores executed", report.sim_num_refs);
    let _ = writeln!(out, "sim_elapsed_time {} # total simulation time in seconds", report.sim_elapsed_time);
    let _ = writeln!(
        out,
        "sim_inst_rate {} # simulation speed (in insts/sec)",
        ratio(report.sim_num_insn, report.sim_elapsed_time, 4)
    );
    for c in &report.caches {
        cache_lines(&mut out, &c.name, &c.stats);
    }
    out
}

fn pct(num: u64, den: u64) -> String {
    format!("({:>6}%)", percent(num, den))
}

fn line(out: &mut String, label: &str, value: impl std::fmt::Display, suffix: &str) {
    let _ = writeln!(out, "{label:<29}{value}{}{suffix}", if suffix.is_empty() { "" } else { " " });
}

fn sub_line(out: &mut String, label: &str, value: impl std::fmt::Display, suffix: &str) {
    let _ = writeln!(out, "  {label:<28}{value}{}{suffix}", if suffix.is_empty() { "" } else { " " });
}

fn memory_block(out: &mut String, title: &str, stall_title: &str, m: &MemoryCycles, share_line: bool) {
    out.push_str(title);
    out.push('\n');
    let any = m.accesses > 0;
    sub_line(out, "Accesses:", m.accesses, if any && share_line { "(100.00%)" } else { "" });
    let rate = |n| if any { pct(n, m.accesses) } else { String::new() };
    sub_line(out, "Hits (Hit Rate):", m.hits, &rate(m.hits));
    sub_line(out, "Misses (Miss Rate):", m.misses, &rate(m.misses));
    out.push_str(stall_title);
    out.push('\n');
    let stalled = m.stall_total > 0;
    let share = |n| if stalled { pct(n, m.stall_total) } else { String::new() };
    sub_line(out, "Total (in cycles):", m.stall_total, &share(m.stall_total));
    sub_line(out, "Due to Misses:", m.stall_miss, &share(m.stall_miss));
    sub_line(out, "Due to Bus Conflicts:", m.stall_bus_conflict, &share(m.stall_bus_conflict));
}

/// Bus bandwidth as rendered, e.g. `78.16`.
pub fn bandwidth_text(c: &CycleReport) -> String {
    percent(c.bus_busy_cycles, c.total_cycles)
}

pub fn render_vex_summary(c: &CycleReport) -> String {
    let mut out = String::new();
    line(
        &mut out,
        "Total Cycles:",
        c.total_cycles,
        &format!("({} msec)", ratio(c.total_cycles, c.core_clk_mhz * 1000, 6)),
    );
    let of_total = |n| if c.total_cycles > 0 { pct(n, c.total_cycles) } else { String::new() };
    line(&mut out, "Execution Cycles:", c.execution_cycles, &of_total(c.execution_cycles));
    line(&mut out, "Stall Cycles:", c.stall_cycles, &of_total(c.stall_cycles));
    line(&mut out, "Executed operations:", c.executed_operations, "");
    out.push('\n');

    let b = &c.branch;
    let bases = |n: u64, with_br: bool| {
        let mut s = String::new();
        if c.executed_operations > 0 {
            let _ = write!(s, "({:>6}% ops)", percent(n, c.executed_operations));
        }
        if c.execution_cycles > 0 {
            let _ = write!(s, "({:>5}% insts)", percent(n, c.execution_cycles));
        }
        if with_br && b.executed > 0 {
            let _ = write!(s, "({:>5}% br)", percent(n, b.executed));
        }
        s
    };
    line(&mut out, "Executed branches:", b.executed, &bases(b.executed, false));
    line(&mut out, "Not taken branches:", b.not_taken, &bases(b.not_taken, true));
    line(&mut out, "Taken branches:", b.taken, &bases(b.taken, true));
    line(&mut out, "Branch Stall Cycles:", b.branch_stall_cycles, "");
    out.push('\n');

    memory_block(&mut out, "Instruction Memory Operations:", "Instruction Memory Stall Cycles", &c.imem, false);
    out.push('\n');
    memory_block(&mut out, "Data Memory Operations:      Cache", "Data Memory Stall Cycles", &c.dmem, true);
    out.push('\n');
    let _ = writeln!(out, "Percentage Bus Bandwidth Consumed: {}%", bandwidth_text(c));
    out
}

/// One line of the flat region profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionProfileRow {
    pub name: String,
    pub total_cycles: u64,
    pub insts: u64,
    pub dcache_cycles: u64,
    pub icache_cycles: u64,
}

/// Per-region cycle attribution: instructions plus miss penalties (TLB misses
/// included) plus taken-branch stalls. Empty regions are dropped; rows are
/// sorted by total cycles, descending, then by name.
pub fn region_profile(report: &SimReport, timing: &TimingSpec) -> Vec<RegionProfileRow> {
    let mut rows: Vec<RegionProfileRow> = report
        .regions
        .iter()
        .map(|r| {
            let icache = r.imem.misses * timing.icache_penalty + r.imem.tlb_misses * timing.tlb_lat;
            let dcache = r.dmem.misses * timing.miss_penalty + r.dmem.tlb_misses * timing.tlb_lat;
            let branch = r.branches.taken * timing.branch_stall;
            RegionProfileRow {
                name: r.name.clone(),
                total_cycles: r.insts + icache + dcache + branch,
                insts: r.insts,
                dcache_cycles: dcache,
                icache_cycles: icache,
            }
        })
        .filter(|r| r.total_cycles > 0 || r.insts > 0)
        .collect();
    rows.sort_by(|a, b| b.total_cycles.cmp(&a.total_cycles).then_with(|| a.name.cmp(&b.name)));
    rows
}

pub fn render_region_profile(report: &SimReport, timing: &TimingSpec) -> String {
    let rows = region_profile(report, timing);
    let sum = |f: fn(&RegionProfileRow) -> u64| rows.iter().map(f).sum::<u64>();
    let (total, insts, dcache, icache) =
        (sum(|r| r.total_cycles), sum(|r| r.insts), sum(|r| r.dcache_cycles), sum(|r| r.icache_cycles));
    let mut out = String::from("Flat profile (cycles)\n");
    let _ = writeln!(
        out,
        "{:>10} {:>7} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7}  Function",
        "Total", "Total%", "Insts", "Insts%", "Dcache", "Dcache%", "Icache", "Icache%"
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{:>10} {:>7} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7}  {}",
            r.total_cycles,
            percent(r.total_cycles, total),
            r.insts,
            percent(r.insts, insts),
            r.dcache_cycles,
            percent(r.dcache_cycles, dcache),
            r.icache_cycles,
            percent(r.icache_cycles, icache),
            r.name
        );
    }
    out
}

/// Types that can be written as CSV and JSON.
pub trait Export: Serialize {
    fn to_text(&self) -> String;

    fn to_csv(&self) -> Result<String, ReportError> {
        let value = serde_json::to_value(self)?;
        let mut pairs = Vec::new();
        flatten("", &value, &mut pairs);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "value"])?;
        for (k, v) in pairs {
            w.write_record([k, v])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv is utf-8"))
    }

    fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl Export for SimReport {
    fn to_text(&self) -> String {
        render_simcache(self)
    }
}

impl Export for CycleReport {
    fn to_text(&self) -> String {
        render_vex_summary(self)
    }
}

/// Header of LRU-only sweep CSVs. Tables with other policies append `,policy`.
pub const SWEEP_CSV_HEADER: &str = "nsets,bsize,assoc,misses,miss_rate";

impl Export for SweepTable {
    fn to_text(&self) -> String {
        let mut out = format!(
            "{:<7}{:>8}{:>7}{:>7}{:>10}{:>10}{:>11}\n",
            "policy", "nsets", "bsize", "assoc", "accesses", "misses", "miss_rate"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<7}{:>8}{:>7}{:>7}{:>10}{:>10}{:>11}",
                r.policy.as_str(),
                r.nsets,
                r.bsize,
                r.assoc,
                r.accesses,
                r.misses,
                ratio(r.misses, r.accesses, 4)
            );
        }
        out
    }

    fn to_csv(&self) -> Result<String, ReportError> {
        let with_policy = self.rows.iter().any(|r| r.policy != SweepPolicy::Lru);
        let mut out = String::from(SWEEP_CSV_HEADER);
        if with_policy {
            out.push_str(",policy");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{}", r.nsets, r.bsize, r.assoc, r.misses, r.miss_rate);
            if with_policy {
                let _ = write!(out, ",{}", r.policy.as_str());
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn export<T: Export>(item: &T, format: Format) -> Result<String, ReportError> {
    match format {
        Format::Text => Ok(item.to_text()),
        Format::Csv => item.to_csv(),
        Format::Json => item.to_json(),
    }
}

/// Parses a JSON export back.
pub fn import_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ReportError> {
    Ok(serde_json::from_str(text)?)
}
