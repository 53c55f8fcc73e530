//! Hand-rolled parser for `sim`, which keeps SimpleScalar's `-name value`
//! flag spelling.

use std::fmt::Write as _;
use std::path::PathBuf;

use cachesim::config::{
    parse_hierarchy_args, DEFAULT_DL1, DEFAULT_DL2, DEFAULT_DTLB, DEFAULT_IL1, DEFAULT_IL2, DEFAULT_ITLB,
    HIERARCHY_FLAGS,
};
use cachesim::{Format, HierarchySpec, TimingSpec};

use crate::CliError;

#[derive(Debug)]
pub struct SimArgs {
    pub hierarchy: HierarchySpec,
    pub timing: TimingSpec,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub cycles: bool,
    pub profile: bool,
    pub elapsed: Option<u64>,
    pub trace: PathBuf,
}

pub enum Parsed {
    Run(Box<SimArgs>),
    Help,
}

pub fn help_text() -> String {
    let t = TimingSpec::default();
    let rows: [(&str, String, &str); 16] = [
        ("-h", "false".into(), "print help message"),
        ("-seed", "1".into(), "random number generator seed"),
        ("-cache:dl1", DEFAULT_DL1.into(), "l1 data cache config, i.e., {<config>|none}"),
        ("-cache:dl2", DEFAULT_DL2.into(), "l2 data cache config, i.e., {<config>|none}"),
        ("-cache:il1", DEFAULT_IL1.into(), "l1 inst cache config, i.e., {<config>|dl1|dl2|none}"),
        ("-cache:il2", DEFAULT_IL2.into(), "l2 instruction cache config, i.e., {<config>|dl2|none}"),
        ("-tlb:itlb", DEFAULT_ITLB.into(), "instruction TLB config, i.e., {<config>|none}"),
        ("-tlb:dtlb", DEFAULT_DTLB.into(), "data TLB config, i.e., {<config>|none}"),
        ("-flush", "false".into(), "flush caches on system calls"),
        (
            "-mem:lat",
            format!("{} {}", t.mem_lat_first, t.mem_lat_next),
            "memory access latency (<first_chunk> <inter_chunk>)",
        ),
        ("-mem:width", t.mem_width.to_string(), "memory access bus width (in bytes)"),
        ("-tlb:lat", t.tlb_lat.to_string(), "inst/data TLB miss latency (in cycles)"),
        ("--format", "text".into(), "report format, i.e., {text|csv|json}"),
        ("--out", "<stdout>".into(), "write the report to this file"),
        ("--cycles", "false".into(), "add cycle accounting to the report"),
        ("--profile", "false".into(), "append a flat per-region cycle profile"),
    ];
    let mut out = String::from(
        "usage: cachesim sim [flags] <trace.ct|trace.ctb>\n\n\
         Functional cache simulator. Cache statistics are generated for a\n\
         user-selected cache and TLB configuration, which may include up to two\n\
         levels of instruction and data cache (with any levels unified), and one\n\
         level of instruction and data TLBs.\n\n",
    );
    for (flag, default, desc) in rows {
        let _ = writeln!(out, "# {flag:<14} {default} # {desc}");
    }
    let _ = writeln!(out, "# {:<14} <none> # report this many seconds as sim_elapsed_time", "--elapsed");
    out.push_str(
        "\nThe cache config parameter <config> has the following format:\n\n\
         \x20   <name>:<nsets>:<bsize>:<assoc>:<repl>\n\n\
         \x20   <name>   - name of the cache being defined\n\
         \x20   <nsets>  - number of sets in the cache\n\
         \x20   <bsize>  - block size of the cache\n\
         \x20   <assoc>  - associativity of the cache\n\
         \x20   <repl>   - block replacement strategy, 'l'-LRU, 'f'-FIFO, 'r'-random\n\n\
         \x20   Examples:   -cache:dl1 dl1:4096:32:1:l\n\
         \x20               -tlb:dtlb dtlb:128:4096:32:r\n",
    );
    out
}

fn number(flag: &str, value: &str) -> Result<u64, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("{flag}: `{value}` is not a non-negative integer")))
}

pub fn parse(args: &[String]) -> Result<Parsed, CliError> {
    let mut hierarchy_args: Vec<&str> = Vec::new();
    let mut timing = TimingSpec::default();
    let mut parsed = SimArgs {
        hierarchy: HierarchySpec::default(),
        timing: TimingSpec::default(),
        seed: 1,
        format: Format::Text,
        out: None,
        cycles: false,
        profile: false,
        elapsed: None,
        trace: PathBuf::new(),
    };
    let mut positional = Vec::new();
    let mut i = 0;
    let take = |i: &mut usize, flag: &str| -> Result<&str, CliError> {
        *i += 1;
        args.get(*i).map(String::as_str).ok_or_else(|| CliError::Usage(format!("flag `{flag}` requires a value")))
    };
    while i < args.len() {
        let flag = args[i].as_str();
        match flag {
            "-h" | "-help" | "--help" => return Ok(Parsed::Help),
            f if HIERARCHY_FLAGS.contains(&f) => {
                let value = take(&mut i, f)?;
                hierarchy_args.extend([f, value]);
            }
            "-mem:lat" => {
                timing.mem_lat_first = number(flag, take(&mut i, flag)?)?;
                timing.mem_lat_next = number(flag, take(&mut i, flag)?)?;
            }
            "-mem:width" => timing.mem_width = number(flag, take(&mut i, flag)?)?,
            "-tlb:lat" => timing.tlb_lat = number(flag, take(&mut i, flag)?)?,
            "-seed" => parsed.seed = number(flag, take(&mut i, flag)?)?,
            "--format" => {
                parsed.format = take(&mut i, flag)?.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            }
            "--out" => parsed.out = Some(PathBuf::from(take(&mut i, flag)?)),
            "--elapsed" => parsed.elapsed = Some(number(flag, take(&mut i, flag)?)?),
            "--cycles" => parsed.cycles = true,
            "--profile" => parsed.profile = true,
            f if f.starts_with('-') && f.len() > 1 => {
                return Err(CliError::Usage(format!("unknown flag `{f}`")));
            }
            _ => positional.push(flag),
        }
        i += 1;
    }
    match positional.as_slice() {
        [trace] => parsed.trace = PathBuf::from(trace),
        [] => return Err(CliError::Usage("missing trace file".into())),
        more => return Err(CliError::Usage(format!("expected one trace file, got {}", more.len()))),
    }
    timing.validate().map_err(|e| CliError::Config(e.to_string()))?;
    parsed.hierarchy = parse_hierarchy_args(&hierarchy_args).map_err(|e| CliError::Config(e.to_string()))?;
    parsed.timing = timing;
    Ok(Parsed::Run(Box::new(parsed)))
}
