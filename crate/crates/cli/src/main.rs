//! `cachesim`: simulate, VEX-simulate, sweep and generate traces.
//!
//! Exit codes: 0 success, 1 usage error, 2 trace or I/O error, 3 bad
//! configuration.

mod sim_args;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cachesim::config::parse_vex_cfg;
use cachesim::hierarchy::Hierarchy;
use cachesim::report::{export, render_region_profile, Export, ReportError};
use cachesim::sweep::RefStream;
use cachesim::timing::{account, with_memory_penalties, MemorySummary};
use cachesim::trace::{self, gen_loop, gen_mixed, gen_random, gen_sequential, MixedParams, TraceRecord};
use cachesim::{
    Clock, CycleReport, Execution, Format, HierarchySpec, SimReport, SweepOptions, SweepPolicy, TimingSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Trace(String),
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Trace(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Trace(m) => write!(f, "input error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
        }
    }
}

fn trace_error(path: &Path, e: trace::TraceError) -> CliError {
    CliError::Trace(format!("{}: {e}", path.display()))
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnsupportedFormat(_) => CliError::Usage(e.to_string()),
            other => CliError::Trace(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cachesim", version, about = "Trace-driven cache hierarchy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Functional cache simulation with SimpleScalar-style flags (see `sim -h`).
    #[command(disable_help_flag = true)]
    Sim {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        args: Vec<String>,
    },
    /// Cycle-level simulation driven by a vex.cfg file.
    Vexsim {
        cfg: PathBuf,
        trace: PathBuf,
        /// Append a flat per-region cycle profile.
        #[arg(long)]
        profile: bool,
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Miss counts for many geometries from one pass over the trace.
    Sweep {
        trace: PathBuf,
        /// Comma-separated set counts.
        #[arg(long, value_delimiter = ',', required = true)]
        sets: Vec<u64>,
        /// Comma-separated block sizes in bytes.
        #[arg(long, value_delimiter = ',', required = true)]
        bsize: Vec<u64>,
        /// Comma-separated associativities.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        assoc: Vec<u64>,
        /// Comma-separated policies: lru, fifo, random, opt.
        #[arg(long, value_delimiter = ',', default_value = "lru", value_parser = parse_policy)]
        policies: Vec<SweepPolicy>,
        /// Also report Belady's optimal policy.
        #[arg(long)]
        opt: bool,
        #[arg(long, value_enum, default_value = "data")]
        stream: StreamArg,
        /// Seed for random replacement rows.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run geometries one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace (text, or binary when the output ends in .ctb).
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// References (sequential, random) or instructions (mixed).
    #[arg(long, default_value_t = 10_000)]
    count: u64,
    #[arg(long, default_value = "0x10000000", value_parser = parse_addr)]
    base: u64,
    /// Address range for random, working-set size for loop, in bytes.
    #[arg(long, default_value_t = 64 << 10)]
    range: u64,
    #[arg(long, default_value_t = 4)]
    stride: u64,
    #[arg(long, default_value_t = 10)]
    iterations: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StreamArg {
    Data,
    Inst,
    Unified,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GenKind {
    Sequential,
    Loop,
    Random,
    Mixed,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: ReportError| e.to_string())
}

fn parse_policy(s: &str) -> Result<SweepPolicy, String> {
    SweepPolicy::parse(s).ok_or_else(|| format!("unknown policy `{s}` (expected lru, fifo, random or opt)"))
}

fn parse_addr(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("`{s}` is not an address"))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Trace(e.to_string());
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Trace(format!("{}: {e}", path.display()))),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(io_err),
    }
}

/// Functional statistics plus cycle accounting, exported together.
#[derive(Serialize)]
struct SimWithCycles<'a> {
    sim: &'a SimReport,
    cycles: &'a CycleReport,
}

impl Export for SimWithCycles<'_> {
    fn to_text(&self) -> String {
        format!("{}\n{}", self.sim.to_text(), self.cycles.to_text())
    }
}

fn cycle_report(h: &mut Hierarchy, report: &SimReport, timing: &TimingSpec) -> Result<CycleReport, CliError> {
    let events = h.take_events();
    account(&events, timing, &MemorySummary::from_report(report)).map_err(|e| CliError::Config(e.to_string()))
}

fn run_sim(argv: &[String]) -> Result<(), CliError> {
    let parsed = sim_args::parse(argv).inspect_err(|e| {
        if let CliError::Usage(_) = e {
            eprintln!("{}", sim_args::help_text());
        }
    })?;
    let args = match parsed {
        sim_args::Parsed::Help => return emit(&sim_args::help_text(), None),
        sim_args::Parsed::Run(a) => a,
    };
    let mut h = Hierarchy::build(&args.hierarchy, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    if args.cycles {
        h = h.with_event_log();
    }
    let clock = args.elapsed.map_or(Clock::Wall, Clock::Fixed);
    let report = h
        .run(trace::open_trace(&args.trace).map_err(|e| trace_error(&args.trace, e))?, clock)
        .map_err(|e| trace_error(&args.trace, e))?;
    log::info!("simulated {} instructions, {} references", report.sim_num_insn, report.sim_num_refs);

    let l1_bsize = |spec: Option<&cachesim::CacheSpec>| spec.map_or(args.timing.mem_width, |s| s.bsize);
    let il1 = report.cache_at(cachesim::hierarchy::Level::Il1).map(|c| &c.spec);
    let dl1 = report.cache_at(cachesim::hierarchy::Level::Dl1).map(|c| &c.spec);
    let timing = with_memory_penalties(&args.timing, l1_bsize(il1), l1_bsize(dl1));

    let mut text = if args.cycles {
        let cycles = cycle_report(&mut h, &report, &timing)?;
        export(&SimWithCycles { sim: &report, cycles: &cycles }, args.format)?
    } else {
        export(&report, args.format)?
    };
    if args.profile && args.format == Format::Text {
        text.push('\n');
        text.push_str(&render_region_profile(&report, &timing));
    }
    emit(&text, args.out.as_deref())
}

fn run_vexsim(
    cfg: &Path,
    trace_path: &Path,
    profile: bool,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(cfg).map_err(|e| CliError::Config(format!("{}: {e}", cfg.display())))?;
    let vex = parse_vex_cfg(&text).map_err(|e| CliError::Config(format!("{}: {e}", cfg.display())))?;
    let spec = HierarchySpec::split_l1(vex.icache.clone(), vex.dcache.clone());
    let mut h = Hierarchy::build(&spec, 1).map_err(|e| CliError::Config(e.to_string()))?.with_event_log();
    let report = h
        .run(trace::open_trace(trace_path).map_err(|e| trace_error(trace_path, e))?, Clock::Fixed(1))
        .map_err(|e| trace_error(trace_path, e))?;
    let cycles = cycle_report(&mut h, &report, &vex.timing)?;
    let mut text = export(&cycles, format)?;
    if profile && format == Format::Text {
        text.push('\n');
        text.push_str(&render_region_profile(&report, &vex.timing));
    }
    emit(&text, out)
}

fn run_gen(g: &GenArgs) -> Result<(), CliError> {
    let GenArgs { kind, seed, count, base, range, stride, iterations, ref out } = *g;
    if stride == 0 || range == 0 {
        return Err(CliError::Usage("--stride and --range must be >= 1".into()));
    }
    let records: Vec<TraceRecord> = match kind {
        GenKind::Sequential => gen_sequential(base, count, stride),
        GenKind::Loop => gen_loop(base, range, iterations, stride),
        GenKind::Random => gen_random(seed, base, range, count),
        GenKind::Mixed => {
            if range < 8 {
                return Err(CliError::Usage("--range must be >= 8 for mixed traces".into()));
            }
            gen_mixed(seed, count, &MixedParams { data_base: base, data_bytes: range, ..MixedParams::default() })
        }
    };
    match out.as_deref() {
        Some(path) => {
            trace::write_trace_file(path, &records).map_err(|e| CliError::Trace(format!("{}: {e}", path.display())))
        }
        None => trace::write_text(io::stdout().lock(), &records).map_err(|e| CliError::Trace(e.to_string())),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sim { args } => run_sim(&args),
        Command::Vexsim { cfg, trace, profile, format, out } => {
            run_vexsim(&cfg, &trace, profile, format, out.as_deref())
        }
        Command::Sweep {
            trace: path,
            sets,
            bsize,
            assoc,
            mut policies,
            opt,
            stream,
            seed,
            sequential,
            format,
            out,
        } => {
            if opt && !policies.contains(&SweepPolicy::Opt) {
                policies.push(SweepPolicy::Opt);
            }
            let records = trace::read_trace_file(&path).map_err(|e| trace_error(&path, e))?;
            let geometries: Vec<(u64, u64)> = sets.iter().flat_map(|&s| bsize.iter().map(move |&b| (s, b))).collect();
            let opts = SweepOptions {
                stream: match stream {
                    StreamArg::Data => RefStream::Data,
                    StreamArg::Inst => RefStream::Inst,
                    StreamArg::Unified => RefStream::Unified,
                },
                policies,
                seed,
                execution: if sequential { Execution::Sequential } else { Execution::default() },
            };
            let table =
                cachesim::sweep(&records, &geometries, &assoc, &opts).map_err(|e| CliError::Config(e.to_string()))?;
            emit(&export(&table, format)?, out.as_deref())
        }
        Command::Gen(g) => run_gen(&g),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cachesim: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `cachesim help` or `cachesim sim -h` for usage");
            }
            ExitCode::from(e.code())
        }
    }
}
