//! Memory-reference traces.
//!
//! Text form (`.ct`), one record per line, `#` starts a comment:
//!
//! ```text
//! I <hex-addr> [<ops>]    instruction fetch, optional operation count
//! L <hex-addr> <size>     load of <size> bytes
//! S <hex-addr> <size>     store of <size> bytes
//! B T|N                   branch, taken or not taken
//! Y                       system call
//! R <name>                switch attribution region
//! ```
//!
//! Binary form (`.ctb`), fixed 11-byte records: one kind byte (the ASCII
//! letter of the text form), an 8-byte little-endian address and a 2-byte
//! little-endian size/ops field. Branches store 1 (taken) or 0 in the address
//! field. Regions store the name length in the size field and the UTF-8 name
//! bytes follow the record.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest size/ops value; both forms store it in 16 bits.
pub const MAX_SIZE: u32 = u16::MAX as u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceRecord {
    Inst { addr: u64, ops: u32 },
    Load { addr: u64, size: u32 },
    Store { addr: u64, size: u32 },
    Branch { taken: bool },
    Syscall,
    Region { name: String },
}

impl TraceRecord {
    pub fn inst(addr: u64) -> Self {
        TraceRecord::Inst { addr, ops: 1 }
    }

    pub fn load(addr: u64, size: u32) -> Self {
        TraceRecord::Load { addr, size }
    }

    pub fn store(addr: u64, size: u32) -> Self {
        TraceRecord::Store { addr, size }
    }

    pub fn region(name: impl Into<String>) -> Self {
        TraceRecord::Region { name: name.into() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: syntax error: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: bad hex address `{token}`")]
    BadHex { line: usize, token: String },
    #[error("line {line}: bad size `{token}` (expected 1..={MAX_SIZE})")]
    BadSize { line: usize, token: String },
    #[error("record {record}: {reason}")]
    Binary { record: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TraceError {
    /// 1-based line (text) or record (binary) index, when known.
    pub fn position(&self) -> Option<usize> {
        match self {
            TraceError::Syntax { line, .. } | TraceError::BadHex { line, .. } | TraceError::BadSize { line, .. } => {
                Some(*line)
            }
            TraceError::Binary { record, .. } => Some(*record),
            TraceError::Io(_) => None,
        }
    }
}

fn parse_hex(line: usize, token: &str) -> Result<u64, TraceError> {
    let digits = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")).unwrap_or(token);
    if digits.is_empty() || digits.len() > 16 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(TraceError::BadHex { line, token: token.to_string() });
    }
    u64::from_str_radix(digits, 16).map_err(|_| TraceError::BadHex { line, token: token.to_string() })
}

fn parse_size(line: usize, token: &str) -> Result<u32, TraceError> {
    match token.parse::<u32>() {
        Ok(v) if (1..=MAX_SIZE).contains(&v) => Ok(v),
        _ => Err(TraceError::BadSize { line, token: token.to_string() }),
    }
}

/// Parses one line. Returns `Ok(None)` for blank and comment-only lines.
pub fn parse_line(line_no: usize, raw: &str) -> Result<Option<TraceRecord>, TraceError> {
    let line = raw.split('#').next().unwrap_or("");
    let mut tokens = line.split_whitespace();
    let Some(kind) = tokens.next() else {
        return Ok(None);
    };
    let args: Vec<&str> = tokens.collect();
    let syntax = |reason: &str| TraceError::Syntax { line: line_no, reason: reason.to_string() };
    let record = match (kind, args.as_slice()) {
        ("I", [addr]) => TraceRecord::Inst { addr: parse_hex(line_no, addr)?, ops: 1 },
        ("I", [addr, ops]) => TraceRecord::Inst { addr: parse_hex(line_no, addr)?, ops: parse_size(line_no, ops)? },
        ("I", _) => return Err(syntax("expected `I <hex> [<ops>]`")),
        ("L", [addr, size]) => TraceRecord::Load { addr: parse_hex(line_no, addr)?, size: parse_size(line_no, size)? },
        ("L", _) => return Err(syntax("expected `L <hex> <size>`")),
        ("S", [addr, size]) => TraceRecord::Store { addr: parse_hex(line_no, addr)?, size: parse_size(line_no, size)? },
        ("S", _) => return Err(syntax("expected `S <hex> <size>`")),
        ("B", ["T"]) => TraceRecord::Branch { taken: true },
        ("B", ["N"]) => TraceRecord::Branch { taken: false },
        ("B", _) => return Err(syntax("expected `B T` or `B N`")),
        ("Y", []) => TraceRecord::Syscall,
        ("Y", _) => return Err(syntax("`Y` takes no arguments")),
        ("R", [name]) => TraceRecord::Region { name: (*name).to_string() },
        ("R", _) => return Err(syntax("expected `R <name>`")),
        (other, _) => return Err(syntax(&format!("unknown record kind `{other}`"))),
    };
    Ok(Some(record))
}

/// Streaming reader over the text form.
pub struct TextTraceReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> TextTraceReader<R> {
    pub fn new(reader: R) -> Self {
        TextTraceReader { lines: reader.lines(), line_no: 0 }
    }
}

impl<R: BufRead> Iterator for TextTraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            match parse_line(self.line_no, &line) {
                Ok(Some(record)) => return Some(Ok(record)),
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    TextTraceReader::new(text.as_bytes()).collect()
}

pub fn format_record(record: &TraceRecord) -> String {
    match record {
        TraceRecord::Inst { addr, ops: 1 } => format!("I {addr:x}"),
        TraceRecord::Inst { addr, ops } => format!("I {addr:x} {ops}"),
        TraceRecord::Load { addr, size } => format!("L {addr:x} {size}"),
        TraceRecord::Store { addr, size } => format!("S {addr:x} {size}"),
        TraceRecord::Branch { taken: true } => "B T".to_string(),
        TraceRecord::Branch { taken: false } => "B N".to_string(),
        TraceRecord::Syscall => "Y".to_string(),
        TraceRecord::Region { name } => format!("R {name}"),
    }
}

pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 12);
    for r in records {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    out
}

pub fn write_text<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    Ok(())
}

const BIN_RECORD: usize = 11;

fn check_binary(record: &TraceRecord) -> io::Result<()> {
    let bad = |msg: String| Err(io::Error::new(io::ErrorKind::InvalidInput, msg));
    match record {
        TraceRecord::Inst { ops: v, .. } | TraceRecord::Load { size: v, .. } | TraceRecord::Store { size: v, .. }
            if *v == 0 || *v > MAX_SIZE =>
        {
            bad(format!("size/ops {v} does not fit the binary format"))
        }
        TraceRecord::Region { name } if name.len() > MAX_SIZE as usize => bad("region name too long".to_string()),
        _ => Ok(()),
    }
}

pub fn write_binary<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        check_binary(r)?;
        let (kind, addr, size) = match r {
            TraceRecord::Inst { addr, ops } => (b'I', *addr, *ops as u16),
            TraceRecord::Load { addr, size } => (b'L', *addr, *size as u16),
            TraceRecord::Store { addr, size } => (b'S', *addr, *size as u16),
            TraceRecord::Branch { taken } => (b'B', u64::from(*taken), 0),
            TraceRecord::Syscall => (b'Y', 0, 0),
            TraceRecord::Region { name } => (b'R', 0, name.len() as u16),
        };
        let mut buf = [0u8; BIN_RECORD];
        buf[0] = kind;
        buf[1..9].copy_from_slice(&addr.to_le_bytes());
        buf[9..11].copy_from_slice(&size.to_le_bytes());
        w.write_all(&buf)?;
        if let TraceRecord::Region { name } = r {
            w.write_all(name.as_bytes())?;
        }
    }
    Ok(())
}

/// Streaming reader over the binary form.
pub struct BinaryTraceReader<R> {
    reader: R,
    record: usize,
}

impl<R: Read> BinaryTraceReader<R> {
    pub fn new(reader: R) -> Self {
        BinaryTraceReader { reader, record: 0 }
    }

    fn read_record(&mut self) -> Result<Option<TraceRecord>, TraceError> {
        let mut buf = [0u8; BIN_RECORD];
        let mut filled = 0;
        while filled < BIN_RECORD {
            let n = self.reader.read(&mut buf[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled == 0 {
            return Ok(None);
        }
        self.record += 1;
        let record = self.record;
        let err = |reason: String| TraceError::Binary { record, reason };
        if filled < BIN_RECORD {
            return Err(err(format!("truncated record ({filled} of {BIN_RECORD} bytes)")));
        }
        let addr = u64::from_le_bytes(buf[1..9].try_into().expect("8 bytes"));
        let size = u16::from_le_bytes([buf[9], buf[10]]) as u32;
        let nonzero = |size: u32| if size == 0 { Err(err("zero size".to_string())) } else { Ok(size) };
        Ok(Some(match buf[0] {
            b'I' => TraceRecord::Inst { addr, ops: nonzero(size)? },
            b'L' => TraceRecord::Load { addr, size: nonzero(size)? },
            b'S' => TraceRecord::Store { addr, size: nonzero(size)? },
            b'B' if addr <= 1 => TraceRecord::Branch { taken: addr == 1 },
            b'B' => return Err(err(format!("branch flag {addr} is not 0 or 1"))),
            b'Y' => TraceRecord::Syscall,
            b'R' => {
                let mut name = vec![0u8; size as usize];
                self.reader.read_exact(&mut name).map_err(|_| err("truncated region name".to_string()))?;
                let name = String::from_utf8(name).map_err(|_| err("region name is not UTF-8".to_string()))?;
                TraceRecord::Region { name }
            }
            other => return Err(err(format!("unknown record kind byte 0x{other:02x}"))),
        }))
    }
}

impl<R: Read> Iterator for BinaryTraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_record().transpose()
    }
}

pub fn is_binary_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "ctb")
}

/// Opens a trace file, choosing the binary reader for `.ctb` files.
pub fn open_trace(path: &Path) -> Result<Box<dyn Iterator<Item = Result<TraceRecord, TraceError>>>, TraceError> {
    let file = File::open(path)?;
    if is_binary_path(path) {
        Ok(Box::new(BinaryTraceReader::new(BufReader::new(file))))
    } else {
        Ok(Box::new(TextTraceReader::new(BufReader::new(file))))
    }
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    open_trace(path)?.collect()
}

pub fn write_trace_file(path: &Path, records: &[TraceRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if is_binary_path(path) {
        write_binary(&mut w, records)?;
    } else {
        write_text(&mut w, records)?;
    }
    w.flush()
}

// Generators emit single-byte loads so every record touches exactly one block.

pub fn gen_sequential(start: u64, count: u64, stride: u64) -> Vec<TraceRecord> {
    assert!(stride >= 1, "stride must be >= 1");
    (0..count).map(|i| TraceRecord::load(start.wrapping_add(i * stride), 1)).collect()
}

/// Replays the same `working_set_bytes` region `iterations` times.
pub fn gen_loop(base: u64, working_set_bytes: u64, iterations: u64, stride: u64) -> Vec<TraceRecord> {
    assert!(stride >= 1, "stride must be >= 1");
    let per_pass = working_set_bytes.div_ceil(stride);
    (0..iterations)
        .flat_map(|_| (0..per_pass).map(move |i| TraceRecord::load(base.wrapping_add(i * stride), 1)))
        .collect()
}

/// Uniform loads in `[base, base + range_bytes)`.
pub fn gen_random(seed: u64, base: u64, range_bytes: u64, count: u64) -> Vec<TraceRecord> {
    assert!(range_bytes >= 1, "range must be >= 1 byte");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| TraceRecord::load(base.wrapping_add(rng.random_range(0..range_bytes)), 1)).collect()
}

/// Shape of a synthetic program trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixedParams {
    pub code_base: u64,
    pub code_bytes: u64,
    pub data_base: u64,
    pub data_bytes: u64,
    /// Percent of instructions followed by a load or store.
    pub mem_pct: u32,
    /// Percent of memory references that are stores.
    pub store_pct: u32,
    /// Percent of instructions followed by a branch.
    pub branch_pct: u32,
}

impl Default for MixedParams {
    fn default() -> Self {
        MixedParams {
            code_base: 0x40_0000,
            code_bytes: 16 << 10,
            data_base: 0x1000_0000,
            data_bytes: 64 << 10,
            mem_pct: 40,
            store_pct: 30,
            branch_pct: 15,
        }
    }
}

/// A program-like trace with `insts` instruction fetches. Fetches walk the
/// code region sequentially and jump on taken branches; data references are
/// uniform over the data region with sizes 1, 2, 4 or 8 at any alignment.
pub fn gen_mixed(seed: u64, insts: u64, params: &MixedParams) -> Vec<TraceRecord> {
    assert!(params.code_bytes >= 4 && params.data_bytes >= 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity((insts as usize) * 2);
    let mut pc = 0u64;
    for _ in 0..insts {
        out.push(TraceRecord::Inst { addr: params.code_base + pc, ops: rng.random_range(1..=4) });
        pc = (pc + 4) % params.code_bytes;
        if rng.random_range(0..100) < params.mem_pct {
            let size = 1u32 << rng.random_range(0..4);
            let addr = params.data_base + rng.random_range(0..params.data_bytes - 8);
            if rng.random_range(0..100) < params.store_pct {
                out.push(TraceRecord::store(addr, size));
            } else {
                out.push(TraceRecord::load(addr, size));
            }
        }
        if rng.random_range(0..100) < params.branch_pct {
            let taken = rng.random_bool(0.6);
            out.push(TraceRecord::Branch { taken });
            if taken {
                pc = rng.random_range(0..params.code_bytes / 4) * 4;
            }
        }
    }
    out
}
