//! Configuration dialects.
//!
//! Two front ends feed one model: SimpleScalar-style colon strings and
//! `-cache:*` / `-tlb:*` flags, and VEX-style `vex.cfg` key/value files with
//! log2-encoded geometry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cache config `{0}` must have exactly five colon-separated fields <name>:<nsets>:<bsize>:<assoc>:<repl>")]
    WrongFieldCount(String),
    #[error("`{field}` must be a power of two >= 1, got {value}")]
    NonPowerOfTwo { field: &'static str, value: u64 },
    #[error("unknown replacement policy `{0}` (expected 'l', 'f' or 'r')")]
    UnknownPolicy(String),
    #[error("`{field}` is not a canonical decimal number: `{text}`")]
    NonNumeric { field: &'static str, text: String },
    #[error("cache name `{0}` must be a non-empty identifier")]
    InvalidName(String),
    #[error("invalid unification: {0}")]
    InvalidUnification(String),
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("flag `{0}` requires a value")]
    MissingValue(String),
    #[error("invalid boolean `{0}` (expected true or false)")]
    InvalidBool(String),
    #[error("vex.cfg line {line}: missing required key `{key}`", line = .line.map_or_else(|| "-".to_string(), |l| l.to_string()))]
    MissingKey { key: &'static str, line: Option<usize> },
    #[error("vex.cfg line {line}: value `{value}` for `{key}` is not numeric")]
    NonNumericValue { key: String, value: String, line: usize },
    #[error("{cache}: geometry underflow, size {size} < line size {bsize} x ways {assoc}")]
    GeometryUnderflow { cache: &'static str, size: u64, bsize: u64, assoc: u64 },
    #[error("lg2 value {value} for `{key}` is out of range")]
    Lg2OutOfRange { key: &'static str, value: u64 },
    #[error("invalid timing parameters: {0}")]
    InvalidTiming(String),
    #[error("two distinct caches are both named `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplacementPolicy {
    Lru,
    Fifo,
    Random,
}

impl ReplacementPolicy {
    pub fn as_char(self) -> char {
        match self {
            ReplacementPolicy::Lru => 'l',
            ReplacementPolicy::Fifo => 'f',
            ReplacementPolicy::Random => 'r',
        }
    }
}

impl FromStr for ReplacementPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l" => Ok(ReplacementPolicy::Lru),
            "f" => Ok(ReplacementPolicy::Fifo),
            "r" => Ok(ReplacementPolicy::Random),
            other => Err(ConfigError::UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for ReplacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Geometry and policy of one cache or TLB. For TLBs `bsize` is the page size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheSpec {
    pub name: String,
    pub nsets: u64,
    pub bsize: u64,
    pub assoc: u64,
    pub repl: ReplacementPolicy,
}

impl CacheSpec {
    pub fn new(
        name: impl Into<String>,
        nsets: u64,
        bsize: u64,
        assoc: u64,
        repl: ReplacementPolicy,
    ) -> Result<Self, ConfigError> {
        let name = name.into();
        validate_name(&name)?;
        check_pow2("nsets", nsets)?;
        check_pow2("bsize", bsize)?;
        check_pow2("assoc", assoc)?;
        Ok(CacheSpec { name, nsets, bsize, assoc, repl })
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.nsets * self.bsize * self.assoc
    }

    pub fn lines(&self) -> u64 {
        self.nsets * self.assoc
    }
}

impl fmt::Display for CacheSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}:{}", self.name, self.nsets, self.bsize, self.assoc, self.repl)
    }
}

impl FromStr for CacheSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_cache_spec(s)
    }
}

fn validate_name(name: &str) -> Result<(), ConfigError> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(ConfigError::InvalidName(name.to_string()))
    }
}

fn check_pow2(field: &'static str, value: u64) -> Result<(), ConfigError> {
    if value.is_power_of_two() {
        Ok(())
    } else {
        Err(ConfigError::NonPowerOfTwo { field, value })
    }
}

// Leading zeros and signs are rejected so that every accepted string renders
// back to itself.
fn parse_field(field: &'static str, text: &str) -> Result<u64, ConfigError> {
    let canonical =
        !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) && (text == "0" || !text.starts_with('0'));
    if !canonical {
        return Err(ConfigError::NonNumeric { field, text: text.to_string() });
    }
    text.parse::<u64>().map_err(|_| ConfigError::NonNumeric { field, text: text.to_string() })
}

/// Parses `<name>:<nsets>:<bsize>:<assoc>:<repl>`.
pub fn parse_cache_spec(text: &str) -> Result<CacheSpec, ConfigError> {
    let fields: Vec<&str> = text.split(':').collect();
    if fields.len() != 5 {
        return Err(ConfigError::WrongFieldCount(text.to_string()));
    }
    let name = fields[0];
    validate_name(name)?;
    let nsets = parse_field("nsets", fields[1])?;
    check_pow2("nsets", nsets)?;
    let bsize = parse_field("bsize", fields[2])?;
    check_pow2("bsize", bsize)?;
    let assoc = parse_field("assoc", fields[3])?;
    check_pow2("assoc", assoc)?;
    let repl = fields[4].parse()?;
    Ok(CacheSpec { name: name.to_string(), nsets, bsize, assoc, repl })
}

/// The data-side levels an instruction level can be pointed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataLevel {
    Dl1,
    Dl2,
}

impl DataLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            DataLevel::Dl1 => "dl1",
            DataLevel::Dl2 => "dl2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheBinding {
    Configured(CacheSpec),
    None,
    UnifiedWith(DataLevel),
}

impl CacheBinding {
    pub fn spec(&self) -> Option<&CacheSpec> {
        match self {
            CacheBinding::Configured(spec) => Some(spec),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, CacheBinding::None)
    }
}

impl fmt::Display for CacheBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheBinding::Configured(spec) => spec.fmt(f),
            CacheBinding::None => f.write_str("none"),
            CacheBinding::UnifiedWith(level) => f.write_str(level.as_str()),
        }
    }
}

pub const DEFAULT_DL1: &str = "dl1:256:32:1:l";
pub const DEFAULT_DL2: &str = "ul2:1024:64:4:l";
pub const DEFAULT_IL1: &str = "il1:256:32:1:l";
pub const DEFAULT_IL2: &str = "dl2";
pub const DEFAULT_ITLB: &str = "itlb:16:4096:4:l";
pub const DEFAULT_DTLB: &str = "dtlb:32:4096:4:l";

/// The full two-level cache plus TLB configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub il1: CacheBinding,
    pub il2: CacheBinding,
    pub dl1: CacheBinding,
    pub dl2: CacheBinding,
    pub itlb: CacheBinding,
    pub dtlb: CacheBinding,
    pub flush_on_syscall: bool,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        let spec = |s: &str| CacheBinding::Configured(parse_cache_spec(s).expect("default config"));
        HierarchySpec {
            il1: spec(DEFAULT_IL1),
            il2: CacheBinding::UnifiedWith(DataLevel::Dl2),
            dl1: spec(DEFAULT_DL1),
            dl2: spec(DEFAULT_DL2),
            itlb: spec(DEFAULT_ITLB),
            dtlb: spec(DEFAULT_DTLB),
            flush_on_syscall: false,
        }
    }
}

impl HierarchySpec {
    /// Only L1 instruction and data caches, no L2 and no TLBs.
    pub fn split_l1(icache: CacheSpec, dcache: CacheSpec) -> Self {
        HierarchySpec {
            il1: CacheBinding::Configured(icache),
            il2: CacheBinding::None,
            dl1: CacheBinding::Configured(dcache),
            dl2: CacheBinding::None,
            itlb: CacheBinding::None,
            dtlb: CacheBinding::None,
            flush_on_syscall: false,
        }
    }

    /// Checks the cross-level rules. `parse_hierarchy_args` always calls this;
    /// hand-built specs should too.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (label, binding) in [("dl1", &self.dl1), ("dl2", &self.dl2), ("itlb", &self.itlb), ("dtlb", &self.dtlb)] {
            if let CacheBinding::UnifiedWith(level) = binding {
                return Err(ConfigError::InvalidUnification(format!(
                    "{label} cannot be pointed at {}",
                    level.as_str()
                )));
            }
        }
        if self.dl2.spec().is_some() && self.dl1.is_none() {
            return Err(ConfigError::InvalidUnification("dl2 is configured but dl1 is none".to_string()));
        }
        if self.il2.spec().is_some() && self.il1.is_none() {
            return Err(ConfigError::InvalidUnification("il2 is configured but il1 is none".to_string()));
        }
        if let CacheBinding::UnifiedWith(DataLevel::Dl1) = self.il2 {
            return Err(ConfigError::InvalidUnification("il2 can only be pointed at dl2".to_string()));
        }
        match &self.il1 {
            CacheBinding::UnifiedWith(DataLevel::Dl1) => {
                if self.dl1.is_none() {
                    return Err(ConfigError::InvalidUnification("il1 points at dl1 but dl1 is none".to_string()));
                }
                // A unified L1 misses into whatever backs dl1.
                if self.il2.spec().is_some() {
                    return Err(ConfigError::InvalidUnification(
                        "il1 is unified with dl1, so il2 must be dl2 or none".to_string(),
                    ));
                }
            }
            CacheBinding::UnifiedWith(DataLevel::Dl2) => {
                if self.dl2.is_none() {
                    return Err(ConfigError::InvalidUnification("il1 points at dl2 but dl2 is none".to_string()));
                }
                if self.il2.spec().is_some() {
                    return Err(ConfigError::InvalidUnification(
                        "il1 is unified with dl2, so il2 must be dl2 or none".to_string(),
                    ));
                }
            }
            _ => {}
        }
        if self.il1.spec().is_some() {
            if let CacheBinding::UnifiedWith(DataLevel::Dl2) = self.il2 {
                if self.dl2.is_none() {
                    return Err(ConfigError::InvalidUnification("il2 points at dl2 but dl2 is none".to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Names recognised by [`parse_hierarchy_args`], in help-text order.
pub const HIERARCHY_FLAGS: [&str; 7] =
    ["-cache:dl1", "-cache:dl2", "-cache:il1", "-cache:il2", "-tlb:itlb", "-tlb:dtlb", "-flush"];

fn level_name(value: &str) -> Option<&'static str> {
    ["il1", "il2", "dl1", "dl2", "itlb", "dtlb"].into_iter().find(|l| *l == value)
}

fn parse_binding(flag: &str, value: &str) -> Result<CacheBinding, ConfigError> {
    if value == "none" {
        return Ok(CacheBinding::None);
    }
    if let Some(level) = level_name(value) {
        let allowed: &[(&str, DataLevel)] = match flag {
            "-cache:il1" => &[("dl1", DataLevel::Dl1), ("dl2", DataLevel::Dl2)],
            "-cache:il2" => &[("dl2", DataLevel::Dl2)],
            _ => &[],
        };
        return allowed
            .iter()
            .find(|(name, _)| *name == level)
            .map(|(_, l)| CacheBinding::UnifiedWith(*l))
            .ok_or_else(|| ConfigError::InvalidUnification(format!("{flag} cannot be pointed at {level}")));
    }
    parse_cache_spec(value).map(CacheBinding::Configured)
}

pub fn parse_bool(value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::InvalidBool(other.to_string())),
    }
}

/// Parses SimpleScalar hierarchy flags given as `flag value` pairs. Flags not
/// given keep their sim-cache defaults.
pub fn parse_hierarchy_args<S: AsRef<str>>(args: &[S]) -> Result<HierarchySpec, ConfigError> {
    let mut spec = HierarchySpec::default();
    let mut it = args.iter().map(AsRef::as_ref);
    while let Some(flag) = it.next() {
        if !HIERARCHY_FLAGS.contains(&flag) {
            return Err(ConfigError::UnknownFlag(flag.to_string()));
        }
        let value = it.next().ok_or_else(|| ConfigError::MissingValue(flag.to_string()))?;
        match flag {
            "-flush" => spec.flush_on_syscall = parse_bool(value)?,
            _ => {
                let binding = parse_binding(flag, value)?;
                let slot = match flag {
                    "-cache:dl1" => &mut spec.dl1,
                    "-cache:dl2" => &mut spec.dl2,
                    "-cache:il1" => &mut spec.il1,
                    "-cache:il2" => &mut spec.il2,
                    "-tlb:itlb" => &mut spec.itlb,
                    "-tlb:dtlb" => &mut spec.dtlb,
                    _ => unreachable!(),
                };
                *slot = binding;
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Cycle model parameters shared by both dialects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingSpec {
    pub core_clk_mhz: u64,
    pub bus_clk_mhz: u64,
    pub miss_penalty: u64,
    pub wb_penalty: u64,
    pub icache_penalty: u64,
    pub branch_stall: u64,
    pub tlb_lat: u64,
    pub mem_lat_first: u64,
    pub mem_lat_next: u64,
    pub mem_width: u64,
    pub num_caches: u64,
}

impl Default for TimingSpec {
    // sim-outorder's memory defaults for the SimpleScalar side, the vex.cfg
    // example values for the VEX side.
    fn default() -> Self {
        TimingSpec {
            core_clk_mhz: 1000,
            bus_clk_mhz: 500,
            miss_penalty: 36,
            wb_penalty: 33,
            icache_penalty: 45,
            branch_stall: 1,
            tlb_lat: 30,
            mem_lat_first: 18,
            mem_lat_next: 2,
            mem_width: 8,
            num_caches: 1,
        }
    }
}

impl TimingSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bus_clk_mhz == 0 {
            return Err(ConfigError::InvalidTiming("bus clock must be > 0".to_string()));
        }
        if self.core_clk_mhz < self.bus_clk_mhz {
            return Err(ConfigError::InvalidTiming(format!(
                "core clock {} MHz is slower than bus clock {} MHz",
                self.core_clk_mhz, self.bus_clk_mhz
            )));
        }
        if !self.mem_width.is_power_of_two() {
            return Err(ConfigError::InvalidTiming(format!(
                "memory bus width {} is not a power of two",
                self.mem_width
            )));
        }
        Ok(())
    }
}

/// Everything decoded from a `vex.cfg` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VexConfig {
    pub dcache: CacheSpec,
    pub icache: CacheSpec,
    pub timing: TimingSpec,
    /// Keys that were recognised syntactically but have no model behind them.
    pub ignored_keys: Vec<String>,
}

const VEX_NUMERIC_KEYS: [&str; 20] = [
    "CoreCkFreq",
    "BusCkFreq",
    "lg2CacheSize",
    "lg2Sets",
    "lg2LineSize",
    "MissPenalty",
    "WBPenalty",
    "lg2ICacheSize",
    "lg2ICacheSets",
    "lg2ICacheLineSize",
    "ICachePenalty",
    "NumCaches",
    "BranchStall",
    // Memory-side extensions so the SimpleScalar latency model can be driven
    // from the same file.
    "MemLatFirst",
    "MemLatNext",
    "MemWidth",
    "TlbLat",
    // Parsed for validation only.
    "lg2StrSize",
    "lg2StrSets",
    "lg2StrLineSize",
];

const VEX_REQUIRED_KEYS: [&str; 10] = [
    "CoreCkFreq",
    "BusCkFreq",
    "lg2CacheSize",
    "lg2Sets",
    "lg2LineSize",
    "MissPenalty",
    "lg2ICacheSize",
    "lg2ICacheSets",
    "lg2ICacheLineSize",
    "ICachePenalty",
];

const MAX_LG2: u64 = 40;

fn vex_geometry(
    cache: &'static str,
    values: &std::collections::HashMap<&str, u64>,
    keys: [&'static str; 3],
) -> Result<CacheSpec, ConfigError> {
    let mut lg2 = [0u64; 3];
    for (slot, key) in lg2.iter_mut().zip(keys) {
        let value = values[key];
        if value > MAX_LG2 {
            return Err(ConfigError::Lg2OutOfRange { key, value });
        }
        *slot = value;
    }
    let size = 1u64 << lg2[0];
    let assoc = 1u64 << lg2[1];
    let bsize = 1u64 << lg2[2];
    if lg2[0] < lg2[1] + lg2[2] {
        return Err(ConfigError::GeometryUnderflow { cache, size, bsize, assoc });
    }
    let nsets = size / (bsize * assoc);
    CacheSpec::new(cache, nsets, bsize, assoc, ReplacementPolicy::Lru)
}

/// Parses a `vex.cfg` file. `lg2Sets` / `lg2ICacheSets` give the number of
/// ways; the index-set count is derived from size, line size and ways.
pub fn parse_vex_cfg(text: &str) -> Result<VexConfig, ConfigError> {
    use std::collections::HashMap;

    let mut values: HashMap<&str, u64> = HashMap::new();
    let mut ignored = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().expect("non-empty line");
        let value = parts.next();
        match VEX_NUMERIC_KEYS.iter().find(|k| **k == key) {
            Some(&known) => {
                let value = value.ok_or(ConfigError::MissingKey { key: known, line: Some(line_no) })?;
                let parsed = value.parse::<u64>().map_err(|_| ConfigError::NonNumericValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    line: line_no,
                })?;
                values.insert(known, parsed);
            }
            None => {
                log::warn!("vex.cfg line {line_no}: ignoring unsupported key `{key}`");
                ignored.push(key.to_string());
            }
        }
    }
    for key in VEX_REQUIRED_KEYS {
        if !values.contains_key(key) {
            return Err(ConfigError::MissingKey { key, line: None });
        }
    }

    let dcache = vex_geometry("dcache", &values, ["lg2CacheSize", "lg2Sets", "lg2LineSize"])?;
    let icache = vex_geometry("icache", &values, ["lg2ICacheSize", "lg2ICacheSets", "lg2ICacheLineSize"])?;

    let defaults = TimingSpec::default();
    let get = |key: &str, default: u64| values.get(key).copied().unwrap_or(default);
    let timing = TimingSpec {
        core_clk_mhz: values["CoreCkFreq"],
        bus_clk_mhz: values["BusCkFreq"],
        miss_penalty: values["MissPenalty"],
        wb_penalty: get("WBPenalty", 0),
        icache_penalty: values["ICachePenalty"],
        branch_stall: get("BranchStall", 0),
        tlb_lat: get("TlbLat", defaults.tlb_lat),
        mem_lat_first: get("MemLatFirst", defaults.mem_lat_first),
        mem_lat_next: get("MemLatNext", defaults.mem_lat_next),
        mem_width: get("MemWidth", defaults.mem_width),
        num_caches: get("NumCaches", 1),
    };
    timing.validate()?;
    Ok(VexConfig { dcache, icache, timing, ignored_keys: ignored })
}
