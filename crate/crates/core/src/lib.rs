//! Trace-driven cache hierarchy simulator.
//!
//! Replays instruction and memory reference traces through configurable
//! set-associative caches and TLBs, accounts cycles for a VLIW-style core,
//! and sweeps cache geometries in a single pass using stack distances.

pub mod cache;
pub mod config;
pub mod hierarchy;
pub mod numfmt;
pub mod par;
pub mod report;
pub mod sweep;
pub mod timing;
pub mod trace;

pub use cache::{AccessKind, AccessOutcome, CacheState, CacheStats};
pub use config::{CacheSpec, ConfigError, HierarchySpec, ReplacementPolicy, TimingSpec, VexConfig};
pub use hierarchy::{simulate, Clock, Hierarchy, SimReport};
pub use par::Execution;
pub use report::{export, Format, ReportError};
pub use sweep::{sweep, SweepOptions, SweepPolicy, SweepTable};
pub use timing::{account, CycleReport};
pub use trace::{TraceError, TraceRecord};
