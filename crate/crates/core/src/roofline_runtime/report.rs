use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LoopCounters, LoopInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Baseline,
    Instrumented,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Baseline => "baseline",
            Phase::Instrumented => "instrumented",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRecord {
    pub info: LoopInfo,
    pub counters: LoopCounters,
    pub invocations: u64,
    pub wall_time_ns: u64,
    pub phase: Phase,
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    file: String,
    line: u32,
    func: String,
    invocations: u64,
    wall_ns: u64,
    load_bytes: u64,
    store_bytes: u64,
    int_ops: u64,
    fp_ops: u64,
}

#[derive(Serialize, Deserialize)]
struct ReportWire {
    phase: Phase,
    records: Vec<RecordWire>,
}

/// Everything one run of an instrumented program reports at exit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub phase: Phase,
    pub records: Vec<LoopRecord>,
}

impl Serialize for RunReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportWire {
            phase: self.phase,
            records: self
                .records
                .iter()
                .map(|r| RecordWire {
                    file: r.info.filename.clone(),
                    line: r.info.line,
                    func: r.info.func_name.clone(),
                    invocations: r.invocations,
                    wall_ns: r.wall_time_ns,
                    load_bytes: r.counters.load_bytes,
                    store_bytes: r.counters.store_bytes,
                    int_ops: r.counters.int_ops,
                    fp_ops: r.counters.fp_ops,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RunReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = ReportWire::deserialize(d)?;
        let phase = wire.phase;
        Ok(RunReport {
            phase,
            records: wire
                .records
                .into_iter()
                .map(|r| LoopRecord {
                    info: LoopInfo::new(r.line, r.file, r.func),
                    counters: LoopCounters {
                        load_bytes: r.load_bytes,
                        store_bytes: r.store_bytes,
                        int_ops: r.int_ops,
                        fp_ops: r.fp_ops,
                    },
                    invocations: r.invocations,
                    wall_time_ns: r.wall_ns,
                    phase,
                })
                .collect(),
        })
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
