//! Counter-group planning and sample sessions.

use std::path::PathBuf;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(target_os = "linux")]
pub mod live;
mod plan;
mod replay;

pub use plan::{
    plan_groups, plan_groups_with_budget, EventRequest, GroupPlan, DEFAULT_COUNTER_BUDGET, DEFAULT_SAMPLE_FREQUENCY_HZ,
    MAX_SAMPLE_FREQUENCY_HZ,
};
pub use replay::{write_trace, write_trace_line, ReplaySession};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("no events requested")]
    EmptyRequest,
    #[error("sample frequency {0} Hz outside [1, 100000]")]
    InvalidFrequency(u32),
    #[error("all sampled events must share one frequency ({0} Hz vs {1} Hz)")]
    FrequencyMismatch(u32, u32),
    #[error("sampling is not supported on {platform} ({detail}); sampling requires counter overflow interrupts")]
    SamplingUnsupported { platform: String, detail: String },
    #[error("permission denied opening perf events (perf_event_paranoid = {paranoid})")]
    PermissionDenied { paranoid: String },
    #[error("sampling backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("trace format error at line {line}: {reason}")]
    TraceFormatError { line: usize, reason: String },
    #[error("corrupt record at line {line}: {reason}")]
    RecordCorrupt { line: usize, reason: String },
    #[error("records belong to different threads ({0} vs {1})")]
    TidMismatch(i32, i32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SamplingError {
    /// Errors after which a session can keep producing records.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, SamplingError::RecordCorrupt { .. })
    }
}

/// One decoded sample. Also the line format of replay traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(rename = "ts")]
    pub timestamp_ns: u64,
    pub pid: i32,
    pub tid: i32,
    pub pc: u64,
    /// Leaf first.
    #[serde(rename = "stack")]
    pub callchain: Vec<u64>,
    /// Cumulative group read at sample time.
    #[serde(rename = "counters")]
    pub counter_values: IndexMap<String, u64>,
    /// Optional `"<hex-addr>": "name"` symbol hints carried by the trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syms: Option<IndexMap<String, String>>,
}

/// Result of [`delta_counters`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CounterDeltas {
    pub values: IndexMap<String, u64>,
    /// Set when some counter went backwards; its delta was clamped to 0.
    pub reset: bool,
}

impl CounterDeltas {
    pub fn get(&self, event: &str) -> Option<u64> {
        self.values.get(event).copied()
    }
}

/// Per-event `cur - prev`. Events absent from `prev` count from zero.
pub fn delta_counters(prev: &SampleRecord, cur: &SampleRecord) -> Result<CounterDeltas, SamplingError> {
    if prev.tid != cur.tid {
        return Err(SamplingError::TidMismatch(prev.tid, cur.tid));
    }
    Ok(delta_from(Some(&prev.counter_values), &cur.counter_values))
}

pub(crate) fn delta_from(prev: Option<&IndexMap<String, u64>>, cur: &IndexMap<String, u64>) -> CounterDeltas {
    let mut out = CounterDeltas::default();
    for (name, &value) in cur {
        let before = prev.and_then(|p| p.get(name)).copied().unwrap_or(0);
        let delta = match value.checked_sub(before) {
            Some(d) => d,
            None => {
                out.reset = true;
                0
            }
        };
        out.values.insert(name.clone(), delta);
    }
    out
}

/// Walks a sample stream and yields each record with its deltas against
/// the previous record of the same thread (zero baseline for the first).
pub fn with_deltas(samples: &[SampleRecord]) -> Vec<(&SampleRecord, CounterDeltas)> {
    let mut last: std::collections::HashMap<i32, &SampleRecord> = Default::default();
    samples
        .iter()
        .map(|s| {
            let prev = last.insert(s.tid, s);
            let d = delta_from(prev.map(|p| &p.counter_values), &s.counter_values);
            (s, d)
        })
        .collect()
}

/// Whole-run totals: the sum over threads of each thread's last cumulative
/// value.
pub fn run_totals(samples: &[SampleRecord]) -> IndexMap<String, u64> {
    let mut totals: IndexMap<String, u64> = IndexMap::new();
    for (_, d) in with_deltas(samples) {
        for (name, v) in d.values {
            *totals.entry(name).or_default() += v;
        }
    }
    totals
}

/// Process to profile with the live backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Command(Vec<String>),
    Pid(i32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Live,
    Replay(PathBuf),
}

/// Counters a session keeps about records it did not pass through cleanly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub emitted: u64,
    pub corrupt: u64,
    pub equal_timestamp_warnings: u64,
    pub lost: u64,
}

pub enum Session {
    Replay(ReplaySession),
    #[cfg(target_os = "linux")]
    Live(live::LiveSession),
}

/// Opens a session yielding records in timestamp order.
pub fn open_session(plan: &GroupPlan, target: &Target, backend: &Backend) -> Result<Session, SamplingError> {
    let required: Vec<String> = plan.event_names().into_iter().map(String::from).collect();
    match backend {
        Backend::Replay(path) => Ok(Session::Replay(ReplaySession::open(path, Some(required))?)),
        #[cfg(target_os = "linux")]
        Backend::Live => Ok(Session::Live(live::LiveSession::open(plan, target)?)),
        #[cfg(not(target_os = "linux"))]
        Backend::Live => {
            let _ = target;
            Err(SamplingError::BackendUnavailable(
                "the live backend needs Linux perf events".into(),
            ))
        }
    }
}

impl Session {
    /// `Ok(None)` is end of stream. [`SamplingError::RecordCorrupt`] is
    /// recoverable: the record is skipped and counted, and the next call
    /// continues with the following record.
    pub fn next_sample(&mut self) -> Result<Option<SampleRecord>, SamplingError> {
        match self {
            Session::Replay(s) => s.next_sample(),
            #[cfg(target_os = "linux")]
            Session::Live(s) => s.next_sample(),
        }
    }

    pub fn stats(&self) -> SessionStats {
        match self {
            Session::Replay(s) => s.stats(),
            #[cfg(target_os = "linux")]
            Session::Live(s) => s.stats(),
        }
    }

    /// Drains the session, skipping corrupt records.
    pub fn collect(&mut self) -> Result<Vec<SampleRecord>, SamplingError> {
        let mut out = Vec::new();
        loop {
            match self.next_sample() {
                Ok(Some(r)) => out.push(r),
                Ok(None) => return Ok(out),
                Err(e) if e.is_recoverable() => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tid: i32, counters: &[(&str, u64)]) -> SampleRecord {
        SampleRecord {
            timestamp_ns: 0,
            pid: 1,
            tid,
            pc: 0x1000,
            callchain: vec![0x1000],
            counter_values: counters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            syms: None,
        }
    }

    #[test]
    fn deltas_subtract() {
        let prev = rec(1, &[("cycles", 1000), ("instructions", 900)]);
        let cur = rec(1, &[("cycles", 1500), ("instructions", 1330)]);
        let d = delta_counters(&prev, &cur).unwrap();
        assert_eq!(d.get("cycles"), Some(500));
        assert_eq!(d.get("instructions"), Some(430));
        assert!(!d.reset);
    }

    #[test]
    fn identical_records_give_zero() {
        let r = rec(1, &[("cycles", 77), ("instructions", 5)]);
        let d = delta_counters(&r, &r).unwrap();
        assert!(d.values.values().all(|&v| v == 0));
        assert!(!d.reset);
    }

    #[test]
    fn counter_reset_clamps() {
        let prev = rec(1, &[("cycles", 1000), ("instructions", 900)]);
        let cur = rec(1, &[("cycles", 10), ("instructions", 1000)]);
        let d = delta_counters(&prev, &cur).unwrap();
        assert_eq!(d.get("cycles"), Some(0));
        assert_eq!(d.get("instructions"), Some(100));
        assert!(d.reset);
    }

    #[test]
    fn tid_mismatch() {
        let a = rec(1, &[("cycles", 1)]);
        let b = rec(2, &[("cycles", 2)]);
        assert!(matches!(delta_counters(&a, &b), Err(SamplingError::TidMismatch(1, 2))));
    }

    #[test]
    fn totals_sum_threads() {
        let s = vec![
            rec(1, &[("cycles", 10)]),
            rec(2, &[("cycles", 5)]),
            rec(1, &[("cycles", 30)]),
            rec(2, &[("cycles", 6)]),
        ];
        assert_eq!(run_totals(&s)["cycles"], 36);
    }
}
