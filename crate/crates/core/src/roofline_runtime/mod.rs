//! Runtime linked into instrumented programs.
//!
//! Instrumented call sites bracket each outlined loop nest with
//! begin/end notifications and, in the instrumented clone, report per-block
//! memory and arithmetic tallies through [`Runtime::add_counts`]. Counts
//! accumulate in the calling thread's open frame and are merged into the
//! shared registry when the frame closes. At exit the registry is written as
//! a [`RunReport`].
//!
//! Behaviour is driven by three environment variables:
//! `MPERF_ROOFLINE_MODE` (`baseline` or `instrumented`),
//! `MPERF_ROOFLINE_FILTER` (comma separated `<file>:<line>` keys) and
//! `MPERF_ROOFLINE_OUT` (report path).

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub mod ffi;
mod report;

pub use report::{LoopRecord, Phase, RunReport};

pub const MODE_ENV: &str = "MPERF_ROOFLINE_MODE";
pub const FILTER_ENV: &str = "MPERF_ROOFLINE_FILTER";
pub const OUT_ENV: &str = "MPERF_ROOFLINE_OUT";

/// Source identity of an instrumented loop nest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoopInfo {
    pub line: u32,
    pub filename: String,
    pub func_name: String,
}

impl LoopInfo {
    pub fn new(line: u32, filename: impl Into<String>, func_name: impl Into<String>) -> Self {
        Self {
            line,
            filename: filename.into(),
            func_name: func_name.into(),
        }
    }

    /// `func@file:line`
    pub fn label(&self) -> String {
        format!("{}@{}:{}", self.func_name, self.filename, self.line)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopCounters {
    pub load_bytes: u64,
    pub store_bytes: u64,
    pub int_ops: u64,
    pub fp_ops: u64,
}

impl LoopCounters {
    pub fn new(load_bytes: u64, store_bytes: u64, int_ops: u64, fp_ops: u64) -> Self {
        Self {
            load_bytes,
            store_bytes,
            int_ops,
            fp_ops,
        }
    }

    pub fn add(&mut self, other: &LoopCounters) {
        self.load_bytes += other.load_bytes;
        self.store_bytes += other.store_bytes;
        self.int_ops += other.int_ops;
        self.fp_ops += other.fp_ops;
    }

    pub fn traffic_bytes(&self) -> u64 {
        self.load_bytes + self.store_bytes
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// `<filename>:<line>` keys, exact match.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopFilter(Vec<(String, u32)>);

impl LoopFilter {
    pub fn parse(list: &str) -> Self {
        LoopFilter(
            list.split(',')
                .filter_map(|k| {
                    let (file, line) = k.trim().rsplit_once(':')?;
                    Some((file.to_string(), line.trim().parse().ok()?))
                })
                .collect(),
        )
    }

    pub fn matches(&self, info: &LoopInfo) -> bool {
        self.0.iter().any(|(f, l)| *l == info.line && *f == info.filename)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub phase: Phase,
    pub filter: Option<LoopFilter>,
    pub out_path: PathBuf,
}

impl RuntimeConfig {
    pub fn from_env() -> Self {
        let phase = match std::env::var(MODE_ENV).as_deref() {
            Ok("instrumented") => Phase::Instrumented,
            _ => Phase::Baseline,
        };
        let filter = std::env::var(FILTER_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(|s| LoopFilter::parse(&s));
        let out_path = std::env::var_os(OUT_ENV)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("./mperf_roofline_{}.json", std::process::id())));
        Self {
            phase,
            filter,
            out_path,
        }
    }
}

/// Opaque token naming one open loop region on one thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LoopHandle(u64);

impl LoopHandle {
    pub fn to_raw(self) -> u64 {
        self.0
    }

    pub fn from_raw(raw: u64) -> Self {
        LoopHandle(raw)
    }
}

struct Frame {
    token: u64,
    loop_id: usize,
    start: Instant,
    counters: LoopCounters,
    instrumented: bool,
}

struct Slot {
    info: LoopInfo,
    counters: LoopCounters,
    invocations: u64,
    wall_ns: u64,
    selected: bool,
}

#[derive(Default)]
struct Registry {
    index: HashMap<LoopInfo, usize>,
    slots: Vec<Slot>,
}

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);
static NEXT_RUNTIME: AtomicU64 = AtomicU64::new(1);

thread_local! {
    /// Open frames per runtime instance on this thread.
    static STACKS: RefCell<Vec<(u64, Vec<Frame>)>> = const { RefCell::new(Vec::new()) };
}

fn with_stack<R>(runtime: u64, f: impl FnOnce(&mut Vec<Frame>) -> R) -> R {
    STACKS.with(|s| {
        let mut stacks = s.borrow_mut();
        let idx = match stacks.iter().position(|(id, _)| *id == runtime) {
            Some(i) => i,
            None => {
                stacks.push((runtime, Vec::new()));
                stacks.len() - 1
            }
        };
        f(&mut stacks[idx].1)
    })
}

pub struct Runtime {
    id: u64,
    config: RuntimeConfig,
    registry: Mutex<Registry>,
    misuse: AtomicU64,
    finalized: AtomicBool,
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Self {
        Self {
            id: NEXT_RUNTIME.fetch_add(1, Ordering::Relaxed),
            config,
            registry: Mutex::new(Registry::default()),
            misuse: AtomicU64::new(0),
            finalized: AtomicBool::new(false),
        }
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    fn registry(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn misused(&self, what: &str) {
        let n = self.misuse.fetch_add(1, Ordering::Relaxed) + 1;
        if n <= 16 {
            eprintln!("mperf roofline runtime: {what}");
        }
    }

    /// Runtime-misuse diagnostics seen so far (stale handles, out-of-order ends).
    pub fn misuse_count(&self) -> u64 {
        self.misuse.load(Ordering::Relaxed)
    }

    pub fn registry_len(&self) -> usize {
        self.registry().slots.len()
    }

    pub fn notify_loop_begin(&self, line: u32, filename: &str, func_name: &str) -> LoopHandle {
        let (loop_id, selected) = {
            let mut reg = self.registry();
            let key = LoopInfo::new(line, filename, func_name);
            match reg.index.get(&key) {
                Some(&id) => (id, reg.slots[id].selected),
                None => {
                    let selected = self.config.phase == Phase::Instrumented
                        && self.config.filter.as_ref().is_none_or(|f| f.matches(&key));
                    let id = reg.slots.len();
                    reg.index.insert(key.clone(), id);
                    reg.slots.push(Slot {
                        info: key,
                        counters: LoopCounters::default(),
                        invocations: 0,
                        wall_ns: 0,
                        selected,
                    });
                    (id, selected)
                }
            }
        };
        let token = NEXT_TOKEN.fetch_add(1, Ordering::Relaxed);
        with_stack(self.id, |stack| {
            stack.push(Frame {
                token,
                loop_id,
                start: Instant::now(),
                counters: LoopCounters::default(),
                instrumented: selected,
            })
        });
        LoopHandle(token)
    }

    /// Whether the innermost open loop on this thread should run its
    /// instrumented clone.
    pub fn is_instrumented_profiling(&self) -> bool {
        if self.config.phase != Phase::Instrumented {
            return false;
        }
        with_stack(self.id, |stack| {
            stack.last().map_or(self.config.filter.is_none(), |f| f.instrumented)
        })
    }

    pub fn add_counts(&self, handle: LoopHandle, load_bytes: u64, store_bytes: u64, int_ops: u64, fp_ops: u64) {
        if self.config.phase != Phase::Instrumented {
            return;
        }
        let found = with_stack(self.id, |stack| {
            match stack.iter_mut().rev().find(|f| f.token == handle.0) {
                Some(f) => {
                    f.counters.load_bytes += load_bytes;
                    f.counters.store_bytes += store_bytes;
                    f.counters.int_ops += int_ops;
                    f.counters.fp_ops += fp_ops;
                    true
                }
                None => false,
            }
        });
        if !found {
            self.misused("add_counts on a handle that is not open on this thread; counts dropped");
        }
    }

    pub fn notify_loop_end(&self, handle: LoopHandle) {
        let frame = with_stack(self.id, |stack| {
            let pos = stack.iter().rposition(|f| f.token == handle.0)?;
            let innermost = pos + 1 == stack.len();
            Some((stack.remove(pos), innermost))
        });
        let Some((frame, innermost)) = frame else {
            self.misused("loop end with a stale or foreign handle");
            return;
        };
        if !innermost {
            self.misused("loop end out of LIFO order; closing the named region anyway");
        }
        let elapsed = (frame.start.elapsed().as_nanos() as u64).max(1);
        let mut reg = self.registry();
        let slot = &mut reg.slots[frame.loop_id];
        slot.invocations += 1;
        slot.wall_ns += elapsed;
        if frame.instrumented {
            slot.counters.add(&frame.counters);
        }
    }

    /// Records for every loop closed at least once, ordered by key.
    pub fn snapshot(&self) -> RunReport {
        let reg = self.registry();
        let mut records: Vec<LoopRecord> = reg
            .slots
            .iter()
            .filter(|s| s.invocations > 0)
            .map(|s| LoopRecord {
                info: s.info.clone(),
                counters: match self.config.phase {
                    Phase::Baseline => LoopCounters::default(),
                    Phase::Instrumented => s.counters,
                },
                invocations: s.invocations,
                wall_time_ns: s.wall_ns,
                phase: self.config.phase,
            })
            .collect();
        records.sort_by(|a, b| {
            (&a.info.filename, a.info.line, &a.info.func_name).cmp(&(&b.info.filename, b.info.line, &b.info.func_name))
        });
        RunReport {
            phase: self.config.phase,
            records,
        }
    }

    /// Writes the report once; later calls return `Ok(None)`. When the
    /// file cannot be written the report goes to stderr instead.
    pub fn finalize_report(&self) -> std::io::Result<Option<PathBuf>> {
        if self.finalized.swap(true, Ordering::SeqCst) {
            return Ok(None);
        }
        let json = self.snapshot().to_json();
        match std::fs::write(&self.config.out_path, &json) {
            Ok(()) => Ok(Some(self.config.out_path.clone())),
            Err(e) => {
                eprintln!(
                    "mperf roofline runtime: cannot write {}: {e}; report follows",
                    self.config.out_path.display()
                );
                eprintln!("{json}");
                Err(e)
            }
        }
    }
}
