//! Folded stacks, flame graphs and per-function hotspot tables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::{with_deltas, SampleRecord};
use crate::Scalar;

mod flamegraph;
mod fold;
mod symbols;

pub use flamegraph::{render_flamegraph, CANVAS_WIDTH, ROW_HEIGHT};
pub use fold::{fold_stacks, fold_stacks_parallel, parse_collapsed, to_collapsed, FoldedStack};
pub use symbols::{symbolize, unknown_symbol, SymbolRange, Symbolizer};

pub const CYCLES: &str = "cycles";
pub const INSTRUCTIONS: &str = "instructions";

#[derive(Debug, Error)]
pub enum HotspotError {
    #[error("sample at ts {timestamp_ns} has no `{metric}` counter")]
    MetricMissing { metric: String, timestamp_ns: u64 },
    #[error("nothing to render: total weight is zero")]
    EmptyInput,
    #[error("symbol map: {0}")]
    SymbolMap(String),
    #[error("collapsed stacks: malformed line {0}")]
    Collapsed(usize),
}

/// Instructions per cycle; zero when no cycles were counted.
pub fn ipc<T: Scalar>(instructions: u64, cycles: u64) -> T {
    if cycles == 0 {
        T::zero()
    } else {
        T::from_count(instructions) / T::from_count(cycles)
    }
}

/// Self-time (leaf frame) statistics of one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HotspotEntry<T = f64> {
    pub function: String,
    /// Fraction of all sampled cycles spent with this function as the leaf.
    pub total_share: T,
    pub instructions: u64,
    pub cycles: u64,
    pub ipc: T,
}

/// Aggregates cycle and instruction deltas per leaf function, sorted by
/// share (descending, ties by name) and truncated to `top_n`.
pub fn hotspot_table<T: Scalar>(
    samples: &[SampleRecord],
    symbolizer: &Symbolizer,
    top_n: usize,
) -> Result<Vec<HotspotEntry<T>>, HotspotError> {
    for metric in [CYCLES, INSTRUCTIONS] {
        if let Some(s) = samples.iter().find(|s| !s.counter_values.contains_key(metric)) {
            return Err(HotspotError::MetricMissing {
                metric: metric.to_string(),
                timestamp_ns: s.timestamp_ns,
            });
        }
    }

    let mut per_fn: HashMap<String, (u64, u64)> = HashMap::new();
    let mut names: HashMap<u64, String> = HashMap::new();
    let mut total_cycles: u64 = 0;
    for (s, d) in with_deltas(samples) {
        let leaf = s.callchain.first().copied().unwrap_or(s.pc);
        let name = names.entry(leaf).or_insert_with(|| symbolizer.resolve(leaf));
        let cycles = d.get(CYCLES).unwrap_or(0);
        let instructions = d.get(INSTRUCTIONS).unwrap_or(0);
        let slot = per_fn.entry(name.clone()).or_default();
        slot.0 += instructions;
        slot.1 += cycles;
        total_cycles += cycles;
    }

    let mut entries: Vec<HotspotEntry<T>> = per_fn
        .into_iter()
        .map(|(function, (instructions, cycles))| HotspotEntry {
            total_share: if total_cycles == 0 {
                T::zero()
            } else {
                T::from_count(cycles) / T::from_count(total_cycles)
            },
            ipc: ipc(instructions, cycles),
            function,
            instructions,
            cycles,
        })
        .collect();
    // Integer comparison of cycles orders shares exactly.
    entries.sort_by(|a, b| b.cycles.cmp(&a.cycles).then_with(|| a.function.cmp(&b.function)));
    entries.truncate(top_n);
    Ok(entries)
}
